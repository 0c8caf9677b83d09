use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParamTensor, Role};
use crate::Scalar;

use super::{adam_step, muon_step, AdamSpec, AdamState, MuonSpec, MuonState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    MuonGroup,
    AdamGroup,
}

impl ParamGroup {
    fn label(self) -> &'static str {
        match self {
            ParamGroup::MuonGroup => "Muon",
            ParamGroup::AdamGroup => "Adam",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamGroupAssignment {
    pub param_name: String,
    pub group: ParamGroup,
}

/// Hidden 2D weight matrices go to Muon; biases, LayerNorm parameters,
/// embeddings and output heads go to Adam.
pub fn classify_params<T: Scalar>(params: &[ParamTensor<T>]) -> Result<Vec<ParamGroupAssignment>> {
    params
        .iter()
        .map(|p| {
            let group = match p.role {
                Role::HiddenMatrix => {
                    if !p.value.is_matrix() {
                        return Err(Error::NotMatrix {
                            name: p.name.clone(),
                            shape: p.value.shape().to_vec(),
                        });
                    }
                    ParamGroup::MuonGroup
                }
                Role::Bias
                | Role::LayerNormGain
                | Role::LayerNormBias
                | Role::Embedding
                | Role::PositionalEmbedding
                | Role::OutputHead => ParamGroup::AdamGroup,
            };
            Ok(ParamGroupAssignment {
                param_name: p.name.clone(),
                group,
            })
        })
        .collect()
}

/// Every parameter in the Adam group, for plain Adam/AdamW runs.
pub fn all_adam<T: Scalar>(params: &[ParamTensor<T>]) -> Vec<ParamGroupAssignment> {
    params
        .iter()
        .map(|p| ParamGroupAssignment {
            param_name: p.name.clone(),
            group: ParamGroup::AdamGroup,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ParamState<T> {
    Adam(AdamState<T>),
    Muon(MuonState<T>),
}

impl<T> ParamState<T> {
    fn label(&self) -> &'static str {
        match self {
            ParamState::Adam(_) => "Adam",
            ParamState::Muon(_) => "Muon",
        }
    }
}

/// Fresh optimizer state for every parameter, matching its group.
pub fn init_states<T: Scalar>(
    params: &[ParamTensor<T>],
    assignments: &[ParamGroupAssignment],
) -> Result<BTreeMap<String, ParamState<T>>> {
    let groups = group_map(assignments);
    let mut states = BTreeMap::new();
    for p in params {
        let group = *groups
            .get(p.name.as_str())
            .ok_or_else(|| Error::MissingState(p.name.clone()))?;
        let state = match group {
            ParamGroup::AdamGroup => ParamState::Adam(AdamState::new(p.value.shape())),
            ParamGroup::MuonGroup => match p.value.shape()[..] {
                [r, c] => ParamState::Muon(MuonState::new(r, c)),
                _ => {
                    return Err(Error::NotMatrix {
                        name: p.name.clone(),
                        shape: p.value.shape().to_vec(),
                    })
                }
            },
        };
        states.insert(p.name.clone(), state);
    }
    Ok(states)
}

fn group_map(assignments: &[ParamGroupAssignment]) -> BTreeMap<&str, ParamGroup> {
    assignments
        .iter()
        .map(|a| (a.param_name.as_str(), a.group))
        .collect()
}

/// Steps every parameter with its group's optimizer, in parameter-name order.
///
/// Parameters are independent, so this equals running the two steppers
/// separately over their groups.
pub fn hybrid_step<T: Scalar>(
    params: &mut [ParamTensor<T>],
    states: &mut BTreeMap<String, ParamState<T>>,
    assignments: &[ParamGroupAssignment],
    muon: &MuonSpec<T>,
    adam: &AdamSpec<T>,
) -> Result<()> {
    let groups = group_map(assignments);
    let mut order: Vec<usize> = (0..params.len()).collect();
    order.sort_by(|&a, &b| params[a].name.cmp(&params[b].name));
    for i in order {
        let p = &mut params[i];
        let group = *groups
            .get(p.name.as_str())
            .ok_or_else(|| Error::MissingState(p.name.clone()))?;
        let state = states
            .get_mut(&p.name)
            .ok_or_else(|| Error::MissingState(p.name.clone()))?;
        match (group, state) {
            (ParamGroup::AdamGroup, ParamState::Adam(st)) => {
                adam_step(&p.name, &mut p.value, &p.grad, st, adam)?
            }
            (ParamGroup::MuonGroup, ParamState::Muon(st)) => {
                muon_step(&p.name, &mut p.value, &p.grad, st, muon)?
            }
            (group, state) => {
                return Err(Error::StateKindMismatch {
                    name: p.name.clone(),
                    group: group.label(),
                    state: state.label(),
                })
            }
        }
    }
    Ok(())
}
