use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::InteractionDataset;
use crate::error::{Error, Result};
use crate::optim::{AdamSpec, MuonSpec};

use super::config::{OptimizerConfig, RunConfig};
use super::runner::{run_with_dataset, RunSummary};

/// Learning rate × weight decay grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lrs: Vec<f64>,
    pub wds: Vec<f64>,
}

impl Grid {
    pub fn default_adam() -> Self {
        Self {
            lrs: vec![1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3],
            wds: vec![1e-5, 1e-4, 1e-3, 1e-2],
        }
    }

    pub fn default_muon() -> Self {
        Self {
            lrs: vec![1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2],
            wds: vec![1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3],
        }
    }

    /// Cells in lr-major order.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.lrs
            .iter()
            .flat_map(|&lr| self.wds.iter().map(move |&wd| (lr, wd)))
            .collect()
    }

    fn validate(&self, which: &str) -> Result<()> {
        if self.lrs.is_empty() || self.wds.is_empty() {
            return Err(Error::InvalidConfig(format!("{which} grid is empty")));
        }
        if self.lrs.iter().any(|&x| !(x > 0.0 && x.is_finite())) || self.wds.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidConfig(format!("{which} grid has an invalid value")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Adam,
    Muon,
}

/// Deterministic part of a finished run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub converged_step: u64,
    pub steps_run: u64,
    pub best_val_ndcg10: f64,
    pub test_ndcg10: f64,
    pub test_recall10: f64,
    pub initial_train_loss: f64,
    pub final_train_loss: Option<f64>,
    pub diverged: bool,
}

impl From<&RunSummary> for CellOutcome {
    fn from(s: &RunSummary) -> Self {
        Self {
            converged_step: s.converged_step,
            steps_run: s.steps_run,
            best_val_ndcg10: s.best_val_ndcg10,
            test_ndcg10: s.test.ndcg_at(10),
            test_recall10: s.test.recall_at(10),
            initial_train_loss: s.initial_train_loss,
            final_train_loss: s.final_train_loss,
            diverged: s.diverged,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub stage: Stage,
    pub lr: f64,
    pub wd: f64,
    pub outcome: Option<CellOutcome>,
    /// Set when the run failed; the sweep carries on.
    pub error: Option<String>,
}

impl SweepCell {
    fn score(&self) -> Option<f64> {
        self.outcome.as_ref().map(|o| o.best_val_ndcg10)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub lr: f64,
    pub wd: f64,
    pub best_val_ndcg10: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub stage1: Vec<SweepCell>,
    pub stage2: Vec<SweepCell>,
    pub selected_adam: Option<Selection>,
    pub selected_muon: Option<Selection>,
    /// Every successful cell, best first.
    pub ranking: Vec<SweepCell>,
    pub failures: usize,
}

/// Config for a stage-1 cell: AdamW on every parameter.
pub fn adam_config(base: &RunConfig, lr: f64, wd: f64) -> RunConfig {
    let adam = AdamSpec {
        eta: lr,
        lambda: wd,
        ..*base.optimizer.adam()
    };
    RunConfig {
        optimizer: OptimizerConfig::AdamW { adam },
        ..base.clone()
    }
}

/// Config for a stage-2 cell: the Adam group fixed at `adam`, Muon at `(lr, wd)`.
pub fn muon_config(base: &RunConfig, adam: AdamSpec<f64>, lr: f64, wd: f64) -> RunConfig {
    let muon = MuonSpec {
        eta: lr,
        lambda: wd,
        ..base.optimizer.muon().copied().unwrap_or_default()
    };
    RunConfig {
        optimizer: OptimizerConfig::MuonRec { adam, muon },
        ..base.clone()
    }
}

/// Runs every config, at most `parallelism` at a time, preserving order.
pub fn run_all(configs: &[RunConfig], dataset: &InteractionDataset, parallelism: usize) -> Result<Vec<Result<RunSummary>>> {
    let run = |c: &RunConfig| run_with_dataset(c, dataset).map(|r| r.summary);
    if parallelism <= 1 {
        return Ok(configs.iter().map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(|| configs.par_iter().map(run).collect()))
}

fn run_stage(
    stage: Stage,
    cells: &[(f64, f64)],
    configs: &[RunConfig],
    dataset: &InteractionDataset,
    parallelism: usize,
) -> Result<Vec<SweepCell>> {
    let results = run_all(configs, dataset, parallelism)?;
    Ok(cells
        .iter()
        .zip(results)
        .map(|(&(lr, wd), res)| {
            let (outcome, error) = match res {
                Ok(summary) => (Some(CellOutcome::from(&summary)), None),
                Err(e) => {
                    log::warn!("{stage:?} cell lr={lr} wd={wd} failed: {e}");
                    (None, Some(e.to_string()))
                }
            };
            SweepCell {
                stage,
                lr,
                wd,
                outcome,
                error,
            }
        })
        .collect())
}

/// Higher score first; ties go to the smaller lr, then the smaller wd.
fn better(a: &SweepCell, b: &SweepCell) -> Ordering {
    let sa = a.score().unwrap_or(f64::NEG_INFINITY);
    let sb = b.score().unwrap_or(f64::NEG_INFINITY);
    sb.total_cmp(&sa)
        .then(a.lr.total_cmp(&b.lr))
        .then(a.wd.total_cmp(&b.wd))
}

fn select(cells: &[SweepCell]) -> Option<Selection> {
    cells
        .iter()
        .filter(|c| c.outcome.is_some())
        .min_by(|a, b| better(a, b))
        .map(|c| Selection {
            lr: c.lr,
            wd: c.wd,
            best_val_ndcg10: c.score().unwrap_or(f64::NAN),
        })
}

/// Stage 1 tunes AdamW over `adam_grid`; stage 2 fixes the Adam group at
/// the stage-1 winner and tunes the Muon group over `muon_grid`.
pub fn two_stage_sweep(
    base: &RunConfig,
    dataset: &InteractionDataset,
    adam_grid: &Grid,
    muon_grid: &Grid,
    parallelism: usize,
) -> Result<SweepReport> {
    base.validate()?;
    adam_grid.validate("adam")?;
    muon_grid.validate("muon")?;

    let cells = adam_grid.cells();
    let configs: Vec<RunConfig> = cells.iter().map(|&(lr, wd)| adam_config(base, lr, wd)).collect();
    let stage1 = run_stage(Stage::Adam, &cells, &configs, dataset, parallelism)?;
    let selected_adam = select(&stage1);

    let stage2 = match selected_adam {
        Some(sel) => {
            let adam = *adam_config(base, sel.lr, sel.wd).optimizer.adam();
            let cells = muon_grid.cells();
            let configs: Vec<RunConfig> = cells
                .iter()
                .map(|&(lr, wd)| muon_config(base, adam, lr, wd))
                .collect();
            run_stage(Stage::Muon, &cells, &configs, dataset, parallelism)?
        }
        None => Vec::new(),
    };
    let selected_muon = select(&stage2);

    let mut ranking: Vec<SweepCell> = stage1
        .iter()
        .chain(&stage2)
        .filter(|c| c.outcome.is_some())
        .cloned()
        .collect();
    ranking.sort_by(better);
    let failures = stage1.iter().chain(&stage2).filter(|c| c.error.is_some()).count();
    Ok(SweepReport {
        stage1,
        stage2,
        selected_adam,
        selected_muon,
        ranking,
        failures,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrRow {
    pub lr: f64,
    pub outcome: Option<CellOutcome>,
    pub error: Option<String>,
}

impl LrRow {
    pub fn diverged(&self) -> bool {
        self.outcome.as_ref().is_some_and(|o| o.diverged)
    }

    /// Finished with a training loss above the initial one.
    pub fn regressed(&self) -> bool {
        self.outcome
            .as_ref()
            .and_then(|o| o.final_train_loss.map(|f| f > o.initial_train_loss))
            .unwrap_or(false)
    }

    pub fn improved(&self) -> bool {
        self.outcome
            .as_ref()
            .and_then(|o| o.final_train_loss.map(|f| f < o.initial_train_loss))
            .unwrap_or(false)
    }
}

/// One run per learning rate. Under MuonRec the Muon group's lr is swept,
/// otherwise the Adam lr.
pub fn lr_sweep(base: &RunConfig, dataset: &InteractionDataset, lrs: &[f64], parallelism: usize) -> Result<Vec<LrRow>> {
    base.validate()?;
    if lrs.len() < 3 {
        return Err(Error::InvalidConfig("lr sweep needs at least 3 learning rates".into()));
    }
    let configs: Vec<RunConfig> = lrs
        .iter()
        .map(|&lr| {
            let mut cfg = base.clone();
            match &mut cfg.optimizer {
                OptimizerConfig::MuonRec { muon, .. } => muon.eta = lr,
                other => other.adam_mut().eta = lr,
            }
            cfg
        })
        .collect();
    let results = run_all(&configs, dataset, parallelism)?;
    Ok(lrs
        .iter()
        .zip(results)
        .map(|(&lr, res)| match res {
            Ok(s) => LrRow {
                lr,
                outcome: Some(CellOutcome::from(&s)),
                error: None,
            },
            Err(e) => LrRow {
                lr,
                outcome: None,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

/// `lr,best_ndcg10,initial_loss,final_loss,diverged`; failed runs leave the
/// numeric fields empty.
pub fn lr_sweep_csv(rows: &[LrRow]) -> String {
    let mut out = String::from("lr,best_ndcg10,initial_loss,final_loss,diverged\n");
    for r in rows {
        match &r.outcome {
            Some(o) => {
                let fin = o.final_train_loss.map(|f| f.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.lr, o.best_val_ndcg10, o.initial_train_loss, fin, o.diverged
                );
            }
            None => {
                let _ = writeln!(out, "{},,,,", r.lr);
            }
        }
    }
    out
}
