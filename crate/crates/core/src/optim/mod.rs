//! Adam/AdamW and Muon steppers, plus the hybrid dispatcher that sends
//! hidden weight matrices to Muon and everything else to Adam.

mod adam;
mod hybrid;
mod muon;

pub use adam::{adam_step, AdamSpec, AdamState};
pub use hybrid::{
    all_adam, classify_params, hybrid_step, init_states, ParamGroup, ParamGroupAssignment,
    ParamState,
};
pub use muon::{muon_step, sgd_momentum_accumulate, MuonSpec, MuonState};
