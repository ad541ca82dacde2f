//! Blind unmixing: endmembers and abundances estimated together.

mod edaa;
mod qmv;

pub use edaa::{coherence, edaa, AaFactors, EdaaResult, EDAA_INNER_STEPS, EDAA_MAX_EPOCHS};
pub use qmv::{
    default_beta_grid, nmf_qmv, QmvKind, QmvRegularizer, QmvResult, QmvRun, QMV_MAX_OUTER,
};
