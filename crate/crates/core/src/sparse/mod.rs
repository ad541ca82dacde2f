//! Library-based (semi-supervised) unmixing.

mod admm;
mod library;
mod mua;
mod prune;
mod sunaa;
mod sunsal;
mod tv;

pub use library::SpectralLibrary;
pub use mua::{mua, mua_with, slic, SlicParams};
pub use prune::{
    music_prune, music_scores, rescale_bands, rescale_bands_with, sad_prune, RescaleResult,
    RESCALE_CYCLES,
};
pub use sunaa::{sunaa, SunaaResult};
pub use sunsal::{clsunsal, s2wsu, s2wsu_with_loops, sunsal, SparseCode, REWEIGHT_EPS, S2WSU_OUTER};
pub use tv::{sunsal_tv, DiffOps};
