//! Binary masks and the operators that shrink or reshape them.
//!
//! * [`magnitude_purge`] and [`random_purge`] remove a fraction of the
//!   currently active coordinates.
//! * [`expected_nnz`] replays the integer schedule a purge sequence follows.
//! * [`snip_mask`] / [`grasp_mask`] build a mask once, before training.
//! * [`prunefl_readjust`] rebuilds a mask from gradient magnitudes and may
//!   re-activate pruned coordinates.

mod mask;
mod prunefl;
mod purge;
mod saliency;

pub use mask::BinaryMask;
pub use prunefl::{prunefl_ratio, prunefl_readjust};
pub use purge::{expected_nnz, expected_nnz_trajectory, magnitude_purge, random_purge, PruneSchedule};
pub use saliency::{
    grasp_mask, grasp_scores, hessian_gradient_product, keep_top, snip_mask, snip_scores,
    Objective,
};
