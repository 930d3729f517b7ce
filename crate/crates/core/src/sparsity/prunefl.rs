use super::{keep_top, BinaryMask};

/// Target sparsity for a readjustment at round `t`: `s * 0.5^(t / 1000)`.
pub fn prunefl_ratio(s: f64, t: usize) -> f64 {
    s * 0.5f64.powf(t as f64 / 1000.0)
}

/// Rebuild the mask keeping the `ceil((1 - target_ratio) * P)` coordinates
/// with the largest scores (gradient magnitudes; execution time is uniform
/// per parameter, so the time term cancels). Previously pruned coordinates
/// can be re-activated and do so at exactly zero; newly pruned coordinates
/// are zeroed.
pub fn prunefl_readjust(
    params: &mut [f64],
    old_mask: &BinaryMask,
    scores: &[f64],
    target_ratio: f64,
) -> BinaryMask {
    assert_eq!(params.len(), scores.len(), "score/parameter length mismatch");
    assert_eq!(params.len(), old_mask.len(), "mask/parameter length mismatch");
    assert!(
        (0.0..=1.0).contains(&target_ratio),
        "target ratio {target_ratio} outside [0, 1]"
    );
    let len = params.len();
    let keep = (((1.0 - target_ratio) * len as f64).ceil() as usize).min(len);
    let mask = keep_top(scores, keep);
    for (i, p) in params.iter_mut().enumerate() {
        if !mask.get(i) || !old_mask.get(i) {
            *p = 0.0;
        }
    }
    mask
}
