//! Single-shot masks computed from one data pass at initialization.

use super::BinaryMask;

/// A differentiable loss over a flat parameter vector.
pub trait Objective {
    fn gradient(&self, params: &[f64]) -> Vec<f64>;
}

fn keep_count(keep_ratio: f64, len: usize) -> usize {
    assert!(
        keep_ratio > 0.0 && keep_ratio <= 1.0,
        "keep ratio {keep_ratio} outside (0, 1]"
    );
    ((keep_ratio * len as f64).ceil() as usize).min(len)
}

/// Mask keeping the `keep` highest scores; equal scores keep the lower index.
pub fn keep_top(scores: &[f64], keep: usize) -> BinaryMask {
    let mut mask = BinaryMask::zeros(scores.len());
    if keep >= scores.len() {
        return BinaryMask::ones(scores.len());
    }
    if keep == 0 {
        return mask;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.select_nth_unstable_by(keep - 1, |&a, &b| {
        scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
    });
    for &i in &order[..keep] {
        mask.set(i);
    }
    mask
}

/// Connection sensitivity `|g_i * w_i|`.
pub fn snip_scores<O: Objective + ?Sized>(objective: &O, params: &[f64]) -> Vec<f64> {
    let grad = objective.gradient(params);
    grad.iter().zip(params).map(|(g, w)| (g * w).abs()).collect()
}

/// Keep the `ceil(keep_ratio * P)` most sensitive connections. When every
/// score is zero the lowest indices are kept.
pub fn snip_mask<O: Objective + ?Sized>(objective: &O, params: &[f64], keep_ratio: f64) -> BinaryMask {
    let keep = keep_count(keep_ratio, params.len());
    if keep == params.len() {
        return BinaryMask::ones(params.len());
    }
    keep_top(&snip_scores(objective, params), keep)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Hessian-gradient product by a forward difference of gradients along `g`,
/// with step `eps = 1e-4 * |w| / |g|` (`1e-4 / |g|` at `w = 0`).
/// Returns `None` when the gradient vanishes.
pub fn hessian_gradient_product<O: Objective + ?Sized>(
    objective: &O,
    params: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let grad = objective.gradient(params);
    let gnorm = norm(&grad);
    if gnorm == 0.0 || !gnorm.is_finite() {
        return None;
    }
    let wnorm = norm(params);
    let eps = if wnorm > 0.0 { 1e-4 * wnorm / gnorm } else { 1e-4 / gnorm };
    let shifted: Vec<f64> = params.iter().zip(&grad).map(|(w, g)| w + eps * g).collect();
    let grad_shifted = objective.gradient(&shifted);
    let hg = grad_shifted
        .iter()
        .zip(&grad)
        .map(|(a, b)| (a - b) / eps)
        .collect();
    Some((grad, hg))
}

/// Gradient-flow scores `w_i * (Hg)_i`, or `None` when the gradient vanishes.
pub fn grasp_scores<O: Objective + ?Sized>(objective: &O, params: &[f64]) -> Option<Vec<f64>> {
    let (_, hg) = hessian_gradient_product(objective, params)?;
    Some(params.iter().zip(&hg).map(|(w, h)| w * h).collect())
}

/// Prune the `P - ceil(keep_ratio * P)` coordinates with the largest
/// gradient-flow score. Falls back to keeping the largest magnitudes when
/// the gradient is zero.
pub fn grasp_mask<O: Objective + ?Sized>(objective: &O, params: &[f64], keep_ratio: f64) -> BinaryMask {
    let keep = keep_count(keep_ratio, params.len());
    if keep == params.len() {
        return BinaryMask::ones(params.len());
    }
    match grasp_scores(objective, params) {
        Some(q) => {
            let neg: Vec<f64> = q.iter().map(|v| -v).collect();
            keep_top(&neg, keep)
        }
        None => {
            let magnitude: Vec<f64> = params.iter().map(|w| w.abs()).collect();
            keep_top(&magnitude, keep)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// L(w) = sum_i a_i w_i^2 / 2, so g = a w and Hg = a^2 w exactly.
    struct Quadratic(Vec<f64>);

    impl Objective for Quadratic {
        fn gradient(&self, params: &[f64]) -> Vec<f64> {
            params.iter().zip(&self.0).map(|(w, a)| a * w).collect()
        }
    }

    /// Returns fixed gradients regardless of parameters.
    struct FixedGradient(Vec<f64>);

    impl Objective for FixedGradient {
        fn gradient(&self, _params: &[f64]) -> Vec<f64> {
            self.0.clone()
        }
    }

    #[test]
    fn top_k_picks_highest_scores() {
        let m = keep_top(&[0.4, 0.1, 0.0, 0.2], 2);
        assert_eq!(m.to_bools(), vec![true, false, false, true]);
    }

    #[test]
    fn snip_keeps_highest_saliency() {
        // saliencies |g w| = [0.4, 0.1, 0.0, 0.2]
        let obj = FixedGradient(vec![0.4, 0.1, 5.0, -0.2]);
        let w = [1.0, 1.0, 0.0, 1.0];
        assert_eq!(snip_scores(&obj, &w), vec![0.4, 0.1, 0.0, 0.2]);
        assert_eq!(snip_mask(&obj, &w, 0.5).to_bools(), vec![true, false, false, true]);
    }

    #[test]
    fn snip_full_keep_ratio_is_all_ones() {
        let obj = FixedGradient(vec![0.0; 5]);
        assert!(snip_mask(&obj, &[1.0; 5], 1.0).is_all_ones());
        assert!(grasp_mask(&obj, &[1.0; 5], 1.0).is_all_ones());
    }

    #[test]
    fn snip_zero_gradient_pruned_first() {
        let obj = FixedGradient(vec![0.0, 1e-9, 0.0]);
        let m = snip_mask(&obj, &[5.0, 1.0, 3.0], 0.3);
        assert_eq!(m.to_bools(), vec![false, true, false]);
    }

    #[test]
    fn snip_all_zero_saliency_keeps_lowest_indices() {
        let obj = FixedGradient(vec![0.0; 6]);
        let m = snip_mask(&obj, &[1.0; 6], 0.5);
        assert_eq!(m.to_bools(), vec![true, true, true, false, false, false]);
    }

    #[test]
    fn finite_difference_hg_matches_closed_form() {
        let a = vec![0.5, 2.0, 1.5, 3.0];
        let w = vec![1.0, -0.7, 0.3, 0.2];
        let (_, hg) = hessian_gradient_product(&Quadratic(a.clone()), &w).unwrap();
        for i in 0..4 {
            let exact = a[i] * a[i] * w[i];
            assert!(((hg[i] - exact) / exact).abs() < 1e-3, "{i}: {} vs {exact}", hg[i]);
        }
    }

    #[test]
    fn grasp_prunes_largest_gradient_flow_score() {
        // q_i = a_i^2 w_i^2 = [0.25, 1.96, 0.2025, 0.36]
        let a = vec![0.5, 2.0, 1.5, 3.0];
        let w = vec![1.0, -0.7, 0.3, 0.2];
        let q = grasp_scores(&Quadratic(a.clone()), &w).unwrap();
        for i in 0..4 {
            let exact = a[i] * a[i] * w[i] * w[i];
            assert!(q[i] >= 0.0);
            assert!(((q[i] - exact) / exact).abs() < 1e-3);
        }
        let m = grasp_mask(&Quadratic(a), &w, 0.75);
        assert_eq!(m.to_bools(), vec![true, false, true, true]);
        let m = grasp_mask(&Quadratic(vec![0.5, 2.0, 1.5, 3.0]), &w, 0.5);
        assert_eq!(m.to_bools(), vec![true, false, true, false]);
    }

    #[test]
    fn grasp_zero_gradient_falls_back_to_magnitude() {
        let obj = FixedGradient(vec![0.0; 4]);
        let m = grasp_mask(&obj, &[0.1, -0.9, 0.5, 0.2], 0.5);
        assert_eq!(m.to_bools(), vec![false, true, true, false]);
    }
}
