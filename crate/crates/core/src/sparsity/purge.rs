use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BinaryMask;

/// Progressive pruning schedule: remove `fraction` of the active weights on
/// every round divisible by `frequency`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneSchedule {
    pub fraction: f64,
    pub frequency: usize,
}

impl PruneSchedule {
    pub fn new(fraction: f64, frequency: usize) -> Self {
        PruneSchedule {
            fraction,
            frequency,
        }
    }

    pub fn fires(&self, round: usize) -> bool {
        round >= 1 && round.is_multiple_of(self.frequency)
    }

    pub fn is_valid(&self) -> bool {
        (0.0..1.0).contains(&self.fraction) && self.frequency >= 1
    }
}

/// Number of coordinates a purge removes from `active` candidates.
#[inline]
fn prune_count(fraction: f64, active: usize) -> usize {
    assert!(
        (0.0..1.0).contains(&fraction),
        "purge fraction {fraction} outside [0, 1)"
    );
    (fraction * active as f64).floor() as usize
}

/// Zero the `floor(fraction * nnz)` active weights of smallest magnitude and
/// clear their mask bits. Equal magnitudes are pruned lower index first.
/// Coordinates already outside the mask are never candidates, so they stay
/// pruned. Returns the number of coordinates removed.
pub fn magnitude_purge(params: &mut [f64], mask: &mut BinaryMask, fraction: f64) -> usize {
    assert_eq!(params.len(), mask.len(), "mask/parameter length mismatch");
    let mut active: Vec<(f64, usize)> = mask.iter_ones().map(|i| (params[i].abs(), i)).collect();
    let k = prune_count(fraction, active.len());
    if k == 0 {
        return 0;
    }
    let by_magnitude = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
    };
    if k < active.len() {
        active.select_nth_unstable_by(k - 1, by_magnitude);
    }
    for &(_, i) in &active[..k] {
        params[i] = 0.0;
        mask.clear(i);
    }
    k
}

/// Zero `floor(fraction * nnz)` active coordinates chosen uniformly without
/// replacement.
pub fn random_purge<R: Rng + ?Sized>(
    params: &mut [f64],
    mask: &mut BinaryMask,
    fraction: f64,
    rng: &mut R,
) -> usize {
    assert_eq!(params.len(), mask.len(), "mask/parameter length mismatch");
    let active: Vec<usize> = mask.iter_ones().collect();
    let k = prune_count(fraction, active.len());
    if k == 0 {
        return 0;
    }
    for pos in rand::seq::index::sample(rng, active.len(), k) {
        let i = active[pos];
        params[i] = 0.0;
        mask.clear(i);
    }
    k
}

/// Active-weight count after every purge up to and including `round`, when
/// each purge removes `floor(fraction * nnz)` coordinates.
pub fn expected_nnz(nnz0: usize, fraction: f64, frequency: usize, round: usize) -> usize {
    assert!(frequency >= 1, "frequency must be >= 1");
    let purges = round / frequency;
    (0..purges).fold(nnz0, |nnz, _| nnz - prune_count(fraction, nnz))
}

/// `expected_nnz` for rounds `0..=rounds`.
pub fn expected_nnz_trajectory(
    nnz0: usize,
    fraction: f64,
    frequency: usize,
    rounds: usize,
) -> Vec<usize> {
    let schedule = PruneSchedule::new(fraction, frequency);
    let mut nnz = nnz0;
    let mut out = Vec::with_capacity(rounds + 1);
    out.push(nnz);
    for t in 1..=rounds {
        if schedule.fires(t) {
            nnz -= prune_count(fraction, nnz);
        }
        out.push(nnz);
    }
    out
}
