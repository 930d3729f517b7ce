//! Merge rules for local models.
//!
//! Sums run over clients in ascending `client_id` order whatever order the
//! updates arrive in, so the merged model does not depend on how clients
//! were scheduled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamVector;
use crate::sparsity::BinaryMask;

#[derive(Clone, Debug)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub params: ParamVector,
    pub mask: BinaryMask,
    pub num_examples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeRule {
    /// FedAvg: `sum_k |D_k| / |D| * w_k`.
    WeightedAverage,
    /// Weighted average where at least half the clients keep the
    /// coordinate, zero elsewhere.
    MajorityVote,
}

fn sorted(updates: &[ClientUpdate]) -> Result<Vec<&ClientUpdate>> {
    let first = updates
        .first()
        .ok_or_else(|| Error::config("cannot merge an empty update list"))?;
    let len = first.params.len();
    for u in updates {
        if u.params.len() != len || u.mask.len() != len {
            return Err(Error::config(format!(
                "client {} sent {} parameters and a {}-bit mask, expected {len}",
                u.client_id,
                u.params.len(),
                u.mask.len()
            )));
        }
    }
    let mut refs: Vec<&ClientUpdate> = updates.iter().collect();
    refs.sort_by_key(|u| u.client_id);
    Ok(refs)
}

/// Merge weights `|D_k| / |D|` in ascending client order.
fn weights(updates: &[&ClientUpdate]) -> Result<Vec<f64>> {
    let total: usize = updates.iter().map(|u| u.num_examples).sum();
    if total == 0 {
        return Err(Error::config("merge weights need a positive total example count"));
    }
    Ok(updates
        .iter()
        .map(|u| u.num_examples as f64 / total as f64)
        .collect())
}

fn weighted_sum(updates: &[&ClientUpdate], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; updates[0].params.len()];
    for (u, &w) in updates.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(u.params.iter()) {
            *o += w * v;
        }
    }
    out
}

pub fn weighted_average(updates: &[ClientUpdate]) -> Result<ParamVector> {
    let refs = sorted(updates)?;
    let w = weights(&refs)?;
    Ok(weighted_sum(&refs, &w).into())
}

/// A coordinate survives when `sum_k m_k[i] >= N / 2`; its value is the
/// weighted average over all N clients, zeros of non-supporters included.
pub fn majority_vote_merge(updates: &[ClientUpdate]) -> Result<(ParamVector, BinaryMask)> {
    let refs = sorted(updates)?;
    let w = weights(&refs)?;
    let mut out = weighted_sum(&refs, &w);
    let len = out.len();
    let n = refs.len();
    let mut support = vec![0usize; len];
    for u in &refs {
        for i in u.mask.iter_ones() {
            support[i] += 1;
        }
    }
    let mut mask = BinaryMask::zeros(len);
    for (i, (&s, o)) in support.iter().zip(out.iter_mut()).enumerate() {
        if 2 * s >= n {
            mask.set(i);
        } else {
            *o = 0.0;
        }
    }
    Ok((out.into(), mask))
}

/// Dispatch on `rule`. Weighted averaging returns the union of the client
/// masks, which is the shared global mask whenever all clients trained
/// under it.
pub fn merge(rule: MergeRule, updates: &[ClientUpdate]) -> Result<(ParamVector, BinaryMask)> {
    match rule {
        MergeRule::WeightedAverage => {
            let params = weighted_average(updates)?;
            let mask = updates
                .iter()
                .skip(1)
                .fold(updates[0].mask.clone(), |acc, u| acc.union(&u.mask));
            Ok((params, mask))
        }
        MergeRule::MajorityVote => majority_vote_merge(updates),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn update(id: usize, params: Vec<f64>, mask: &[bool], n: usize) -> ClientUpdate {
        ClientUpdate {
            client_id: id,
            params: params.into(),
            mask: BinaryMask::from_bools(mask),
            num_examples: n,
        }
    }

    #[test]
    fn single_client_is_returned() {
        let u = update(0, vec![0.25, -1.0], &[true, true], 7);
        assert_eq!(&*weighted_average(&[u]).unwrap(), &[0.25, -1.0]);
    }

    #[test]
    fn size_weighting() {
        let a = update(0, vec![0.0], &[true], 1);
        let b = update(1, vec![0.4], &[true], 3);
        let out = weighted_average(&[a, b]).unwrap();
        assert!((out[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn identical_clients_are_a_fixed_point() {
        let ups: Vec<_> = (0..3).map(|k| update(k, vec![0.5, -0.25], &[true, true], 10)).collect();
        assert_eq!(&*weighted_average(&ups).unwrap(), &[0.5, -0.25]);
    }

    #[test]
    fn majority_vote_examples() {
        let ups = vec![
            update(0, vec![0.3, 0.2], &[true, true], 5),
            update(1, vec![0.6, 0.0], &[true, false], 5),
            update(2, vec![0.0, 0.0], &[false, false], 5),
        ];
        let (out, mask) = majority_vote_merge(&ups).unwrap();
        assert!((out[0] - 0.3).abs() < 1e-15);
        assert_eq!(out[1], 0.0);
        assert_eq!(mask.to_bools(), vec![true, false]);
    }

    #[test]
    fn half_support_is_kept() {
        let ups = vec![
            update(0, vec![1.0], &[true], 1),
            update(1, vec![1.0], &[true], 1),
            update(2, vec![0.0], &[false], 1),
            update(3, vec![0.0], &[false], 1),
        ];
        let (out, mask) = majority_vote_merge(&ups).unwrap();
        assert!(mask.get(0));
        assert_eq!(out[0], 0.5);
    }

    #[test]
    fn errors() {
        assert!(matches!(weighted_average(&[]), Err(Error::Config(_))));
        let zero = vec![update(0, vec![1.0], &[true], 0)];
        assert!(matches!(weighted_average(&zero), Err(Error::Config(_))));
        let mixed = vec![update(0, vec![1.0], &[true], 1), update(1, vec![1.0, 2.0], &[true, true], 1)];
        assert!(matches!(merge(MergeRule::MajorityVote, &mixed), Err(Error::Config(_))));
    }

    #[test]
    fn weighted_average_mask_is_union() {
        let ups = vec![
            update(0, vec![1.0, 0.0, 0.0], &[true, false, false], 1),
            update(1, vec![0.0, 1.0, 0.0], &[false, true, false], 1),
        ];
        let (_, mask) = merge(MergeRule::WeightedAverage, &ups).unwrap();
        assert_eq!(mask.to_bools(), vec![true, true, false]);
    }
}
