use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ClientShard, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionScheme {
    Iid,
    #[serde(alias = "non-iid", alias = "non_iid")]
    NonIid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub num_clients: usize,
    pub scheme: PartitionScheme,
    /// Label budget per client; used by the non-IID scheme only.
    #[serde(default)]
    pub classes_per_client: Option<usize>,
    pub seed: u64,
}

pub fn partition(dataset: &LabeledDataset, spec: &PartitionSpec) -> Result<Vec<ClientShard>> {
    match spec.scheme {
        PartitionScheme::Iid => partition_iid(dataset, spec.num_clients, spec.seed),
        PartitionScheme::NonIid => {
            let k = spec.classes_per_client.ok_or_else(|| {
                Error::config("non-IID partitioning needs classes_per_client")
            })?;
            partition_noniid(dataset, spec.num_clients, k, spec.seed)
        }
    }
}

fn check_clients(dataset: &LabeledDataset, num_clients: usize) -> Result<()> {
    if num_clients == 0 {
        return Err(Error::config("at least one client is required"));
    }
    if num_clients > dataset.len() {
        return Err(Error::config(format!(
            "{num_clients} clients for only {} examples",
            dataset.len()
        )));
    }
    Ok(())
}

/// Split `len` into `parts` contiguous ranges whose sizes differ by at most
/// one; the first `len % parts` ranges take the extra element.
fn balanced_ranges(len: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let (base, extra) = (len / parts, len % parts);
    let mut start = 0;
    (0..parts)
        .map(|p| {
            let size = base + usize::from(p < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect()
}

fn shards(dataset: &LabeledDataset, assignment: Vec<Vec<usize>>) -> Vec<ClientShard> {
    assignment
        .into_iter()
        .enumerate()
        .map(|(client_id, indices)| ClientShard {
            client_id,
            data: dataset.subset(&indices),
            indices,
        })
        .collect()
}

/// Seeded shuffle, then contiguous chunks whose sizes differ by at most one.
pub fn partition_iid(
    dataset: &LabeledDataset,
    num_clients: usize,
    seed: u64,
) -> Result<Vec<ClientShard>> {
    check_clients(dataset, num_clients)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::PARTITION]));
    let assignment = balanced_ranges(order.len(), num_clients)
        .into_iter()
        .map(|r| order[r].to_vec())
        .collect();
    Ok(shards(dataset, assignment))
}

/// Number of segments per class, proportional to class size (largest
/// remainder), at least one per non-empty class and never more than the
/// class has examples.
fn segments_per_class(counts: &[usize], total_segments: usize) -> Result<Vec<usize>> {
    let n: usize = counts.iter().sum();
    let nonempty = counts.iter().filter(|&&c| c > 0).count();
    if total_segments < nonempty {
        return Err(Error::config(format!(
            "{total_segments} label segments cannot cover {nonempty} classes"
        )));
    }
    if total_segments > n {
        return Err(Error::config(format!(
            "{total_segments} label segments for only {n} examples"
        )));
    }
    // Remainders of count * S / n over the common denominator n.
    let ideal = |c: usize| c as u128 * total_segments as u128;
    let mut segs: Vec<usize> = counts
        .iter()
        .map(|&c| if c == 0 { 0 } else { ((ideal(c) / n as u128) as usize).clamp(1, c) })
        .collect();
    let remainder = |c: usize, s: usize| ideal(c) as i128 - (s as u128 * n as u128) as i128;
    let mut assigned: usize = segs.iter().sum();
    while assigned < total_segments {
        let best = (0..counts.len())
            .filter(|&c| segs[c] < counts[c])
            .max_by(|&a, &b| {
                remainder(counts[a], segs[a])
                    .cmp(&remainder(counts[b], segs[b]))
                    .then(b.cmp(&a))
            })
            .ok_or_else(|| Error::config("label segments exceed available examples"))?;
        segs[best] += 1;
        assigned += 1;
    }
    while assigned > total_segments {
        let worst = (0..counts.len())
            .filter(|&c| segs[c] > 1)
            .min_by(|&a, &b| {
                remainder(counts[a], segs[a])
                    .cmp(&remainder(counts[b], segs[b]))
                    .then(a.cmp(&b))
            })
            .ok_or_else(|| Error::config("cannot reduce label segments further"))?;
        segs[worst] -= 1;
        assigned -= 1;
    }
    Ok(segs)
}

/// Label-skewed partition: sort examples by label, cut every class into
/// single-label segments (`num_clients * classes_per_client` in total),
/// then hand each client `classes_per_client` segments from a seeded
/// shuffle. Every shard therefore holds at most `classes_per_client` labels.
pub fn partition_noniid(
    dataset: &LabeledDataset,
    num_clients: usize,
    classes_per_client: usize,
    seed: u64,
) -> Result<Vec<ClientShard>> {
    check_clients(dataset, num_clients)?;
    if classes_per_client == 0 {
        return Err(Error::config("classes_per_client must be at least 1"));
    }
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
    for (i, &y) in dataset.labels().iter().enumerate() {
        by_label[y as usize].push(i);
    }
    let counts: Vec<usize> = by_label.iter().map(Vec::len).collect();
    let total = num_clients * classes_per_client;
    let per_class = segments_per_class(&counts, total)?;

    let mut segments: Vec<Vec<usize>> = Vec::with_capacity(total);
    for (members, &s) in by_label.iter().zip(&per_class) {
        if s == 0 {
            continue;
        }
        for r in balanced_ranges(members.len(), s) {
            segments.push(members[r].to_vec());
        }
    }
    segments.shuffle(&mut rng::stream(seed, &[rng::PARTITION]));
    let assignment = segments
        .chunks(classes_per_client)
        .map(|chunk| chunk.concat())
        .collect();
    Ok(shards(dataset, assignment))
}
