//! Flat little-endian dataset format for generated data.
//!
//! ```text
//! u32 magic = 0x46445331
//! u32 count, u32 num_features, u32 num_classes
//! f64 features[count * num_features]
//! u32 labels[count]
//! ```

use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};

pub const FDS_MAGIC: u32 = 0x4644_5331;

pub fn encode_fds(dataset: &LabeledDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + dataset.features().len() * 8 + dataset.len() * 4);
    for v in [
        FDS_MAGIC,
        dataset.len() as u32,
        dataset.num_features() as u32,
        dataset.num_classes() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for f in dataset.features() {
        out.extend_from_slice(&f.to_le_bytes());
    }
    for y in dataset.labels() {
        out.extend_from_slice(&y.to_le_bytes());
    }
    out
}

pub fn decode_fds(bytes: &[u8]) -> Result<LabeledDataset> {
    let header = |i: usize, field: &str| -> Result<u32> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| Error::format(field, "file truncated inside the header"))
    };
    let magic = header(0, "fds.magic")?;
    if magic != FDS_MAGIC {
        return Err(Error::format(
            "fds.magic",
            format!("expected 0x{FDS_MAGIC:08x}, found 0x{magic:08x}"),
        ));
    }
    let count = header(1, "fds.count")? as usize;
    let num_features = header(2, "fds.num_features")? as usize;
    let num_classes = header(3, "fds.num_classes")? as usize;
    let body = &bytes[16..];
    let expected = count * num_features * 8 + count * 4;
    if body.len() != expected {
        return Err(Error::format(
            "fds.data",
            format!("{} body bytes, header implies {expected}", body.len()),
        ));
    }
    let (feat, lab) = body.split_at(count * num_features * 8);
    let features = feat
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = lab
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    LabeledDataset::new(features, labels, num_features, num_classes)
        .map_err(|e| Error::format("fds.labels", e.to_string()))
}

pub fn write_fds(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    std::fs::write(path, encode_fds(dataset)).map_err(|e| Error::io(path, e))
}

pub fn read_fds(path: &Path) -> Result<LabeledDataset> {
    decode_fds(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trips_bit_exactly(
            rows in proptest::collection::vec((proptest::collection::vec(any::<f64>(), 3), 0u32..4), 0..20)
        ) {
            let features: Vec<f64> = rows.iter().flat_map(|(f, _)| f.clone()).collect();
            let labels: Vec<u32> = rows.iter().map(|(_, y)| *y).collect();
            let ds = LabeledDataset::new(features, labels, 3, 4).unwrap();
            let back = decode_fds(&encode_fds(&ds)).unwrap();
            prop_assert_eq!(encode_fds(&back), encode_fds(&ds));
        }
    }

    #[test]
    fn header_layout() {
        let ds = LabeledDataset::new(vec![1.5, -2.0], vec![1], 2, 3).unwrap();
        let bytes = encode_fds(&ds);
        assert_eq!(&bytes[..4], &[0x31, 0x53, 0x44, 0x46]);
        assert_eq!(bytes.len(), 16 + 16 + 4);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let ds = LabeledDataset::new(vec![1.5, -2.0], vec![1], 2, 3).unwrap();
        let mut bytes = encode_fds(&ds);
        bytes.pop();
        assert!(matches!(decode_fds(&bytes), Err(Error::Format { field, .. }) if field == "fds.data"));
        let mut bytes = encode_fds(&ds);
        bytes[0] = 0;
        assert!(matches!(decode_fds(&bytes), Err(Error::Format { field, .. }) if field == "fds.magic"));
    }
}
