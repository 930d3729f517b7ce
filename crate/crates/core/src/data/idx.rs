//! IDX files (big-endian, magic-numbered), optionally gzip-compressed.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{DatasetSplits, LabeledDataset};
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader: Box<dyn Read> = if path.extension().is_some_and(|ext| ext == "gz") {
        Box::new(GzDecoder::new(BufReader::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], at: usize, field: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(field, "file truncated inside the header"))
}

/// Decode an image file and a label file already in memory. Pixels are
/// scaled by 1/255; the number of classes is `max(label) + 1`.
pub fn decode_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    let magic = be_u32(images, 0, "images.magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(
            "images.magic",
            format!("expected 0x{IMAGES_MAGIC:08x}, found 0x{magic:08x}"),
        ));
    }
    let count = be_u32(images, 4, "images.count")? as usize;
    let rows = be_u32(images, 8, "images.rows")? as usize;
    let cols = be_u32(images, 12, "images.cols")? as usize;
    let pixels = &images[16..];
    let width = rows * cols;
    if width == 0 {
        return Err(Error::format("images.rows", "zero-sized images"));
    }
    if pixels.len() != count * width {
        return Err(Error::format(
            "images.data",
            format!(
                "{} pixel bytes for {count} images of {rows}x{cols}",
                pixels.len()
            ),
        ));
    }

    let magic = be_u32(labels, 0, "labels.magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(
            "labels.magic",
            format!("expected 0x{LABELS_MAGIC:08x}, found 0x{magic:08x}"),
        ));
    }
    let label_count = be_u32(labels, 4, "labels.count")? as usize;
    if label_count != count {
        return Err(Error::format(
            "labels.count",
            format!("{label_count} labels for {count} images"),
        ));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() != count {
        return Err(Error::format(
            "labels.data",
            format!("{} label bytes for {count} labels", label_bytes.len()),
        ));
    }

    let features = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<u32> = label_bytes.iter().map(|&b| b as u32).collect();
    let num_classes = labels.iter().max().map_or(1, |&m| m as usize + 1);
    LabeledDataset::new(features, labels, width, num_classes)
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    decode_idx(&read_all(images)?, &read_all(labels)?)
}

fn find(dir: &Path, stem: &str) -> Result<PathBuf> {
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    let plain = dir.join(stem);
    if plain.exists() {
        return Ok(plain);
    }
    Err(Error::io(
        &plain,
        std::io::Error::new(std::io::ErrorKind::NotFound, "IDX file not found (also tried .gz)"),
    ))
}

/// Load `train-*` and `t10k-*` IDX files from `dir`, 10 classes.
pub fn load_fashion_mnist(dir: &Path) -> Result<DatasetSplits> {
    let load = |prefix: &str| -> Result<LabeledDataset> {
        let images = find(dir, &format!("{prefix}-images-idx3-ubyte"))?;
        let labels = find(dir, &format!("{prefix}-labels-idx1-ubyte"))?;
        load_idx(&images, &labels)?.with_num_classes(10)
    };
    Ok(DatasetSplits {
        train: load("train")?,
        test: load("t10k")?,
    })
}

/// Encode a dataset whose features are in `[0, 1]` as square IDX images.
pub fn encode_idx(dataset: &LabeledDataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let width = dataset.num_features();
    let side = (width as f64).sqrt().round() as usize;
    let (rows, cols) = if side * side == width { (side, side) } else { (1, width) };
    if dataset.num_classes() > 256 {
        return Err(Error::config("IDX labels hold at most 256 classes"));
    }
    let mut images = Vec::with_capacity(16 + dataset.features().len());
    images.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    images.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    images.extend_from_slice(&(rows as u32).to_be_bytes());
    images.extend_from_slice(&(cols as u32).to_be_bytes());
    images.extend(
        dataset
            .features()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    let mut labels = Vec::with_capacity(8 + dataset.len());
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    labels.extend(dataset.labels().iter().map(|&y| y as u8));
    Ok((images, labels))
}

/// Write IDX files; paths ending in `.gz` are compressed.
pub fn write_idx(dataset: &LabeledDataset, images: &Path, labels: &Path) -> Result<()> {
    let (img, lab) = encode_idx(dataset)?;
    for (path, bytes) in [(images, img), (labels, lab)] {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let res = if path.extension().is_some_and(|ext| ext == "gz") {
            let mut enc = GzEncoder::new(file, Compression::default());
            enc.write_all(&bytes).and_then(|_| enc.finish().map(|_| ()))
        } else {
            let mut file = file;
            file.write_all(&bytes)
        };
        res.map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(count: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IMAGES_MAGIC, count, 2, 2] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    fn labels(count: u32, ys: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [LABELS_MAGIC, count] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(ys);
        v
    }

    #[test]
    fn decodes_and_scales_pixels() {
        let ds = decode_idx(&images(2, &[0, 255, 51, 0, 1, 2, 3, 4]), &labels(2, &[3, 1])).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.num_features(), 4);
        assert_eq!(ds.row(0)[1], 1.0);
        assert_eq!(ds.row(0)[2], 0.2);
        assert_eq!(ds.labels(), &[3, 1]);
        assert_eq!(ds.num_classes(), 4);
    }

    fn field_of(err: Error) -> String {
        match err {
            Error::Format { field, .. } => field,
            other => panic!("expected a format error, got {other}"),
        }
    }

    #[test]
    fn names_the_offending_field() {
        let px = [0u8; 8];
        let mut bad_magic = images(2, &px);
        bad_magic[3] = 0x01;
        assert_eq!(field_of(decode_idx(&bad_magic, &labels(2, &[0, 1])).unwrap_err()), "images.magic");
        assert_eq!(
            field_of(decode_idx(&images(2, &px), &labels(3, &[0, 1, 2])).unwrap_err()),
            "labels.count"
        );
        assert_eq!(
            field_of(decode_idx(&images(2, &px[..7]), &labels(2, &[0, 1])).unwrap_err()),
            "images.data"
        );
        assert_eq!(
            field_of(decode_idx(&images(2, &px), &labels(2, &[0])).unwrap_err()),
            "labels.data"
        );
        assert_eq!(field_of(decode_idx(&[0, 0], &labels(2, &[0])).unwrap_err()), "images.magic");
        let mut bad_label_magic = labels(2, &[0, 1]);
        bad_label_magic[3] = 0x03;
        assert_eq!(
            field_of(decode_idx(&images(2, &px), &bad_label_magic).unwrap_err()),
            "labels.magic"
        );
    }

    #[test]
    fn gz_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let ds = decode_idx(&images(2, &[0, 255, 51, 0, 1, 2, 3, 4]), &labels(2, &[3, 1])).unwrap();
        for ext in ["", ".gz"] {
            let (i, l) = (
                dir.path().join(format!("i{ext}")),
                dir.path().join(format!("l{ext}")),
            );
            write_idx(&ds, &i, &l).unwrap();
            assert_eq!(load_idx(&i, &l).unwrap(), ds);
        }
    }
}
