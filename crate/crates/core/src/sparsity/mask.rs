use crate::error::{Error, Result};

/// One bit per parameter; a set bit marks an active (trainable) weight.
///
/// Bits are stored in `u64` words, least significant bit first, so the packed
/// byte form puts parameter `i` at byte `i / 8`, bit `i % 8`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    words: Vec<u64>,
    len: usize,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BinaryMask {{ len: {}, nnz: {} }}", self.len, self.count_ones())
    }
}

impl BinaryMask {
    pub fn ones(len: usize) -> Self {
        let mut mask = BinaryMask {
            words: vec![u64::MAX; len.div_ceil(64)],
            len,
        };
        mask.clear_tail();
        mask
    }

    pub fn zeros(len: usize) -> Self {
        BinaryMask {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut mask = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                mask.set(i);
            }
        }
        mask
    }

    /// Active where the value is nonzero.
    pub fn support_of(values: &[f64]) -> Self {
        let mut mask = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            if *v != 0.0 {
                mask.set(i);
            }
        }
        mask
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn clear(&mut self, i: usize) {
        assert!(i < self.len, "mask index {i} out of range {}", self.len);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    /// Number of active coordinates.
    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn nnz(&self) -> usize {
        self.count_ones()
    }

    pub fn is_all_ones(&self) -> bool {
        self.count_ones() == self.len
    }

    /// Indices of active coordinates in ascending order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let bit = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + bit)
                }
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    /// Zero every coordinate whose bit is clear.
    pub fn apply(&self, values: &mut [f64]) {
        assert_eq!(values.len(), self.len, "mask/parameter length mismatch");
        for (wi, &word) in self.words.iter().enumerate() {
            let start = wi * 64;
            let width = (self.len - start).min(64);
            let valid = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
            let mut cleared = !word & valid;
            while cleared != 0 {
                values[start + cleared.trailing_zeros() as usize] = 0.0;
                cleared &= cleared - 1;
            }
        }
    }

    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        assert_eq!(self.len, other.len, "mask length mismatch");
        BinaryMask {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect(),
            len: self.len,
        }
    }

    pub fn intersection(&self, other: &BinaryMask) -> BinaryMask {
        assert_eq!(self.len, other.len, "mask length mismatch");
        BinaryMask {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
            len: self.len,
        }
    }

    /// `true` if every active bit of `self` is also active in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.len == other.len && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Packed byte form, `ceil(len / 8)` bytes, LSB-first within each byte.
    pub fn pack(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    pub fn unpack(bytes: &[u8], len: usize) -> Result<Self> {
        let expected = len.div_ceil(8);
        if bytes.len() != expected {
            return Err(Error::format(
                "mask",
                format!(
                    "{} packed bytes for {len} parameters, expected {expected}",
                    bytes.len()
                ),
            ));
        }
        let rem = len % 8;
        if rem != 0 && bytes[expected - 1] >> rem != 0 {
            return Err(Error::format("mask", "padding bits past the last parameter are set"));
        }
        let mut words = vec![0u64; len.div_ceil(64)];
        for (i, &b) in bytes.iter().enumerate() {
            words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        Ok(BinaryMask { words, len })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_layout_is_lsb_first() {
        let m = BinaryMask::from_bools(&[true, false, false, false, false, false, false, true]);
        assert_eq!(m.pack(), vec![0x81]);
        let m = BinaryMask::from_bools(&[false, true, false, false, false, false, false, false, true]);
        assert_eq!(m.pack(), vec![0x02, 0x01]);
    }

    #[test]
    fn fashion_mnist_mask_packs_to_14786_bytes() {
        assert_eq!(BinaryMask::ones(118_282).pack().len(), 14_786);
    }

    #[test]
    fn unpack_rejects_wrong_length_and_dirty_padding() {
        assert!(matches!(
            BinaryMask::unpack(&[0xff], 9),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            BinaryMask::unpack(&[0xff], 4),
            Err(Error::Format { .. })
        ));
        assert_eq!(BinaryMask::unpack(&[0x0f], 4).unwrap(), BinaryMask::ones(4));
    }

    #[test]
    fn ones_has_clean_tail() {
        for len in [0, 1, 63, 64, 65, 130] {
            let m = BinaryMask::ones(len);
            assert_eq!(m.count_ones(), len);
            assert_eq!(m.iter_ones().count(), len);
        }
    }

    #[test]
    fn apply_zeroes_cleared_coordinates_and_is_idempotent() {
        let m = BinaryMask::from_bools(&[true, false, true, false]);
        let mut v = vec![1.0, 2.0, 3.0, 4.0];
        m.apply(&mut v);
        assert_eq!(v, vec![1.0, 0.0, 3.0, 0.0]);
        let before = v.clone();
        m.apply(&mut v);
        assert_eq!(v, before);
    }

    proptest! {
        #[test]
        fn pack_round_trips(bits in proptest::collection::vec(any::<bool>(), 1..300)) {
            let m = BinaryMask::from_bools(&bits);
            let packed = m.pack();
            prop_assert_eq!(packed.len(), bits.len().div_ceil(8));
            let back = BinaryMask::unpack(&packed, bits.len()).unwrap();
            prop_assert_eq!(back.to_bools(), bits);
            prop_assert_eq!(&back, &m);
        }

        #[test]
        fn nnz_matches_popcount(bits in proptest::collection::vec(any::<bool>(), 0..300)) {
            let m = BinaryMask::from_bools(&bits);
            prop_assert_eq!(m.count_ones(), bits.iter().filter(|b| **b).count());
            let ones: Vec<usize> = m.iter_ones().collect();
            let expected: Vec<usize> = bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect();
            prop_assert_eq!(ones, expected);
        }
    }

    #[test]
    fn round_trip_all_short_lengths() {
        for len in 1..=64 {
            let bits: Vec<bool> = (0..len).map(|i| (i * 7 + len) % 3 == 0).collect();
            let m = BinaryMask::from_bools(&bits);
            assert_eq!(BinaryMask::unpack(&m.pack(), len).unwrap(), m);
        }
    }
}
