//! Delta-indexed sparse weight streams.
//!
//! A flattened weight array is stored as its nonzero values plus one `u8`
//! index difference per value. The first delta is the absolute index of the
//! first stored entry; every later delta is the gap to the previous entry and
//! is at least 1. Gaps wider than 255 are bridged with padding entries whose
//! value is zero and whose delta is 255, so a single forward pass over the
//! prefix sums recovers every position.
//!
//! The structure keeps the "CSC" name used by the deployment tooling even
//! though it is a flat delta-indexed vector rather than a column-pointer
//! matrix.

use crate::error::{Error, Result};

/// Scalar types that can live in a sparse stream.
pub trait CscValue: Copy + Default + PartialEq + std::fmt::Debug + Send + Sync + 'static {
    /// Stored width in bytes.
    const WIDTH: usize;
    fn is_zero(&self) -> bool;
}

impl CscValue for f32 {
    const WIDTH: usize = 4;
    /// Only `+0.0` is elided; `-0.0` is kept so decoding is bit-exact.
    fn is_zero(&self) -> bool {
        self.to_bits() == 0
    }
}

impl CscValue for i8 {
    const WIDTH: usize = 1;
    fn is_zero(&self) -> bool {
        *self == 0
    }
}

pub const MAX_DELTA: usize = u8::MAX as usize;

#[derive(Debug, Clone, PartialEq)]
pub struct CscTensor<T> {
    values: Vec<T>,
    index_deltas: Vec<u8>,
    dense_len: usize,
    layer_ref: usize,
}

impl<T: CscValue> CscTensor<T> {
    /// Encodes every nonzero of `flat`, inserting zero padding for gaps above 255.
    pub fn encode(flat: &[T], layer_ref: usize) -> Self {
        let mut values = Vec::new();
        let mut index_deltas = Vec::new();
        // Position of the last stored entry; `None` until the first one, whose
        // delta is measured from 0 and may itself be 0.
        let mut last: Option<usize> = None;
        for (idx, &v) in flat.iter().enumerate() {
            if v.is_zero() {
                continue;
            }
            let mut gap = match last {
                None => idx,
                Some(p) => idx - p,
            };
            while gap > MAX_DELTA {
                values.push(T::default());
                index_deltas.push(MAX_DELTA as u8);
                gap -= MAX_DELTA;
            }
            values.push(v);
            index_deltas.push(gap as u8);
            last = Some(idx);
        }
        Self {
            values,
            index_deltas,
            dense_len: flat.len(),
            layer_ref,
        }
    }

    /// Builds a tensor from raw streams, checking every invariant.
    pub fn from_parts(values: Vec<T>, index_deltas: Vec<u8>, dense_len: usize, layer_ref: usize) -> Result<Self> {
        if values.len() != index_deltas.len() {
            return Err(Error::CountMismatch {
                what: "csc values vs deltas".into(),
                declared: values.len(),
                expected: index_deltas.len(),
            });
        }
        let t = Self {
            values,
            index_deltas,
            dense_len,
            layer_ref,
        };
        t.positions()?;
        Ok(t)
    }

    /// Like [`from_parts`](Self::from_parts) without validation; kernels
    /// still detect overruns while streaming.
    pub fn from_parts_unchecked(values: Vec<T>, index_deltas: Vec<u8>, dense_len: usize, layer_ref: usize) -> Self {
        Self {
            values,
            index_deltas,
            dense_len,
            layer_ref,
        }
    }

    /// Absolute flat position of every stored entry.
    pub fn positions(&self) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(self.index_deltas.len());
        let mut pos = 0usize;
        for (k, &d) in self.index_deltas.iter().enumerate() {
            if k > 0 && d == 0 {
                return Err(Error::NonIncreasingIndex { entry: k });
            }
            pos += d as usize;
            if pos >= self.dense_len {
                return Err(Error::DeltaOverrun {
                    position: pos,
                    dense_len: self.dense_len,
                });
            }
            out.push(pos);
        }
        Ok(out)
    }

    pub fn decode(&self) -> Result<Vec<T>> {
        let mut dense = vec![T::default(); self.dense_len];
        for (pos, &v) in self.positions()?.into_iter().zip(&self.values) {
            dense[pos] = v;
        }
        Ok(dense)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn index_deltas(&self) -> &[u8] {
        &self.index_deltas
    }

    pub fn dense_len(&self) -> usize {
        self.dense_len
    }

    pub fn layer_ref(&self) -> usize {
        self.layer_ref
    }

    /// Stored entries, padding included.
    pub fn entries(&self) -> usize {
        self.values.len()
    }

    /// Entries holding a real (nonzero) weight.
    pub fn nonzeros(&self) -> usize {
        self.values.iter().filter(|v| !v.is_zero()).count()
    }

    pub fn padding_entries(&self) -> usize {
        self.entries() - self.nonzeros()
    }

    /// Bytes taken by values plus one index byte per entry.
    pub fn storage_bytes(&self) -> usize {
        storage_bytes_for(self.entries(), T::WIDTH)
    }

    pub fn cursor(&self) -> DeltaCursor<'_> {
        DeltaCursor::new(&self.index_deltas)
    }

    /// Value at `index`, rescanning the stream from the start.
    pub fn lookup_from_start(&self, index: usize) -> T {
        let mut pos = 0usize;
        for (&d, &v) in self.index_deltas.iter().zip(&self.values) {
            pos += d as usize;
            if pos == index {
                return v;
            }
            if pos > index {
                break;
            }
        }
        T::default()
    }
}

/// Storage for `entries` stream entries whose values are `value_width` bytes.
pub fn storage_bytes_for(entries: usize, value_width: usize) -> usize {
    entries * (value_width + 1)
}

/// Forward-only walk over a delta stream.
///
/// Tracks the running prefix sum (`position`) and the stream index `s` of the
/// entry it belongs to. Every call to [`advance`](Self::advance) is counted so
/// callers can verify a kernel touched the stream at most once.
#[derive(Debug, Clone)]
pub struct DeltaCursor<'a> {
    deltas: &'a [u8],
    s: usize,
    position: usize,
    advances: usize,
}

impl<'a> DeltaCursor<'a> {
    pub fn new(deltas: &'a [u8]) -> Self {
        let position = deltas.first().map_or(usize::MAX, |&d| d as usize);
        Self {
            deltas,
            s: 0,
            position,
            advances: 0,
        }
    }

    /// Absolute position of the current entry; `usize::MAX` once exhausted.
    #[inline]
    pub fn position(&self) -> usize {
        self.position
    }

    #[inline]
    pub fn entry(&self) -> usize {
        self.s
    }

    pub fn advances(&self) -> usize {
        self.advances
    }

    pub fn is_exhausted(&self) -> bool {
        self.position == usize::MAX
    }

    #[inline]
    pub fn advance(&mut self) {
        self.s += 1;
        self.advances += 1;
        self.position = match self.deltas.get(self.s) {
            Some(&d) => self.position + d as usize,
            None => usize::MAX,
        };
    }

    /// Moves forward until the prefix sum reaches `index`; returns the entry
    /// index if one is stored exactly there.
    #[inline]
    pub fn seek(&mut self, index: usize) -> Option<usize> {
        while self.position < index {
            self.advance();
        }
        (self.position == index).then_some(self.s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let t = CscTensor::encode(&[0.0f32, 3.0, 0.0, 0.0, 5.0], 0);
        assert_eq!(t.values(), &[3.0, 5.0]);
        assert_eq!(t.index_deltas(), &[1, 3]);
        assert_eq!(t.storage_bytes(), 10);
    }

    #[test]
    fn first_nonzero_beyond_255_is_padded() {
        let mut flat = vec![0i8; 400];
        flat[300] = 7;
        let t = CscTensor::encode(&flat, 0);
        assert_eq!(t.values(), &[0, 7]);
        assert_eq!(t.index_deltas(), &[255, 45]);
        // independent prefix-sum check of where the 7 lands
        let sum: usize = t.index_deltas().iter().map(|&d| d as usize).sum();
        assert_eq!(sum, 300);
        assert_eq!(t.decode().unwrap(), flat);
        assert_eq!(t.nonzeros(), 1);
        assert_eq!(t.padding_entries(), 1);
    }

    #[test]
    fn negative_zero_survives() {
        let flat = [0.0f32, -0.0, 1.5, 0.0];
        let t = CscTensor::encode(&flat, 0);
        assert_eq!(t.entries(), 2);
        let back = t.decode().unwrap();
        assert!(back.iter().zip(&flat).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn all_zero_is_empty() {
        let t = CscTensor::encode(&[0.0f32; 37], 2);
        assert!(t.values().is_empty());
        assert!(t.index_deltas().is_empty());
        assert_eq!(t.storage_bytes(), 0);
        assert_eq!(t.decode().unwrap(), vec![0.0; 37]);
    }

    #[test]
    fn nonzero_at_zero_has_zero_delta() {
        let t = CscTensor::encode(&[4i8, 0, 1], 0);
        assert_eq!(t.index_deltas(), &[0, 2]);
    }

    #[test]
    fn adversarial_gaps_round_trip() {
        for gap in [254usize, 255, 256, 510, 511, 765, 766] {
            let mut flat = vec![0.0f32; 2 * gap + 3];
            flat[0] = 1.0;
            flat[gap] = 2.0;
            flat[2 * gap + 2] = -3.0;
            let t = CscTensor::encode(&flat, 0);
            assert!(t.index_deltas().iter().skip(1).all(|&d| d >= 1));
            assert_eq!(t.decode().unwrap(), flat, "gap {gap}");
            // a gap g needs ceil(g / 255) - 1 fillers
            assert_eq!(t.padding_entries(), (gap - 1) / 255 + (gap + 1) / 255, "gap {gap}");
        }
    }

    #[test]
    fn overrun_detected() {
        let t = CscTensor::from_parts_unchecked(vec![1.0f32, 2.0], vec![3, 4], 6, 0);
        assert!(matches!(t.decode(), Err(Error::DeltaOverrun { position: 7, dense_len: 6 })));
        assert!(CscTensor::from_parts(vec![1.0f32, 2.0], vec![3, 4], 6, 0).is_err());
        assert!(CscTensor::from_parts(vec![1.0f32, 2.0], vec![3, 2], 6, 0).is_ok());
    }

    #[test]
    fn repeated_position_rejected() {
        let t = CscTensor::from_parts_unchecked(vec![1i8, 2], vec![1, 0], 6, 0);
        assert_eq!(t.decode(), Err(Error::NonIncreasingIndex { entry: 1 }));
    }

    #[test]
    fn byte_accounting_per_stage() {
        assert_eq!(storage_bytes_for(4967, f32::WIDTH), 4967 * 5);
        assert_eq!(storage_bytes_for(4891, i8::WIDTH), 4891 * 2);
    }

    #[test]
    fn cursor_seek_is_forward_only() {
        let t = CscTensor::encode(&[0.0f32, 3.0, 0.0, 0.0, 5.0], 0);
        let mut c = t.cursor();
        assert_eq!(c.seek(0), None);
        assert_eq!(c.seek(1), Some(0));
        assert_eq!(c.seek(2), None);
        assert_eq!(c.seek(4), Some(1));
        assert_eq!(c.seek(5), None);
        assert!(c.is_exhausted());
        assert!(c.advances() <= t.entries());
    }

    #[test]
    fn lookup_from_start_matches_decode() {
        let mut flat = vec![0.0f32; 700];
        flat[3] = 1.0;
        flat[600] = 2.0;
        let t = CscTensor::encode(&flat, 0);
        for (i, &v) in flat.iter().enumerate() {
            assert_eq!(t.lookup_from_start(i), v);
        }
    }
}
