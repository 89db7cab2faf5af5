//! Named, shaped parameter arrays stored in one flat vector.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location of one parameter array inside the flat vector, viewed as a
/// row-major `rows x cols` matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct P {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl P {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice<'a, T>(&self, w: &'a [T]) -> &'a [T] {
        &w[self.offset..self.offset + self.len()]
    }

    pub fn row<'a, T>(&self, w: &'a [T], r: usize) -> &'a [T] {
        let start = self.offset + r * self.cols;
        &w[start..start + self.cols]
    }

    pub fn at<T: Copy>(&self, w: &[T], r: usize, c: usize) -> T {
        w[self.offset + r * self.cols + c]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

pub enum Init {
    Zeros,
    Constant(f64),
    /// Normal with standard deviation `1/sqrt(fan_in)` times the factor.
    Scaled(f64),
    Uniform(f64, f64),
    Values(Vec<f64>),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
    values: Vec<f64>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append a `rows x cols` array; `fan_in` defaults to `cols`.
    pub fn add<R: Rng + ?Sized>(&mut self, name: impl Into<String>, rows: usize, cols: usize, init: Init, rng: &mut R) -> P {
        let name = name.into();
        debug_assert!(self.entries.iter().all(|e| e.name != name), "duplicate parameter {name}");
        let offset = self.values.len();
        let n = rows * cols;
        match init {
            Init::Zeros => self.values.extend(std::iter::repeat_n(0.0, n)),
            Init::Constant(c) => self.values.extend(std::iter::repeat_n(c, n)),
            Init::Scaled(f) => {
                let std = f / (cols.max(1) as f64).sqrt();
                let d = Normal::new(0.0, std).expect("finite std");
                self.values.extend((0..n).map(|_| d.sample(rng)));
            }
            Init::Uniform(lo, hi) => {
                let d = Uniform::new(lo, hi).expect("valid range");
                self.values.extend((0..n).map(|_| d.sample(rng)));
            }
            Init::Values(v) => {
                assert_eq!(v.len(), n);
                self.values.extend(v);
            }
        }
        self.entries.push(ParamEntry {
            name,
            shape: vec![rows, cols],
            offset,
        });
        P { offset, rows, cols }
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Name of the array owning flat index `i`.
    pub fn name_of(&self, i: usize) -> &str {
        let k = self.entries.partition_point(|e| e.offset <= i) - 1;
        &self.entries[k].name
    }

    /// Replace all values, checking the count.
    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        self.values = values;
        Ok(())
    }

    /// Check that a manifest's entries match this set exactly.
    pub fn check_entries(&self, entries: &[ParamEntry]) -> Result<()> {
        if entries.len() != self.entries.len() {
            return Err(Error::Checkpoint(format!(
                "manifest lists {} parameter arrays, model has {}",
                entries.len(),
                self.entries.len()
            )));
        }
        for (a, b) in entries.iter().zip(&self.entries) {
            if a != b {
                return Err(Error::Checkpoint(format!(
                    "parameter mismatch: manifest has {} {:?}, model has {} {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn offsets_and_names() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ps = ParamSet::new();
        let a = ps.add("a", 2, 3, Init::Zeros, &mut rng);
        let b = ps.add("b", 1, 4, Init::Constant(2.0), &mut rng);
        assert_eq!((a.offset, b.offset), (0, 6));
        assert_eq!(ps.len(), 10);
        assert_eq!(ps.name_of(5), "a");
        assert_eq!(ps.name_of(6), "b");
        assert_eq!(b.at(ps.values(), 0, 3), 2.0);
        assert_eq!(a.row(ps.values(), 1).len(), 3);
    }
}
