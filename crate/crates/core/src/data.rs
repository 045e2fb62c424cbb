//! Binary datasets with an explicit missingness mask.
//!
//! Rows are stored as bit sets: bit `v` of a row word holds variable `Var(v)`.
//! The seven study variables occupy bits 0..=6; extra auxiliary columns loaded
//! from CSV take bits 7 and up.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Column identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u8);

impl Var {
    /// Auxiliary variable (parent smoking).
    pub const A: Var = Var(0);
    /// Sex; always fully observed.
    pub const C1: Var = Var(1);
    pub const C2: Var = Var(2);
    pub const C3: Var = Var(3);
    /// Exposure.
    pub const X: Var = Var(4);
    /// Mediator.
    pub const Z: Var = Var(5);
    /// Outcome.
    pub const Y: Var = Var(6);

    pub const STUDY: [Var; 7] = [Var::A, Var::C1, Var::C2, Var::C3, Var::X, Var::Z, Var::Y];
    /// Variables that may carry missing values, in default visit order.
    pub const INCOMPLETE: [Var; 5] = [Var::C2, Var::C3, Var::X, Var::Z, Var::Y];
    /// Variables used by the mediation analysis.
    pub const ANALYSIS: [Var; 6] = [Var::C1, Var::C2, Var::C3, Var::X, Var::Z, Var::Y];

    pub const MAX_VARS: usize = 32;

    #[inline]
    pub const fn bit(self) -> u32 {
        1 << self.0
    }

    #[inline]
    pub fn of(self, row: u32) -> bool {
        row & self.bit() != 0
    }

    pub fn name(self) -> Option<&'static str> {
        const NAMES: [&str; 7] = ["A", "C1", "C2", "C3", "X", "Z", "Y"];
        NAMES.get(self.0 as usize).copied()
    }

    pub fn from_name(name: &str) -> Option<Var> {
        Var::STUDY.iter().copied().find(|v| v.name() == Some(name))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(n) => f.write_str(n),
            None => write!(f, "AUX{}", self.0),
        }
    }
}

impl Serialize for Var {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.name() {
            Some(n) => s.serialize_str(n),
            None => Err(serde::ser::Error::custom("auxiliary columns are not serializable by id")),
        }
    }
}

impl<'de> Deserialize<'de> for Var {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Var::from_name(&s).ok_or_else(|| serde::de::Error::custom(alloc::format!("unknown variable `{s}`")))
    }
}

/// Bit mask of the analysis variables.
pub const ANALYSIS_MASK: u32 = 0b111_1110;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("column length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("variable {0} must be fully observed")]
    MustBeComplete(Var),
    #[error("missing value in {var} at row {row}")]
    Missing { var: Var, row: usize },
    #[error("too many columns ({0}); at most 32 are supported")]
    TooManyColumns(usize),
    #[error("dataset has no rows")]
    Empty,
}

/// Hidden ground truth kept alongside a masked dataset for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    pub complete: Vec<u32>,
    pub w: Vec<bool>,
}

/// Rows of binary variables plus a mask. A masked cell stores 0 in `values`;
/// the true value, if known, lives only in the latent block.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    aux: Vec<String>,
    values: Vec<u32>,
    missing: Vec<u32>,
    latent: Option<Latent>,
}

impl Dataset {
    /// Fully observed dataset over the seven study variables.
    pub fn complete(values: Vec<u32>) -> Self {
        let n = values.len();
        Dataset { aux: Vec::new(), values, missing: vec![0; n], latent: None }
    }

    /// Dataset with extra auxiliary columns and an explicit mask.
    pub fn with_mask(aux: Vec<String>, values: Vec<u32>, missing: Vec<u32>) -> Result<Self, DataError> {
        if 7 + aux.len() > Var::MAX_VARS {
            return Err(DataError::TooManyColumns(7 + aux.len()));
        }
        if values.len() != missing.len() {
            return Err(DataError::LengthMismatch { expected: values.len(), got: missing.len() });
        }
        let values = values.iter().zip(&missing).map(|(v, m)| v & !m).collect();
        Ok(Dataset { aux, values, missing, latent: None })
    }

    pub(crate) fn masked_from(complete: Vec<u32>, missing: Vec<u32>, w: Vec<bool>) -> Self {
        let values = complete.iter().zip(&missing).map(|(v, m)| v & !m).collect();
        Dataset { aux: Vec::new(), values, missing, latent: Some(Latent { complete, w }) }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn n_vars(&self) -> usize {
        7 + self.aux.len()
    }

    pub fn aux_names(&self) -> &[String] {
        &self.aux
    }

    /// All variables in column order.
    pub fn vars(&self) -> impl Iterator<Item = Var> {
        (0..self.n_vars() as u8).map(Var)
    }

    /// Auxiliary predictors: `A` plus any extra columns.
    pub fn auxiliaries(&self) -> Vec<Var> {
        let mut v = vec![Var::A];
        v.extend((7..self.n_vars() as u8).map(Var));
        v
    }

    pub fn column_name(&self, var: Var) -> String {
        match var.name() {
            Some(n) => n.into(),
            None => self.aux[var.0 as usize - 7].clone(),
        }
    }

    #[inline]
    pub fn get(&self, row: usize, var: Var) -> Option<bool> {
        if self.missing[row] & var.bit() != 0 {
            None
        } else {
            Some(var.of(self.values[row]))
        }
    }

    #[inline]
    pub fn is_missing(&self, row: usize, var: Var) -> bool {
        self.missing[row] & var.bit() != 0
    }

    /// Row bits with masked cells zeroed.
    pub fn rows(&self) -> &[u32] {
        &self.values
    }

    pub fn mask(&self) -> &[u32] {
        &self.missing
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m != 0)
    }

    pub fn latent(&self) -> Option<&Latent> {
        self.latent.as_ref()
    }

    /// The complete data the mask was imposed on, when known.
    pub fn unmask(&self) -> Option<Dataset> {
        if !self.has_missing() {
            return Some(Dataset { latent: None, ..self.clone() });
        }
        self.latent.as_ref().map(|l| Dataset {
            aux: self.aux.clone(),
            values: l.complete.clone(),
            missing: vec![0; l.complete.len()],
            latent: None,
        })
    }

    /// Rows `idx` in order (bootstrap resampling); latent data is dropped.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            aux: self.aux.clone(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
            missing: idx.iter().map(|&i| self.missing[i]).collect(),
            latent: None,
        }
    }

    pub(crate) fn replace_rows(&self, values: Vec<u32>) -> Dataset {
        let n = values.len();
        Dataset { aux: self.aux.clone(), values, missing: vec![0; n], latent: None }
    }

    /// Rejects the dataset if any of `vars` has a masked cell.
    pub fn require_complete(&self, vars: &[Var]) -> Result<(), DataError> {
        let mask = vars.iter().fold(0, |m, v| m | v.bit());
        for (row, &m) in self.missing.iter().enumerate() {
            if m & mask != 0 {
                let var = vars.iter().copied().find(|v| m & v.bit() != 0).unwrap();
                return Err(DataError::Missing { var, row });
            }
        }
        Ok(())
    }

    /// Column of optional values.
    pub fn column(&self, var: Var) -> Vec<Option<bool>> {
        (0..self.n()).map(|r| self.get(r, var)).collect()
    }
}

/// Dense index over the joint pattern of a small set of variables.
#[derive(Debug, Clone)]
pub struct PatternIndex {
    vars: Vec<Var>,
    // Per-byte lookup: index = OR of bytes[b][(row >> 8b) & 0xff].
    bytes: Vec<[u32; 256]>,
}

impl PatternIndex {
    pub fn new(vars: Vec<Var>) -> Self {
        debug_assert!(vars.len() <= 20);
        let n_bytes = vars.iter().map(|v| v.0 as usize / 8 + 1).max().unwrap_or(0);
        let mut bytes = vec![[0u32; 256]; n_bytes];
        for (j, v) in vars.iter().enumerate() {
            bytes[v.0 as usize / 8][1 << (v.0 % 8)] |= 1 << j;
        }
        for lut in bytes.iter_mut() {
            for byte in 3..256usize {
                let low = byte & byte.wrapping_neg();
                if low != byte {
                    lut[byte] = lut[byte ^ low] | lut[low];
                }
            }
        }
        PatternIndex { vars, bytes }
    }

    pub fn len(&self) -> usize {
        1 << self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, row: u32) -> usize {
        let mut idx = 0u32;
        for (b, lut) in self.bytes.iter().enumerate() {
            idx |= lut[((row >> (8 * b)) & 0xff) as usize];
        }
        idx as usize
    }

    /// Row bits realizing pattern `idx`.
    #[inline]
    pub fn expand(&self, idx: usize) -> u32 {
        let mut row = 0u32;
        for (j, v) in self.vars.iter().enumerate() {
            if idx >> j & 1 == 1 {
                row |= v.bit();
            }
        }
        row
    }
}

/// Weighted cell counts over the six analysis variables.
///
/// Analyses of complete binary data depend on the data only through these
/// counts, so bootstrap replicates and model fits work on at most 64 cells
/// instead of `n` rows. Cells are indexed by row bits restricted to
/// [`ANALYSIS_MASK`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellTable {
    weights: Vec<f64>,
}

impl CellTable {
    pub const CELLS: usize = 128;

    pub fn zeros() -> Self {
        CellTable { weights: vec![0.0; Self::CELLS] }
    }

    /// Counts of fully observed analysis rows. Errors on any masked analysis cell.
    pub fn from_dataset(data: &Dataset) -> Result<Self, DataError> {
        data.require_complete(&Var::ANALYSIS)?;
        if data.n() == 0 {
            return Err(DataError::Empty);
        }
        Ok(Self::from_rows(data.rows()))
    }

    pub fn from_rows(rows: &[u32]) -> Self {
        let mut t = Self::zeros();
        for &r in rows {
            t.weights[(r & ANALYSIS_MASK) as usize] += 1.0;
        }
        t
    }

    /// Arbitrary nonnegative weights, e.g. an exact probability table.
    pub fn from_weights<I: IntoIterator<Item = (u32, f64)>>(cells: I) -> Self {
        let mut t = Self::zeros();
        for (row, w) in cells {
            t.weights[(row & ANALYSIS_MASK) as usize] += w;
        }
        t
    }

    #[inline]
    pub fn weight(&self, row: u32) -> f64 {
        self.weights[(row & ANALYSIS_MASK) as usize]
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Nonzero cells as `(row bits, weight)`.
    pub fn cells(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.weights.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(i, w)| (i as u32, *w))
    }

    /// Whether every weight is a whole number (a table of counts).
    pub fn is_integral(&self) -> bool {
        self.weights.iter().all(|w| *w == libm::floor(*w))
    }

    /// Bootstrap replicate: `n` rows drawn with replacement from the rows the
    /// table counts. Sampled as a multinomial over cells via conditional
    /// binomials, which has the same law as resampling individual rows.
    pub fn resample<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> CellTable {
        let mut out = Self::zeros();
        let mut remaining_n = n;
        let mut remaining_w = self.total();
        for (i, &w) in self.weights.iter().enumerate() {
            if w <= 0.0 || remaining_n == 0 {
                continue;
            }
            let p = (w / remaining_w).clamp(0.0, 1.0);
            let k = if p >= 1.0 {
                remaining_n
            } else {
                Binomial::new(remaining_n, p).expect("valid binomial").sample(rng)
            };
            out.weights[i] = k as f64;
            remaining_n -= k;
            remaining_w -= w;
        }
        out
    }

    /// Weighted mean of a 0/1 variable.
    pub fn prevalence(&self, var: Var) -> f64 {
        let tot = self.total();
        self.cells().filter(|(r, _)| var.of(*r)).map(|(_, w)| w).sum::<f64>() / tot
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;

    #[test]
    fn masked_values_are_hidden() {
        let d = Dataset::with_mask(Vec::new(), vec![0b111_1111], vec![Var::C2.bit()]).unwrap();
        assert_eq!(d.get(0, Var::C2), None);
        assert_eq!(d.get(0, Var::C3), Some(true));
        assert_eq!(d.rows()[0] & Var::C2.bit(), 0);
        assert!(d.unmask().is_none());
    }

    #[test]
    fn pattern_index_round_trips() {
        let p = PatternIndex::new(vec![Var::X, Var::C1, Var::Y]);
        for idx in 0..p.len() {
            assert_eq!(p.index(p.expand(idx)), idx);
        }
        assert_eq!(p.index(Var::Y.bit() | Var::Z.bit()), 0b100);
    }

    #[test]
    fn resample_preserves_size_and_support() {
        let rows: Vec<u32> = (0..500u32).map(|i| (i % 7) << 1).collect();
        let t = CellTable::from_rows(&rows);
        let mut rng = StreamSeed(9).stream(0);
        let b = t.resample(500, &mut rng);
        assert_eq!(b.total(), 500.0);
        for (r, _) in b.cells() {
            assert!(t.weight(r) > 0.0);
        }
    }

    #[test]
    fn require_complete_names_variable() {
        let d = Dataset::with_mask(Vec::new(), vec![0, 0], vec![0, Var::Y.bit()]).unwrap();
        assert_eq!(d.require_complete(&Var::ANALYSIS), Err(DataError::Missing { var: Var::Y, row: 1 }));
        assert!(d.require_complete(&[Var::C1]).is_ok());
    }
}
