use std::collections::HashMap;
use std::ops::Index;

use crate::error::{Error, Result};

/// Common surface of value tables so solvers can work on either kind.
pub trait ValueTable: Clone {
    /// `max |self − other|`; errors when the shapes differ.
    fn sup_distance(&self, other: &Self) -> Result<f64>;

    /// Largest stored absolute value.
    fn abs_max(&self) -> f64;

    fn is_finite(&self) -> bool;
}

/// State values `v[s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VTable {
    values: Vec<f64>,
}

impl VTable {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n_states: usize) -> Self {
        Self::new(vec![0.0; n_states])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

impl Index<usize> for VTable {
    type Output = f64;

    fn index(&self, s: usize) -> &f64 {
        &self.values[s]
    }
}

impl ValueTable for VTable {
    fn sup_distance(&self, other: &Self) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::shape(self.len(), other.len()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs())))
    }

    fn abs_max(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
    }

    fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Debug)]
enum Storage {
    Dense(Vec<f64>),
    /// Rows keyed by state index; absent rows read as the default row.
    Sparse(HashMap<usize, Box<[f64]>>),
}

/// Action values `q[s][a]`, stored densely or as a sparse map of rows.
///
/// Both storage kinds share read semantics: a sparse table answers every
/// read of an untouched row with its default value.
#[derive(Clone, Debug)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    default_row: Box<[f64]>,
    storage: Storage,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_states,
            n_actions,
            default_row: vec![value; n_actions].into(),
            storage: Storage::Dense(vec![value; n_states * n_actions]),
        }
    }

    /// Sparse table whose absent entries read as `default`.
    pub fn sparse(n_states: usize, n_actions: usize, default: f64) -> Self {
        Self {
            n_states,
            n_actions,
            default_row: vec![default; n_actions].into(),
            storage: Storage::Sparse(HashMap::new()),
        }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::shape(n_states * n_actions, values.len()));
        }
        Ok(Self {
            n_states,
            n_actions,
            default_row: vec![0.0; n_actions].into(),
            storage: Storage::Dense(values),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(Error::shape(format!("{n_actions} actions per row"), "ragged rows"));
        }
        Self::from_vec(rows.len(), n_actions, rows.concat())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse(_))
    }

    /// Number of rows held in memory.
    pub fn stored_rows(&self) -> usize {
        match &self.storage {
            Storage::Dense(_) => self.n_states,
            Storage::Sparse(map) => map.len(),
        }
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        match &self.storage {
            Storage::Dense(v) => &v[s * self.n_actions..(s + 1) * self.n_actions],
            Storage::Sparse(map) => map.get(&s).map_or(&self.default_row, |r| r),
        }
    }

    #[inline]
    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        debug_assert!(s < self.n_states);
        match &mut self.storage {
            Storage::Dense(v) => &mut v[s * self.n_actions..(s + 1) * self.n_actions],
            Storage::Sparse(map) => map.entry(s).or_insert_with(|| self.default_row.clone()),
        }
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.row(s)[a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.row_mut(s)[a] = value;
    }

    #[inline]
    pub fn max_value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Dense values in row-major order, `None` for sparse storage.
    pub fn dense_values(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Dense(v) => Some(v),
            Storage::Sparse(_) => None,
        }
    }

    /// States whose rows may differ from the default row.
    fn touched_states(&self) -> Box<dyn Iterator<Item = usize> + '_> {
        match &self.storage {
            Storage::Dense(_) => Box::new(0..self.n_states),
            Storage::Sparse(map) => Box::new(map.keys().copied()),
        }
    }

    /// Whether some state is held by neither table (so defaults get compared).
    fn has_shared_default_rows(&self, other: &Self) -> bool {
        match (&self.storage, &other.storage) {
            (Storage::Sparse(a), Storage::Sparse(b)) => {
                let union = a.len() + b.keys().filter(|k| !a.contains_key(k)).count();
                union < self.n_states
            }
            _ => false,
        }
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::shape(
                format!("{}x{}", self.n_states, self.n_actions),
                format!("{}x{}", other.n_states, other.n_actions),
            ));
        }
        Ok(())
    }

    fn row_distance(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
    }
}

impl PartialEq for QTable {
    fn eq(&self, other: &Self) -> bool {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return false;
        }
        if let (Storage::Dense(a), Storage::Dense(b)) = (&self.storage, &other.storage) {
            return a == b;
        }
        if self.has_shared_default_rows(other) && self.default_row != other.default_row {
            return false;
        }
        self.touched_states()
            .chain(other.touched_states())
            .all(|s| self.row(s) == other.row(s))
    }
}

impl ValueTable for QTable {
    fn sup_distance(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        let mut dist = if self.has_shared_default_rows(other) {
            Self::row_distance(&self.default_row, &other.default_row)
        } else {
            0.0
        };
        for s in self.touched_states().chain(other.touched_states()) {
            dist = dist.max(Self::row_distance(self.row(s), other.row(s)));
        }
        Ok(dist)
    }

    fn abs_max(&self) -> f64 {
        let stored = match &self.storage {
            Storage::Dense(v) => v.iter().fold(0.0, |m, x| f64::max(m, x.abs())),
            Storage::Sparse(map) => map
                .values()
                .flat_map(|r| r.iter())
                .fold(0.0, |m, x| f64::max(m, x.abs())),
        };
        if self.stored_rows() < self.n_states {
            stored.max(self.default_row.iter().fold(0.0, |m, x| f64::max(m, x.abs())))
        } else {
            stored
        }
    }

    fn is_finite(&self) -> bool {
        self.default_row.iter().all(|x| x.is_finite())
            && self.touched_states().all(|s| self.row(s).iter().all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_reads_default_for_absent_rows() {
        let mut q = QTable::sparse(150usize.pow(4), 2, 0.0);
        assert_eq!(q.get(123_456_789, 1), 0.0);
        q.set(42, 1, 3.5);
        assert_eq!(q.get(42, 1), 3.5);
        assert_eq!(q.get(42, 0), 0.0);
        assert_eq!(q.stored_rows(), 1);
    }

    #[test]
    fn dense_and_sparse_agree_on_reads() {
        let mut dense = QTable::zeros(10, 3);
        let mut sparse = QTable::sparse(10, 3, 0.0);
        for (s, a, v) in [(0, 0, 1.0), (9, 2, -4.0), (4, 1, 2.5)] {
            dense.set(s, a, v);
            sparse.set(s, a, v);
        }
        assert_eq!(dense, sparse);
        assert_eq!(sparse, dense);
        assert_eq!(dense.sup_distance(&sparse).unwrap(), 0.0);
        sparse.set(5, 0, 1.0);
        assert_eq!(dense.sup_distance(&sparse).unwrap(), 1.0);
        assert_eq!(sparse.abs_max(), 4.0);
    }

    #[test]
    fn sparse_defaults_enter_distance() {
        let a = QTable::sparse(5, 2, 1.0);
        let b = QTable::sparse(5, 2, -1.0);
        assert_eq!(a.sup_distance(&b).unwrap(), 2.0);
        assert_ne!(a, b);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(QTable::zeros(2, 2).sup_distance(&QTable::zeros(2, 3)).is_err());
        assert!(QTable::from_vec(2, 2, vec![0.0; 3]).is_err());
        assert!(QTable::from_rows(&[vec![0.0, 1.0], vec![0.0]]).is_err());
    }
}
