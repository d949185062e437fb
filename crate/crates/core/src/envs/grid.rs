use super::ContinuousState;
use crate::error::{Error, Result};

/// Uniform per-dimension bins over `[lower, upper]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    bins: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    n_cells: u64,
}

impl GridSpec {
    pub fn new(bins: Vec<usize>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if bins.is_empty() || bins.len() != lower.len() || bins.len() != upper.len() {
            return Err(Error::shape(
                format!("{} lower and upper bounds", bins.len()),
                format!("{} lower and {} upper", lower.len(), upper.len()),
            ));
        }
        if let Some(d) = bins.iter().position(|&b| b == 0) {
            return Err(Error::InvalidArgument(format!("dimension {d} has zero bins")));
        }
        for (d, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!("dimension {d}: need finite lower < upper, got [{lo}, {hi}]")));
            }
        }
        let n_cells = bins
            .iter()
            .try_fold(1u64, |acc, &b| acc.checked_mul(b as u64))
            .ok_or_else(|| Error::InvalidArgument("grid cell count overflows 64 bits".into()))?;
        if usize::try_from(n_cells).is_err() {
            return Err(Error::InvalidArgument("grid cell count exceeds the address range".into()));
        }
        Ok(Self { bins, lower, upper, n_cells })
    }

    pub fn dims(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn n_cells(&self) -> u64 {
        self.n_cells
    }

    pub fn bin_width(&self, d: usize) -> f64 {
        (self.upper[d] - self.lower[d]) / self.bins[d] as f64
    }

    /// Bin of `x` along dimension `d`, after clamping into range.
    pub fn bin(&self, d: usize, x: f64) -> usize {
        let (lo, hi, n) = (self.lower[d], self.upper[d], self.bins[d]);
        let x = x.clamp(lo, hi);
        let b = ((x - lo) / (hi - lo) * n as f64).floor();
        // NaN falls through to bin 0.
        if b >= 0.0 { (b as usize).min(n - 1) } else { 0 }
    }

    /// Center point of a flat cell index.
    pub fn cell_center(&self, cell: usize) -> Result<Vec<f64>> {
        if cell as u64 >= self.n_cells {
            return Err(Error::IndexOutOfRange(format!("cell {cell} of {}", self.n_cells)));
        }
        let mut rest = cell;
        let mut center = vec![0.0; self.dims()];
        for d in (0..self.dims()).rev() {
            let b = rest % self.bins[d];
            rest /= self.bins[d];
            center[d] = self.lower[d] + (b as f64 + 0.5) * self.bin_width(d);
        }
        Ok(center)
    }
}

/// Row-major cell index of `s`; the first dimension is the most significant.
pub fn discretize(s: &ContinuousState, g: &GridSpec) -> Result<usize> {
    if s.dim() != g.dims() {
        return Err(Error::shape(format!("{}-dimensional state", g.dims()), format!("{}-dimensional state", s.dim())));
    }
    Ok((0..g.dims()).fold(0usize, |acc, d| acc * g.bins[d] + g.bin(d, s[d])))
}
