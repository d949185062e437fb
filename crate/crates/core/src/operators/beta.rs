use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Decaying advantage coefficients `β_j` with a finite total sum.
///
/// * `Geometric`: `β_j = β₀ λ^j`, total `β₀ / (1 − λ)`.
/// * `InverseSquare`: `β_j = β₀ / (1 + j)²`, total `β₀ π² / 6`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaSchedule {
    Geometric { beta0: f64, lambda: f64 },
    InverseSquare { beta0: f64 },
}

impl BetaSchedule {
    pub fn geometric(beta0: f64, lambda: f64) -> Result<Self> {
        check_beta0(beta0)?;
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidArgument(format!("lambda must lie in (0, 1), got {lambda}")));
        }
        Ok(Self::Geometric { beta0, lambda })
    }

    pub fn inverse_square(beta0: f64) -> Result<Self> {
        check_beta0(beta0)?;
        Ok(Self::InverseSquare { beta0 })
    }

    /// Default schedule for discount `gamma`: geometric, `β₀ = γ`, `λ = 0.999`.
    pub fn default_for(gamma: f64) -> Self {
        Self::Geometric { beta0: gamma, lambda: 0.999 }
    }

    /// The schedule that is identically zero.
    pub fn zero() -> Self {
        Self::Geometric { beta0: 0.0, lambda: 0.5 }
    }

    pub fn beta0(&self) -> f64 {
        match *self {
            Self::Geometric { beta0, .. } | Self::InverseSquare { beta0 } => beta0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.beta0() == 0.0
    }

    pub fn beta_at(&self, j: u64) -> f64 {
        match *self {
            Self::Geometric { beta0, lambda } => {
                if beta0 == 0.0 {
                    0.0
                } else {
                    beta0 * lambda.powf(j as f64)
                }
            }
            Self::InverseSquare { beta0 } => {
                let d = 1.0 + j as f64;
                beta0 / (d * d)
            }
        }
    }

    /// Analytic value of `Σ_{j≥0} β_j`.
    pub fn total_sum(&self) -> f64 {
        match *self {
            Self::Geometric { beta0, lambda } => beta0 / (1.0 - lambda),
            Self::InverseSquare { beta0 } => beta0 * PI * PI / 6.0,
        }
    }

    /// Smallest `J` with `β_j < eps` for every `j ≥ J`.
    pub fn index_below(&self, eps: f64) -> u64 {
        assert!(eps > 0.0, "eps must be positive");
        let beta0 = self.beta0();
        if beta0 < eps {
            return 0;
        }
        let mut j = match *self {
            Self::Geometric { lambda, .. } => ((eps / beta0).ln() / lambda.ln()).floor().max(0.0) as u64,
            Self::InverseSquare { .. } => ((beta0 / eps).sqrt() - 1.0).floor().max(0.0) as u64,
        };
        // The closed forms can land one off under rounding; settle exactly.
        while j > 0 && self.beta_at(j - 1) < eps {
            j -= 1;
        }
        while self.beta_at(j) >= eps {
            j += 1;
        }
        j
    }
}

fn check_beta0(beta0: f64) -> Result<()> {
    if !(beta0.is_finite() && beta0 >= 0.0) {
        return Err(Error::InvalidArgument(format!("beta0 must be finite and >= 0, got {beta0}")));
    }
    Ok(())
}

impl fmt::Display for BetaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Geometric { beta0, lambda } => write!(f, "geometric:{beta0}:{lambda}"),
            Self::InverseSquare { beta0 } => write!(f, "invsq:{beta0}"),
        }
    }
}

impl FromStr for BetaSchedule {
    type Err = Error;

    /// Parses `geometric:<beta0>:<lambda>` or `invsq:<beta0>`.
    fn from_str(s: &str) -> Result<Self> {
        let num = |x: &str| {
            x.parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("bad number '{x}' in beta schedule: {e}")))
        };
        match s.split(':').collect::<Vec<_>>().as_slice() {
            ["geometric", b, l] => Self::geometric(num(b)?, num(l)?),
            ["invsq", b] => Self::inverse_square(num(b)?),
            _ => Err(Error::InvalidArgument(format!(
                "beta schedule '{s}' must be geometric:<beta0>:<lambda> or invsq:<beta0>"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_examples() {
        let b = BetaSchedule::geometric(0.9, 0.5).unwrap();
        assert_eq!(b.beta_at(0), 0.9);
        let partial: f64 = (0..=50).map(|j| b.beta_at(j)).sum();
        assert!(partial <= 1.8);
        assert_eq!(b.total_sum(), 1.8);
    }

    #[test]
    fn inverse_square_partial_sums_bounded() {
        let b = BetaSchedule::inverse_square(1.0).unwrap();
        let mut sum = 0.0;
        for j in 0..1_000_000 {
            sum += b.beta_at(j);
        }
        assert!(sum <= PI * PI / 6.0);
        // Tail beyond 10^6 terms is about 1e-6.
        assert!(PI * PI / 6.0 - sum < 1.1e-6);
    }

    #[test]
    fn index_below_is_exact() {
        for b in [
            BetaSchedule::geometric(0.99, 0.999).unwrap(),
            BetaSchedule::inverse_square(2.0).unwrap(),
        ] {
            for eps in [1e-1, 1e-3, 1e-6] {
                let j = b.index_below(eps);
                assert!(b.beta_at(j) < eps);
                assert!(j == 0 || b.beta_at(j - 1) >= eps);
            }
        }
        assert_eq!(BetaSchedule::zero().index_below(1e-9), 0);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["geometric:0.99:0.999", "invsq:0.5"] {
            let b: BetaSchedule = s.parse().unwrap();
            assert_eq!(b.to_string(), s);
        }
        for bad in ["geometric:0.9", "geometric:0.9:1.0", "invsq:-1", "linear:1", "invsq:x"] {
            assert!(bad.parse::<BetaSchedule>().is_err(), "{bad}");
        }
    }

    #[test]
    fn zero_schedule_is_zero() {
        let z = BetaSchedule::zero();
        assert!(z.is_zero());
        assert!((0..100).all(|j| z.beta_at(j) == 0.0));
    }
}
