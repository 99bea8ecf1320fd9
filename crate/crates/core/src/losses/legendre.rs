use std::fmt;
use std::str::FromStr;

use crate::error::{ensure, Error, Result};
use crate::scalar::Scalar;

/// Normalization of the Legendre features fed to the least-squares models.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum FeatureBasis {
    /// Classical `P_k` with `P_k(1) = 1`.
    Standard,
    /// `sqrt(2k+1) P_k`, orthonormal under the uniform measure on `[-1, 1]`.
    #[default]
    Orthonormal,
}

impl FeatureBasis {
    pub fn features<T: Scalar>(self, x: T, n: usize) -> Result<Vec<T>> {
        let mut p = legendre_features(x, n)?;
        if self == FeatureBasis::Orthonormal {
            for (k, v) in p.iter_mut().enumerate() {
                *v *= T::of(((2 * k + 1) as f64).sqrt());
            }
        }
        Ok(p)
    }

    pub fn tag(self) -> &'static str {
        match self {
            FeatureBasis::Standard => "standard",
            FeatureBasis::Orthonormal => "orthonormal",
        }
    }
}

impl fmt::Display for FeatureBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FeatureBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(FeatureBasis::Standard),
            "orthonormal" => Ok(FeatureBasis::Orthonormal),
            _ => Err(Error::Argument(format!(
                "unknown feature basis '{s}', expected standard or orthonormal"
            ))),
        }
    }
}

/// `P_0(x), ..., P_{n-1}(x)` by the three-term recurrence
/// `(k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}`.
pub fn legendre_features<T: Scalar>(x: T, n: usize) -> Result<Vec<T>> {
    ensure(x.abs() <= T::one(), || format!("Legendre argument {x} outside [-1, 1]"))?;
    let mut p = Vec::with_capacity(n);
    if n == 0 {
        return Ok(p);
    }
    p.push(T::one());
    if n > 1 {
        p.push(x);
    }
    for k in 1..n.saturating_sub(1) {
        let kf = T::of(k as f64);
        let next = ((kf + kf + T::one()) * x * p[k] - kf * p[k - 1]) / (kf + T::one());
        p.push(next);
    }
    Ok(p)
}
