//! The `alpha_p = E[pi * z_1 ... z_p]` coefficients.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::sampler::{psi, Bandwidth};

/// Probability that `p` given words all survive when `s` distinct words out
/// of `d` are removed: `prod_{k<p} (d - s - k) / (d - k)`.
pub(crate) fn survival_given_s(p: usize, d: usize, s: usize) -> f64 {
    let mut prod = 1.0;
    for k in 0..p {
        if d < s + k + 1 {
            return 0.0;
        }
        prod *= (d - s - k) as f64 / (d - k) as f64;
    }
    prod
}

/// `alpha_p = (1/d) sum_{s=1}^{d} prod_{k<p} (d-s-k)/(d-k) psi(s/d)`.
pub fn alpha(p: usize, d: usize, nu: Bandwidth) -> Result<f64> {
    if d == 0 {
        return Err(Error::EmptyLocalDictionary);
    }
    if p > d {
        return Err(Error::OrderOutOfRange { p, d });
    }
    Ok(alpha_unchecked(p, d, nu))
}

/// As [`alpha`], returning 0 for `p > d` (more than `d` distinct words can
/// never survive).
pub(crate) fn alpha_unchecked(p: usize, d: usize, nu: Bandwidth) -> f64 {
    let mut acc = CompensatedSum::new();
    for s in 1..=d {
        let prob = survival_given_s(p, d, s);
        if prob > 0.0 {
            acc.add(prob * psi(s as f64 / d as f64, nu));
        }
    }
    acc.value() / d as f64
}

/// Large-bandwidth limit `(d - p) / ((p + 1) d)`, which is also the upper
/// bound of `alpha_p`.
pub fn alpha_limit(p: usize, d: usize) -> f64 {
    if p >= d {
        return 0.0;
    }
    (d - p) as f64 / ((p + 1) * d) as f64
}

/// `exp(-1/(2 nu^2)) (d - p) / ((p + 1) d)`.
pub fn alpha_lower_bound(p: usize, d: usize, nu: Bandwidth) -> f64 {
    nu.min_weight() * alpha_limit(p, d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaCoefficients {
    pub d: usize,
    pub nu: f64,
    pub values: Vec<f64>,
}

impl AlphaCoefficients {
    /// `alpha_0 .. alpha_{p_max}`.
    pub fn new(d: usize, nu: Bandwidth, p_max: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::EmptyLocalDictionary);
        }
        if p_max > d {
            return Err(Error::OrderOutOfRange { p: p_max, d });
        }
        Ok(Self { d, nu: nu.value(), values: (0..=p_max).map(|p| alpha_unchecked(p, d, nu)).collect() })
    }

    pub fn get(&self, p: usize) -> f64 {
        self.values[p]
    }

    pub fn p_max(&self) -> usize {
        self.values.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nu(v: f64) -> Bandwidth {
        Bandwidth::new(v).unwrap()
    }

    #[test]
    fn limits_and_zero_top_order() {
        assert!((alpha(1, 5, nu(1e6)).unwrap() - 0.4).abs() < 1e-10);
        assert_eq!(alpha(1, 5, Bandwidth::INFINITE).unwrap(), 0.4);
        for d in 1..=12 {
            assert_eq!(alpha(d, d, nu(0.25)).unwrap(), 0.0);
            assert_eq!(alpha(0, d, Bandwidth::INFINITE).unwrap(), 1.0);
        }
        assert!(matches!(alpha(4, 3, nu(1.0)), Err(Error::OrderOutOfRange { p: 4, d: 3 })));
    }

    #[test]
    fn small_case_by_hand() {
        // d = 2: alpha_0 = (psi(1/2) + psi(1)) / 2, alpha_1 = psi(1/2) / 4.
        let b = nu(0.5);
        let a0 = (psi(0.5, b) + psi(1.0, b)) / 2.0;
        assert!((alpha(0, 2, b).unwrap() - a0).abs() < 1e-16);
        assert!((alpha(1, 2, b).unwrap() - psi(0.5, b) / 4.0).abs() < 1e-16);
    }

    #[test]
    fn bounds_and_ordering() {
        for d in [2, 5, 10, 30, 100] {
            for v in [0.1, 0.25, 1.0, 10.0] {
                let a = AlphaCoefficients::new(d, nu(v), d.min(6)).unwrap();
                for p in 0..=a.p_max() {
                    let x = a.get(p);
                    assert!(x <= alpha_limit(p, d) * (1.0 + 1e-12));
                    assert!(x >= alpha_lower_bound(p, d, nu(v)) * (1.0 - 1e-12));
                    if p > 0 {
                        assert!(x <= a.get(p - 1));
                    }
                }
            }
        }
    }
}
