//! The covariance matrix `Sigma` of the weighted interpretable features and
//! its closed-form inverse.
//!
//! `Sigma` has `alpha_0` in the corner, `alpha_1` on the rest of the first
//! row, first column and diagonal, and `alpha_2` everywhere else. Its inverse
//! has the same pattern with entries `sigma_0 .. sigma_3` scaled by `1/c_d`.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::sampler::{psi, Bandwidth};
use crate::theory::alpha::alpha_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaSet {
    pub d: usize,
    pub nu: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// `alpha_1 - alpha_2`, computed without cancellation.
    pub alpha_gap: f64,
    pub c: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
}

/// `c_d`, `sigma_0/c_d .. sigma_3/c_d` in the large-bandwidth limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LargeBandwidthLimits {
    pub c: f64,
    pub sigma0_over_c: f64,
    pub sigma1_over_c: f64,
    pub sigma2_over_c: f64,
    pub sigma3_over_c: f64,
}

impl LargeBandwidthLimits {
    pub fn new(d: usize) -> Self {
        let d = d as f64;
        Self {
            c: (d * d - 1.0) / (12.0 * d),
            sigma0_over_c: 2.0 * (2.0 * d - 1.0) / (d + 1.0),
            sigma1_over_c: -6.0 / (d + 1.0),
            sigma2_over_c: 6.0 * (d * d - 2.0 * d + 3.0) / ((d + 1.0) * (d - 1.0)),
            sigma3_over_c: -6.0 * (d - 3.0) / ((d + 1.0) * (d - 1.0)),
        }
    }
}

/// `c_d` and the `sigma` coefficients for `d >= 2`.
pub fn sigma_set(d: usize, nu: Bandwidth) -> Result<SigmaSet> {
    if d < 2 {
        return Err(Error::OutOfClosedFormDomain { d, min: 2 });
    }
    let alpha0 = alpha_unchecked(0, d, nu);
    let alpha1 = alpha_unchecked(1, d, nu);
    let alpha2 = alpha_unchecked(2, d, nu);
    let df = d as f64;
    let weights: Vec<f64> = (1..=d).map(|s| psi(s as f64 / df, nu)).collect();

    // alpha_1 - alpha_2 = (1/d) sum_s psi_s (1 - s/d) s/(d-1)
    let alpha_gap = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let s = (i + 1) as f64;
            w * (1.0 - s / df) * s / (df - 1.0)
        })
        .collect::<CompensatedSum>()
        .value()
        / df;

    // c_d = (d-1) a0 a2 - d a1^2 + a0 a1 = (1/(2d)) sum_{s,t} psi_s psi_t ((s-t)/d)^2
    let mut acc = CompensatedSum::new();
    for (i, wi) in weights.iter().enumerate() {
        for (j, wj) in weights.iter().enumerate().skip(i + 1) {
            let gap = (j - i) as f64 / df;
            acc.add(wi * wj * gap * gap);
        }
    }
    let c = acc.value() / df;

    let sigma3 = (alpha1 * alpha1 - alpha0 * alpha2) / alpha_gap;
    Ok(SigmaSet {
        d,
        nu: nu.value(),
        alpha0,
        alpha1,
        alpha2,
        alpha_gap,
        c,
        sigma0: (df - 1.0) * alpha2 + alpha1,
        sigma1: -alpha1,
        // sigma_2 - sigma_3 = c_d / (alpha_1 - alpha_2)
        sigma2: c / alpha_gap + sigma3,
        sigma3,
    })
}

impl SigmaSet {
    pub fn new(d: usize, nu: Bandwidth) -> Result<Self> {
        sigma_set(d, nu)
    }

    /// `c_d` from its defining expression (subject to cancellation).
    pub fn c_definitional(&self) -> f64 {
        let d = self.d as f64;
        (d - 1.0) * self.alpha0 * self.alpha2 - d * self.alpha1 * self.alpha1 + self.alpha0 * self.alpha1
    }

    /// `sigma_2` from its defining expression.
    pub fn sigma2_definitional(&self) -> f64 {
        let d = self.d as f64;
        let (a0, a1, a2) = (self.alpha0, self.alpha1, self.alpha2);
        ((d - 2.0) * a0 * a2 - (d - 1.0) * a1 * a1 + a0 * a1) / (a1 - a2)
    }

    pub fn limits(&self) -> LargeBandwidthLimits {
        LargeBandwidthLimits::new(self.d)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d + 1, self.d + 1, |i, k| match (i, k) {
            (0, 0) => self.alpha0,
            (0, _) | (_, 0) => self.alpha1,
            _ if i == k => self.alpha1,
            _ => self.alpha2,
        })
    }

    pub fn inverse_matrix(&self) -> DMatrix<f64> {
        let inv_c = 1.0 / self.c;
        DMatrix::from_fn(self.d + 1, self.d + 1, |i, k| {
            inv_c
                * match (i, k) {
                    (0, 0) => self.sigma0,
                    (0, _) | (_, 0) => self.sigma1,
                    _ if i == k => self.sigma2,
                    _ => self.sigma3,
                }
        })
    }

    /// Spectral norm of `Sigma^{-1}` from its eigenstructure: eigenvalue
    /// `(sigma_2 - sigma_3)/c_d` with multiplicity `d - 1` and the two
    /// eigenvalues of the block acting on `e_0` and the normalized all-ones
    /// vector of the word coordinates.
    pub fn inverse_operator_norm(&self) -> f64 {
        let d = self.d as f64;
        let off = self.sigma1 * d.sqrt();
        let block = Matrix2::new(self.sigma0, off, off, self.sigma2 + (d - 1.0) * self.sigma3) / self.c;
        let eig = block.symmetric_eigenvalues();
        let bulk = (self.sigma2 - self.sigma3) / self.c;
        eig.iter().fold(bulk.abs(), |m, v| m.max(v.abs()))
    }

    /// `70 d^{3/2} exp(5 / (2 nu^2))`.
    pub fn operator_norm_bound(&self) -> f64 {
        70.0 * (self.d as f64).powf(1.5) * (5.0 / (2.0 * self.nu * self.nu)).exp()
    }

    /// `exp(-1 / (2 nu^2)) / 6`.
    pub fn alpha_gap_lower_bound(&self) -> f64 {
        (-1.0 / (2.0 * self.nu * self.nu)).exp() / 6.0
    }

    /// `exp(-2 / nu^2) / 40`.
    pub fn c_lower_bound(&self) -> f64 {
        (-2.0 / (self.nu * self.nu)).exp() / 40.0
    }
}

pub fn sigma_matrix(d: usize, nu: Bandwidth) -> Result<DMatrix<f64>> {
    Ok(sigma_set(d, nu)?.matrix())
}

pub fn sigma_inverse(d: usize, nu: Bandwidth) -> Result<DMatrix<f64>> {
    Ok(sigma_set(d, nu)?.inverse_matrix())
}

/// Spectral norm of a symmetric matrix via its eigenvalues.
pub fn symmetric_operator_norm(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nu(v: f64) -> Bandwidth {
        Bandwidth::new(v).unwrap()
    }

    const GRID_D: [usize; 5] = [2, 5, 10, 30, 100];
    const GRID_NU: [f64; 4] = [0.1, 0.25, 1.0, 10.0];

    #[test]
    fn domain() {
        assert!(matches!(sigma_set(1, nu(1.0)), Err(Error::OutOfClosedFormDomain { d: 1, min: 2 })));
        assert!(sigma_set(0, nu(1.0)).is_err());
    }

    #[test]
    fn stable_and_definitional_forms_agree() {
        for d in GRID_D {
            for v in [0.25, 1.0, 10.0] {
                let s = sigma_set(d, nu(v)).unwrap();
                assert!((s.c - s.c_definitional()).abs() <= 1e-12 * s.c.max(1.0), "d={d} nu={v}");
                assert!((s.alpha_gap - (s.alpha1 - s.alpha2)).abs() < 1e-14);
                assert!((s.sigma2 - s.sigma2_definitional()).abs() <= 1e-10 * s.sigma2.abs().max(1.0));
                assert_eq!(s.sigma1, -s.alpha1);
            }
        }
    }

    #[test]
    fn large_bandwidth_limits() {
        let s = sigma_set(5, Bandwidth::INFINITE).unwrap();
        assert!((s.c - 0.4).abs() < 1e-14);
        for d in [3, 5, 30, 200] {
            let s = sigma_set(d, Bandwidth::INFINITE).unwrap();
            let l = s.limits();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
            assert!(close(s.c, l.c));
            assert!(close(s.sigma0 / s.c, l.sigma0_over_c));
            assert!(close(s.sigma1 / s.c, l.sigma1_over_c));
            assert!(close(s.sigma2 / s.c, l.sigma2_over_c));
            assert!(close(s.sigma3 / s.c, l.sigma3_over_c), "d={d} {} {}", s.sigma3 / s.c, l.sigma3_over_c);
        }
        let l = LargeBandwidthLimits::new(10_000);
        assert!((l.sigma2_over_c - 6.0).abs() < 2e-3);
    }

    #[test]
    fn inverse_identity_on_well_conditioned_grid() {
        for d in GRID_D {
            for v in GRID_NU {
                let s = sigma_set(d, nu(v)).unwrap();
                if s.c < 1e-6 {
                    continue;
                }
                let prod = s.matrix() * s.inverse_matrix();
                let dev = (prod - DMatrix::identity(d + 1, d + 1)).abs().max();
                assert!(dev < 1e-10, "d={d} nu={v}: {dev}");
            }
        }
    }

    #[test]
    fn invertibility_and_norm_bounds() {
        for d in GRID_D {
            for v in GRID_NU {
                let s = sigma_set(d, nu(v)).unwrap();
                assert!(s.c > 0.0);
                assert!(s.alpha_gap >= s.alpha_gap_lower_bound());
                assert!(s.c >= s.c_lower_bound());
                assert!(s.inverse_operator_norm() <= s.operator_norm_bound());
            }
        }
        let s = sigma_set(30, nu(0.25)).unwrap();
        assert!(s.c >= s.c_lower_bound() && s.c > 0.0);
    }

    #[test]
    fn analytic_norm_matches_eigen_solver() {
        for d in [2, 5, 10, 30] {
            for v in [0.25, 1.0, 10.0] {
                let s = sigma_set(d, nu(v)).unwrap();
                let numeric = symmetric_operator_norm(&s.inverse_matrix());
                assert!((numeric - s.inverse_operator_norm()).abs() <= 1e-9 * numeric);
            }
        }
    }

    #[test]
    fn matrix_pattern() {
        let s = sigma_set(4, nu(0.5)).unwrap();
        let m = s.matrix();
        for j in 1..=4 {
            assert_eq!(m[(j, j)], s.alpha1);
            assert_eq!(m[(0, j)], s.alpha1);
            assert_eq!(m[(j, 0)], s.alpha1);
        }
        assert_eq!(m[(1, 2)], s.alpha2);
        assert_eq!(m[(0, 0)], s.alpha0);
    }
}
