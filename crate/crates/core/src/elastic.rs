//! The isotropic Lamé operator `Lu = -D_kk u_i - α D_ki u_k`, its
//! fundamental matrix
//!
//! ```text
//! Φ_ij(x) = c_α r⁻¹ (δ_ij + α/(α+2) ω_i ω_j),   c_α = (α+2) / (8π(α+1)),
//! ```
//!
//! and the divergence `D_i Φ_ij = d_α r⁻² ω_j` with `d_α = -1/(4π(α+1))`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{Mat3, Vec3};

/// Lamé coupling `α`; only values inside the ellipticity window `α > -1`
/// can be constructed.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ElasticParameter(f64);

impl ElasticParameter {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > -1.0 {
            Ok(Self(alpha))
        } else {
            Err(LabError::InvalidParameter(alpha))
        }
    }

    #[inline]
    pub fn alpha(self) -> f64 {
        self.0
    }

    /// `c_α`, the scale of the fundamental matrix.
    #[inline]
    pub fn c_alpha(self) -> f64 {
        (self.0 + 2.0) / (8.0 * PI * (self.0 + 1.0))
    }

    /// `d_α = -2 c_α / (α+2)`.
    #[inline]
    pub fn d_alpha(self) -> f64 {
        -1.0 / (4.0 * PI * (self.0 + 1.0))
    }

    /// The anisotropy ratio `α/(α+2)` multiplying `ω ωᵀ` in `Φ`.
    #[inline]
    pub fn anisotropy(self) -> f64 {
        self.0 / (self.0 + 2.0)
    }
}

impl TryFrom<f64> for ElasticParameter {
    type Error = LabError;
    fn try_from(a: f64) -> Result<Self> {
        Self::new(a)
    }
}

impl From<ElasticParameter> for f64 {
    fn from(p: ElasticParameter) -> f64 {
        p.0
    }
}

pub fn constant_c_alpha(alpha: f64) -> Result<f64> {
    Ok(ElasticParameter::new(alpha)?.c_alpha())
}

pub fn constant_d_alpha(alpha: f64) -> Result<f64> {
    Ok(ElasticParameter::new(alpha)?.d_alpha())
}

/// A point of ℝ³ with polar accessors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacePoint(pub Vec3);

impl SpacePoint {
    pub const ORIGIN: SpacePoint = SpacePoint([0.0; 3]);

    pub fn r(&self) -> f64 {
        crate::linalg::norm3(&self.0)
    }

    /// Unit direction `x/|x|`; `None` at the origin.
    pub fn omega(&self) -> Option<Vec3> {
        let r = self.r();
        (r > 0.0).then(|| crate::linalg::scale3(1.0 / r, &self.0))
    }
}

impl From<Vec3> for SpacePoint {
    fn from(x: Vec3) -> Self {
        SpacePoint(x)
    }
}

/// `Φ(x - y)`.
pub fn fundamental_matrix(p: ElasticParameter, x: SpacePoint, y: SpacePoint) -> Result<Mat3> {
    let d = SpacePoint(crate::linalg::sub3(&x.0, &y.0));
    let r = d.r();
    let w = d.omega().ok_or(LabError::SingularPoint)?;
    Ok(kelvin_from_polar(p, r, &w))
}

/// `Φ` at the point `r ω`.
#[inline]
pub fn kelvin_from_polar(p: ElasticParameter, r: f64, w: &Vec3) -> Mat3 {
    let c = p.c_alpha() / r;
    let a = p.anisotropy();
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            m[i][j] = c * (if i == j { 1.0 } else { 0.0 } + a * w[i] * w[j]);
            m[j][i] = m[i][j];
        }
    }
    m
}

/// The vector `(D_i Φ_ij)_j = d_α r⁻² ω`.
pub fn fundamental_matrix_divergence(p: ElasticParameter, x: SpacePoint) -> Result<Vec3> {
    let r = x.r();
    let w = x.omega().ok_or(LabError::SingularPoint)?;
    let s = p.d_alpha() / (r * r);
    Ok([s * w[0], s * w[1], s * w[2]])
}

/// Value, Jacobian and Hessians of a vector field at one point.
///
/// `jacobian[k][i] = D_k u_i`, `hessian[i][j][k] = D_j D_k u_i`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: Vec3,
    pub jacobian: Mat3,
    pub hessian: [Mat3; 3],
}

impl Jet {
    pub fn divergence(&self) -> f64 {
        self.jacobian[0][0] + self.jacobian[1][1] + self.jacobian[2][2]
    }

    pub fn scaled(mut self, s: f64) -> Jet {
        for i in 0..3 {
            self.value[i] *= s;
            for j in 0..3 {
                self.jacobian[i][j] *= s;
                for k in 0..3 {
                    self.hessian[i][j][k] *= s;
                }
            }
        }
        self
    }

    pub fn accumulate(&mut self, other: &Jet) {
        for i in 0..3 {
            self.value[i] += other.value[i];
            for j in 0..3 {
                self.jacobian[i][j] += other.jacobian[i][j];
                for k in 0..3 {
                    self.hessian[i][j][k] += other.hessian[i][j][k];
                }
            }
        }
    }
}

/// A smooth vector field with analytic first and second derivatives.
pub trait DisplacementField: Sync {
    fn jet(&self, x: &Vec3) -> Jet;

    /// Everything vanishes for `|x| >= support_radius()`.
    fn support_radius(&self) -> f64;

    fn value(&self, x: &Vec3) -> Vec3 {
        self.jet(x).value
    }

    fn jacobian(&self, x: &Vec3) -> Mat3 {
        self.jet(x).jacobian
    }

    fn hessians(&self, x: &Vec3) -> [Mat3; 3] {
        self.jet(x).hessian
    }
}

impl<F: DisplacementField + ?Sized> DisplacementField for &F {
    fn jet(&self, x: &Vec3) -> Jet {
        (**self).jet(x)
    }
    fn support_radius(&self) -> f64 {
        (**self).support_radius()
    }
}

/// `Lu` from the Hessians of a jet.
#[inline]
pub fn lame_from_jet(p: ElasticParameter, jet: &Jet) -> Vec3 {
    let a = p.alpha();
    let h = &jet.hessian;
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        let lap = h[i][0][0] + h[i][1][1] + h[i][2][2];
        let grad_div = h[0][i][0] + h[1][i][1] + h[2][i][2];
        *o = -lap - a * grad_div;
    }
    out
}

pub fn lame_apply<F: DisplacementField + ?Sized>(p: ElasticParameter, u: &F, x: SpacePoint) -> Vec3 {
    lame_from_jet(p, &u.jet(&x.0))
}

/// Column `j` of `Φ` seen as a (non-compact) displacement field, with
/// analytic derivatives. Singular at the origin.
#[derive(Debug, Clone, Copy)]
pub struct FundamentalColumn {
    pub param: ElasticParameter,
    pub column: usize,
}

impl DisplacementField for FundamentalColumn {
    fn jet(&self, x: &Vec3) -> Jet {
        let j = self.column;
        let c = self.param.c_alpha();
        let a = self.param.anisotropy();
        let r2 = crate::linalg::dot3(x, x);
        let r = r2.sqrt();
        let (r3, r5, r7) = (r2 * r, r2 * r2 * r, r2 * r2 * r2 * r);
        let dl = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
        let mut jet = Jet::default();
        for i in 0..3 {
            // u_i = c (δ_ij / r + a x_i x_j / r³)
            jet.value[i] = c * (dl(i, j) / r + a * x[i] * x[j] / r3);
            for k in 0..3 {
                let d_inv_r = -x[k] / r3;
                let d_g = (dl(i, k) * x[j] + x[i] * dl(j, k)) / r3 - 3.0 * x[i] * x[j] * x[k] / r5;
                jet.jacobian[k][i] = c * (dl(i, j) * d_inv_r + a * d_g);
                for l in 0..3 {
                    let dd_inv_r = 3.0 * x[k] * x[l] / r5 - dl(k, l) / r3;
                    let dd_g = (dl(i, k) * dl(j, l) + dl(i, l) * dl(j, k)) / r3
                        - 3.0 * (dl(i, k) * x[j] + x[i] * dl(j, k)) * x[l] / r5
                        - 3.0 * (dl(i, l) * x[j] * x[k] + x[i] * dl(j, l) * x[k] + x[i] * x[j] * dl(k, l)) / r5
                        + 15.0 * x[i] * x[j] * x[k] * x[l] / r7;
                    jet.hessian[i][k][l] = c * (dl(i, j) * dd_inv_r + a * dd_g);
                }
            }
        }
        jet
    }

    fn support_radius(&self) -> f64 {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frob2, norm3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(a: f64) -> ElasticParameter {
        ElasticParameter::new(a).unwrap()
    }

    fn fd_step(x: &Vec3) -> f64 {
        1e-4 * norm3(x)
    }

    #[test]
    fn c_alpha_examples() {
        assert!((constant_c_alpha(0.0).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((constant_c_alpha(1.0).unwrap() - 3.0 / (16.0 * PI)).abs() < 1e-15);
        assert!((constant_c_alpha(1.0).unwrap() - 0.0596831).abs() < 1e-7);
        assert_eq!(constant_c_alpha(-1.0), Err(LabError::InvalidParameter(-1.0)));
        assert!(constant_c_alpha(-1.5).is_err());
        assert!(constant_c_alpha(f64::NAN).is_err());
    }

    #[test]
    fn d_alpha_examples() {
        assert!((constant_d_alpha(0.0).unwrap() + 0.0795775).abs() < 1e-7);
        assert!((constant_d_alpha(2.0).unwrap() + 1.0 / (12.0 * PI)).abs() < 1e-15);
        assert!((constant_d_alpha(2.0).unwrap() + 0.0265258).abs() < 1e-7);
        for a in [-0.9, -0.3, 0.0, 0.7, 5.0, 40.0] {
            let q = p(a);
            assert!((q.d_alpha() * (a + 2.0) / -2.0 - q.c_alpha()).abs() < 1e-15);
        }
        assert!(constant_d_alpha(-1.0).is_err());
    }

    #[test]
    fn fundamental_matrix_examples() {
        let x = SpacePoint([0.3, -1.2, 0.5]);
        let m = fundamental_matrix(p(0.0), x, SpacePoint::ORIGIN).unwrap();
        let s = 1.0 / (4.0 * PI * x.r());
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { s } else { 0.0 };
                assert!((m[i][j] - e).abs() < 1e-16);
            }
        }
        let m = fundamental_matrix(p(1.0), SpacePoint([1.0, 0.0, 0.0]), SpacePoint::ORIGIN).unwrap();
        let c1 = 3.0 / (16.0 * PI);
        assert!((m[0][0] - 4.0 * c1 / 3.0).abs() < 1e-15);
        assert!((m[0][0] - 0.0795775).abs() < 1e-7);
        assert!((m[1][1] - 0.0596831).abs() < 1e-7);
        assert!((m[2][2] - c1).abs() < 1e-15);
        assert_eq!(m[0][1], 0.0);
        let y = SpacePoint([0.1, 0.2, 0.3]);
        assert_eq!(fundamental_matrix(p(1.0), y, y), Err(LabError::SingularPoint));
    }

    #[test]
    fn translate_is_evaluated_at_difference() {
        let q = p(0.8);
        let x = SpacePoint([1.0, 2.0, -0.5]);
        let y = SpacePoint([0.5, -1.0, 0.25]);
        let a = fundamental_matrix(q, x, y).unwrap();
        let b = fundamental_matrix(q, SpacePoint(crate::linalg::sub3(&x.0, &y.0)), SpacePoint::ORIGIN).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_examples() {
        let d = fundamental_matrix_divergence(p(0.0), SpacePoint([0.0, 0.0, 2.0])).unwrap();
        assert!(d[0].abs() < 1e-18 && d[1].abs() < 1e-18);
        assert!((d[2] + 1.0 / (16.0 * PI)).abs() < 1e-16);
        let x = [0.4, -0.7, 1.1];
        let a = fundamental_matrix_divergence(p(0.3), SpacePoint(x)).unwrap();
        let b = fundamental_matrix_divergence(p(0.3), SpacePoint([-x[0], -x[1], -x[2]])).unwrap();
        for i in 0..3 {
            assert_eq!(a[i], -b[i]);
        }
        assert_eq!(
            fundamental_matrix_divergence(p(0.3), SpacePoint::ORIGIN),
            Err(LabError::SingularPoint)
        );
    }

    /// Central-difference divergence of Φ, column by column.
    fn fd_divergence(q: ElasticParameter, x: &Vec3) -> Vec3 {
        let h = fd_step(x);
        let mut out = [0.0; 3];
        for i in 0..3 {
            let mut xp = *x;
            let mut xm = *x;
            xp[i] += h;
            xm[i] -= h;
            let fp = fundamental_matrix(q, SpacePoint(xp), SpacePoint::ORIGIN).unwrap();
            let fm = fundamental_matrix(q, SpacePoint(xm), SpacePoint::ORIGIN).unwrap();
            for j in 0..3 {
                out[j] += (fp[i][j] - fm[i][j]) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn divergence_matches_finite_differences() {
        let q = p(0.5);
        let x = [1.0, 1.0, 1.0];
        let a = fundamental_matrix_divergence(q, SpacePoint(x)).unwrap();
        let b = fd_divergence(q, &x);
        assert!(norm3(&crate::linalg::sub3(&a, &b)) <= 1e-6 * norm3(&a));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let r = 10f64.powf(rng.gen_range(-1.0..1.0));
            let mut w: Vec3 = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let n = norm3(&w);
            w = crate::linalg::scale3(r / n, &w);
            let q = p(rng.gen_range(-0.9..5.0));
            let a = fundamental_matrix_divergence(q, SpacePoint(w)).unwrap();
            let b = fd_divergence(q, &w);
            assert!(norm3(&crate::linalg::sub3(&a, &b)) <= 1e-6 * norm3(&a), "r = {r}");
        }
    }

    #[test]
    fn fundamental_matrix_symmetric_positive_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = rng.gen_range(-0.95..10.0);
            let q = p(a);
            let x: Vec3 = [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ];
            let m = fundamental_matrix(q, SpacePoint(x), SpacePoint::ORIGIN).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(m[i][j], m[j][i]);
                }
            }
            let r = norm3(&x);
            let bound = q.c_alpha() * 1f64.min((2.0 * a + 2.0) / (a + 2.0)) / r;
            let lmin = crate::linalg::smallest_eigenvalue(&m, 3);
            assert!(lmin >= bound * (1.0 - 1e-12), "{lmin} < {bound}");
            let lambda = rng.gen_range(0.1..10.0);
            let ml = fundamental_matrix(q, SpacePoint(crate::linalg::scale3(lambda, &x)), SpacePoint::ORIGIN).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert!((ml[i][j] * lambda - m[i][j]).abs() <= 1e-14 * m[i][j].abs().max(1e-300));
                }
            }
        }
    }

    /// A scalar bump times a fixed direction, with closed-form derivatives.
    struct DirectedGaussian {
        dir: Vec3,
        center: Vec3,
    }

    impl DisplacementField for DirectedGaussian {
        fn jet(&self, x: &Vec3) -> Jet {
            let y = crate::linalg::sub3(x, &self.center);
            let g = (-crate::linalg::dot3(&y, &y)).exp();
            let mut jet = Jet::default();
            for i in 0..3 {
                jet.value[i] = self.dir[i] * g;
                for k in 0..3 {
                    jet.jacobian[k][i] = self.dir[i] * (-2.0 * y[k] * g);
                    for l in 0..3 {
                        let d = if k == l { 1.0 } else { 0.0 };
                        jet.hessian[i][k][l] = self.dir[i] * (4.0 * y[k] * y[l] - 2.0 * d) * g;
                    }
                }
            }
            jet
        }
        fn support_radius(&self) -> f64 {
            f64::INFINITY
        }
    }

    /// Lu by nested central differences of the field values.
    fn fd_lame<F: DisplacementField>(q: ElasticParameter, u: &F, x: &Vec3) -> Vec3 {
        let h = 1e-4;
        let val = |dx: [f64; 3]| u.value(&[x[0] + dx[0], x[1] + dx[1], x[2] + dx[2]]);
        let mut hess = [[[0.0; 3]; 3]; 3];
        for k in 0..3 {
            for l in 0..3 {
                let mut e = [[0.0; 3]; 2];
                e[0][k] += h;
                e[1][l] += h;
                let pp = val(crate::linalg::add3(&e[0], &e[1]));
                let pm = val(crate::linalg::sub3(&e[0], &e[1]));
                let mp = val(crate::linalg::sub3(&e[1], &e[0]));
                let mm = val(crate::linalg::scale3(-1.0, &crate::linalg::add3(&e[0], &e[1])));
                for i in 0..3 {
                    hess[i][k][l] = (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h);
                }
            }
        }
        let jet = Jet {
            hessian: hess,
            ..Jet::default()
        };
        lame_from_jet(q, &jet)
    }

    #[test]
    fn lame_apply_matches_finite_differences() {
        let u = DirectedGaussian {
            dir: [1.0, 0.0, 0.0],
            center: [0.2, -0.1, 0.3],
        };
        for a in [0.0, 0.5, 1.5] {
            let q = p(a);
            let x = [0.5, 0.1, -0.2];
            let exact = lame_apply(q, &u, SpacePoint(x));
            let approx = fd_lame(q, &u, &x);
            let err = norm3(&crate::linalg::sub3(&exact, &approx));
            assert!(err <= 1e-6 * norm3(&exact), "alpha {a}: {err}");
        }
    }

    #[test]
    fn lame_at_zero_alpha_is_negative_laplacian() {
        let u = DirectedGaussian {
            dir: [0.3, -1.0, 0.5],
            center: [0.0; 3],
        };
        let x = [0.4, 0.3, -0.1];
        let jet = u.jet(&x);
        let l = lame_apply(p(0.0), &u, SpacePoint(x));
        for i in 0..3 {
            let lap = jet.hessian[i][0][0] + jet.hessian[i][1][1] + jet.hessian[i][2][2];
            assert_eq!(l[i], -lap);
        }
    }

    #[test]
    fn fundamental_columns_solve_homogeneous_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let q = p(rng.gen_range(-0.9..10.0));
            let x: Vec3 = [
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ];
            let r = norm3(&x);
            if r < 0.05 {
                continue;
            }
            for column in 0..3 {
                let col = FundamentalColumn { param: q, column };
                let jet = col.jet(&x);
                let m = fundamental_matrix(q, SpacePoint(x), SpacePoint::ORIGIN).unwrap();
                for i in 0..3 {
                    assert!((jet.value[i] - m[i][column]).abs() < 1e-15 * m[i][column].abs().max(1.0));
                }
                let l = lame_from_jet(q, &jet);
                assert!(norm3(&l) <= 1e-8 / (r * r * r), "|L Φ| = {}", norm3(&l));
                // Hessians symmetric in derivative indices
                for i in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            assert!((jet.hessian[i][k][l] - jet.hessian[i][l][k]).abs() < 1e-12 / (r * r * r));
                        }
                    }
                }
                assert!(frob2(&jet.jacobian).is_finite());
            }
        }
    }

    #[test]
    fn fundamental_column_jacobian_matches_differences() {
        let q = p(0.7);
        let col = FundamentalColumn { param: q, column: 1 };
        let x = [0.6, -0.4, 0.9];
        let h = fd_step(&x);
        let jet = col.jet(&x);
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let (vp, vm) = (col.value(&xp), col.value(&xm));
            for i in 0..3 {
                let fd = (vp[i] - vm[i]) / (2.0 * h);
                assert!((fd - jet.jacobian[k][i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn parameter_serde_rejects_out_of_window() {
        assert!(ElasticParameter::try_from(-1.0).is_err());
        assert_eq!(f64::from(ElasticParameter::new(0.25).unwrap()), 0.25);
    }
}
