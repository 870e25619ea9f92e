//! Compactly supported test fields built from polynomial bumps.
//!
//! A bump contributes `a · m(x - c) · (1 - |x - c|²/R²)⁸` inside the ball
//! `B_R(c)`, where `m` is a polynomial of degree at most two. The profile is
//! C⁷ across the sphere `|x - c| = R`, so fields, Jacobians and Hessians are
//! all available in closed form. Fields can optionally be multiplied by a
//! radial cutoff that vanishes identically near a chosen centre, which keeps
//! them inside `C₀^∞(ℝ³ \ {0})` for positivity tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::elastic::{DisplacementField, Jet};
use crate::error::{LabError, Result};
use crate::linalg::{dot3, norm3, sub3, Mat3, Vec3};

/// Exponent of the bump profile `(1 - t)^P`.
pub const BUMP_ORDER: i32 = 8;

/// Polynomial modulation `m(y) = constant + linear·y + yᵀ quadratic y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub constant: f64,
    pub linear: Vec3,
    /// Symmetric.
    pub quadratic: Mat3,
}

impl Default for Modulation {
    fn default() -> Self {
        Modulation {
            constant: 1.0,
            linear: [0.0; 3],
            quadratic: [[0.0; 3]; 3],
        }
    }
}

impl Modulation {
    fn eval(&self, y: &Vec3) -> (f64, Vec3, Mat3) {
        let q = &self.quadratic;
        let mut qy = [0.0; 3];
        for i in 0..3 {
            qy[i] = q[i][0] * y[0] + q[i][1] * y[1] + q[i][2] * y[2];
        }
        let m = self.constant + dot3(&self.linear, y) + dot3(y, &qy);
        let g = [
            self.linear[0] + 2.0 * qy[0],
            self.linear[1] + 2.0 * qy[1],
            self.linear[2] + 2.0 * qy[2],
        ];
        let mut h = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                h[i][j] = 2.0 * q[i][j];
            }
        }
        (m, g, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec3,
    pub radius: f64,
    pub amplitude: Vec3,
    pub modulation: Modulation,
}

impl Bump {
    /// Scalar part `s(x) = m(y) β(|y|²/R²)` with gradient and Hessian.
    fn scalar(&self, x: &Vec3) -> Option<(f64, Vec3, Mat3)> {
        let y = sub3(x, &self.center);
        let r2 = self.radius * self.radius;
        let t = dot3(&y, &y) / r2;
        if t >= 1.0 {
            return None;
        }
        let p = BUMP_ORDER;
        let one_t = 1.0 - t;
        let b = one_t.powi(p);
        let b1 = -(p as f64) * one_t.powi(p - 1);
        let b2 = (p * (p - 1)) as f64 * one_t.powi(p - 2);
        let grad_t = [2.0 * y[0] / r2, 2.0 * y[1] / r2, 2.0 * y[2] / r2];
        let (m, gm, hm) = self.modulation.eval(&y);
        let mut g = [0.0; 3];
        let mut h = [[0.0; 3]; 3];
        for k in 0..3 {
            let gb = b1 * grad_t[k];
            g[k] = gm[k] * b + m * gb;
            for l in 0..3 {
                let gb_l = b1 * grad_t[l];
                let hb = b2 * grad_t[k] * grad_t[l] + if k == l { b1 * 2.0 / r2 } else { 0.0 };
                h[k][l] = hm[k][l] * b + gm[k] * gb_l + gb * gm[l] + m * hb;
            }
        }
        Some((m * b, g, h))
    }

    fn add_jet(&self, x: &Vec3, jet: &mut Jet) {
        if let Some((s, g, h)) = self.scalar(x) {
            for i in 0..3 {
                let a = self.amplitude[i];
                jet.value[i] += a * s;
                for k in 0..3 {
                    jet.jacobian[k][i] += a * g[k];
                    for l in 0..3 {
                        jet.hessian[i][k][l] += a * h[k][l];
                    }
                }
            }
        }
    }
}

/// Radial cutoff: 0 for `|x - center| <= inner`, 1 beyond `outer`, joined
/// by the degree-7 smoothstep `35s⁴ - 84s⁵ + 70s⁶ - 20s⁷`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerCutoff {
    pub center: Vec3,
    pub inner: f64,
    pub outer: f64,
}

impl InnerCutoff {
    /// Value and first two derivatives in the radius.
    pub fn profile(&self, r: f64) -> (f64, f64, f64) {
        if r <= self.inner {
            return (0.0, 0.0, 0.0);
        }
        if r >= self.outer {
            return (1.0, 0.0, 0.0);
        }
        let w = self.outer - self.inner;
        let s = (r - self.inner) / w;
        let s2 = s * s;
        let v = s2 * s2 * (35.0 - 84.0 * s + 70.0 * s2 - 20.0 * s2 * s);
        let d1 = 140.0 * s2 * s * (1.0 - s).powi(3) / w;
        let d2 = 420.0 * s2 * (1.0 - s).powi(2) * (1.0 - 2.0 * s) / (w * w);
        (v, d1, d2)
    }

    /// Multiplies `jet` (the jet of `u` at `x`) by the cutoff in place.
    fn apply(&self, x: &Vec3, jet: &mut Jet) {
        let d = sub3(x, &self.center);
        let r = norm3(&d);
        let (c, c1, c2) = self.profile(r);
        if c1 == 0.0 && c2 == 0.0 {
            if c == 0.0 {
                *jet = Jet::default();
            }
            return;
        }
        let w = [d[0] / r, d[1] / r, d[2] / r];
        let mut gc = [0.0; 3];
        let mut hc = [[0.0; 3]; 3];
        for k in 0..3 {
            gc[k] = c1 * w[k];
            for l in 0..3 {
                let delta = if k == l { 1.0 } else { 0.0 };
                hc[k][l] = c2 * w[k] * w[l] + c1 / r * (delta - w[k] * w[l]);
            }
        }
        let u = *jet;
        for i in 0..3 {
            jet.value[i] = u.value[i] * c;
            for k in 0..3 {
                jet.jacobian[k][i] = u.jacobian[k][i] * c + u.value[i] * gc[k];
                for l in 0..3 {
                    jet.hessian[i][k][l] = u.hessian[i][k][l] * c
                        + u.jacobian[k][i] * gc[l]
                        + u.jacobian[l][i] * gc[k]
                        + u.value[i] * hc[k][l];
                }
            }
        }
    }
}

/// A sum of bumps, optionally cut off near a point, supported in
/// `B_{support_radius}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFieldSpec {
    pub bumps: Vec<Bump>,
    pub seed: u64,
    pub support_radius: f64,
    pub origin_cutoff: Option<InnerCutoff>,
}

/// Parameters of [`TestFieldSpec::random`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RandomFieldOptions {
    pub max_bumps: usize,
    pub support_radius: f64,
    /// Multiply by an inner cutoff at `0.05·support_radius`.
    pub origin_excluded: bool,
}

impl Default for RandomFieldOptions {
    fn default() -> Self {
        RandomFieldOptions {
            max_bumps: 4,
            support_radius: 5.5,
            origin_excluded: false,
        }
    }
}

impl TestFieldSpec {
    pub fn new(bumps: Vec<Bump>, seed: u64, support_radius: f64, origin_cutoff: Option<InnerCutoff>) -> Result<Self> {
        let spec = TestFieldSpec {
            bumps,
            seed,
            support_radius,
            origin_cutoff,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.support_radius > 0.0) {
            return Err(LabError::InvalidInput("support radius must be positive".into()));
        }
        for b in &self.bumps {
            if !(b.radius > 0.0) {
                return Err(LabError::InvalidInput("bump radius must be positive".into()));
            }
            if norm3(&b.center) + b.radius > self.support_radius * (1.0 + 1e-12) {
                return Err(LabError::InvalidInput(format!(
                    "bump at {:?} with radius {} leaves B_{}",
                    b.center, b.radius, self.support_radius
                )));
            }
        }
        if let Some(c) = &self.origin_cutoff {
            if !(0.0 <= c.inner && c.inner < c.outer) {
                return Err(LabError::InvalidInput(
                    "cutoff radii must satisfy 0 <= inner < outer".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn origin_excluded(&self) -> bool {
        self.origin_cutoff.is_some()
    }

    /// Seeded random field: 1..=max_bumps bumps of radius in [1.5, 3], each
    /// centred within half its radius of the origin.
    pub fn random(seed: u64, opts: &RandomFieldOptions) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=opts.max_bumps.clamp(1, 6));
        let s = opts.support_radius;
        let mut bumps = Vec::with_capacity(n);
        for _ in 0..n {
            let radius = rng.gen_range(1.5..3.0_f64).min(0.6 * s);
            let dir = random_unit(&mut rng);
            let dist = rng.gen_range(0.0..0.5) * radius;
            let center = [dir[0] * dist, dir[1] * dist, dir[2] * dist];
            let amplitude = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let mut quadratic = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in i..3 {
                    let q = rng.gen_range(-0.3..0.3) / (radius * radius);
                    quadratic[i][j] = q;
                    quadratic[j][i] = q;
                }
            }
            let linear = [
                rng.gen_range(-0.5..0.5) / radius,
                rng.gen_range(-0.5..0.5) / radius,
                rng.gen_range(-0.5..0.5) / radius,
            ];
            bumps.push(Bump {
                center,
                radius,
                amplitude,
                modulation: Modulation {
                    constant: 1.0,
                    linear,
                    quadratic,
                },
            });
        }
        let origin_cutoff = opts.origin_excluded.then_some(InnerCutoff {
            center: [0.0; 3],
            inner: 0.05 * s,
            outer: 0.1 * s,
        });
        TestFieldSpec {
            bumps,
            seed,
            support_radius: s,
            origin_cutoff,
        }
    }

    /// `s·u`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for b in &mut out.bumps {
            for a in &mut b.amplitude {
                *a *= s;
            }
        }
        out
    }

    /// `u + sign·w`; both fields must share the same cutoff.
    pub fn combined(&self, other: &TestFieldSpec, sign: f64) -> Result<Self> {
        if self.origin_cutoff != other.origin_cutoff {
            return Err(LabError::InvalidInput(
                "cannot combine fields with different cutoffs".into(),
            ));
        }
        let mut out = self.clone();
        out.bumps.extend(other.scaled(sign).bumps);
        out.support_radius = self.support_radius.max(other.support_radius);
        Ok(out)
    }

    /// The field `x ↦ u(x + y)`.
    pub fn shifted(&self, y: &Vec3) -> Self {
        let mut out = self.clone();
        for b in &mut out.bumps {
            b.center = sub3(&b.center, y);
        }
        if let Some(c) = &mut out.origin_cutoff {
            c.center = sub3(&c.center, y);
        }
        out.support_radius = out
            .bumps
            .iter()
            .map(|b| norm3(&b.center) + b.radius)
            .fold(0.0, f64::max);
        out
    }

    /// The field `x ↦ u(λx)`.
    pub fn dilated(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for b in &mut out.bumps {
            b.center = [b.center[0] / lambda, b.center[1] / lambda, b.center[2] / lambda];
            b.radius /= lambda;
            for l in &mut b.modulation.linear {
                *l *= lambda;
            }
            for row in &mut b.modulation.quadratic {
                for q in row {
                    *q *= lambda * lambda;
                }
            }
        }
        if let Some(c) = &mut out.origin_cutoff {
            c.center = [c.center[0] / lambda, c.center[1] / lambda, c.center[2] / lambda];
            c.inner /= lambda;
            c.outer /= lambda;
        }
        out.support_radius /= lambda;
        out
    }

    /// Radii (about the origin) where the field's radial cutoff has kinks.
    pub fn radial_breakpoints(&self) -> Vec<f64> {
        match &self.origin_cutoff {
            Some(c) if norm3(&c.center) == 0.0 => vec![c.inner, c.outer],
            _ => Vec::new(),
        }
    }
}

impl DisplacementField for TestFieldSpec {
    fn jet(&self, x: &Vec3) -> Jet {
        let mut jet = Jet::default();
        for b in &self.bumps {
            b.add_jet(x, &mut jet);
        }
        if let Some(c) = &self.origin_cutoff {
            c.apply(x, &mut jet);
        }
        jet
    }

    fn support_radius(&self) -> f64 {
        self.support_radius
    }
}

pub(crate) fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = norm3(&v);
        if n > 1e-3 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}
