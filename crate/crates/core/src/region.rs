//! The quadratic forms bounding the weighted Lamé form from below, their
//! leading principal minors as closed-form rational functions of α, and the
//! roots delimiting where positivity is proven or ruled out.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg::{leading_minors, smallest_eigenvalue, Mat3};

const SQRT2: f64 = std::f64::consts::SQRT_2;
const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT6: f64 = 2.449_489_742_783_178;

/// Step of the sign-change scan preceding bisection.
pub const SCAN_STEP: f64 = 1e-3;
/// Upper end of the interval searched for the positive roots.
pub const SCAN_UPPER: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormKind {
    /// 3×3, rows `(‖D_r ū‖, ‖Dv‖, ‖div v‖)`, for α ≥ 0.
    Plus,
    /// 2×2, rows `(‖D_r ū‖, ‖Dv‖)`, for −1 < α ≤ 0.
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticFormMatrix {
    pub kind: FormKind,
    pub alpha: f64,
    /// Only the leading `dim() × dim()` block is meaningful.
    pub entries: Mat3,
}

impl QuadraticFormMatrix {
    pub fn dim(&self) -> usize {
        match self.kind {
            FormKind::Plus => 3,
            FormKind::Minus => 2,
        }
    }

    pub fn smallest_eigenvalue(&self) -> f64 {
        smallest_eigenvalue(&self.entries, self.dim())
    }

    /// `wᵀ B w`.
    pub fn quadratic(&self, w: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += w[i] * self.entries[i][j] * w[j];
            }
        }
        s
    }
}

fn radial_diagonal(a: f64) -> f64 {
    1.0 + a * (2.0 * a + 3.0) / (3.0 * (a + 2.0))
}

pub fn b_plus(alpha: f64) -> Result<QuadraticFormMatrix> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(LabError::DomainError {
            what: "b_plus needs alpha >= 0",
            alpha,
        });
    }
    let a = alpha;
    let m11 = radial_diagonal(a);
    let m12 = -a / (2.0 * SQRT3);
    let m13 = -a * (3.0 * a + 4.0) / (2.0 * SQRT3 * (a + 2.0));
    let m22 = 1.0 - a / (SQRT2 * (a + 2.0));
    let m23 = -0.5 * a * (a + 1.0 / SQRT2) / (a + 2.0);
    let m33 = a;
    Ok(QuadraticFormMatrix {
        kind: FormKind::Plus,
        alpha,
        entries: [[m11, m12, m13], [m12, m22, m23], [m13, m23, m33]],
    })
}

pub fn b_minus(alpha: f64) -> Result<QuadraticFormMatrix> {
    if !(alpha > -1.0 && alpha <= 0.0) {
        return Err(LabError::DomainError {
            what: "b_minus needs -1 < alpha <= 0",
            alpha,
        });
    }
    let a = alpha;
    let m11 = radial_diagonal(a);
    let m12 = a * (3.0 * a + 4.0) / (2.0 * (a + 2.0)) + a / (2.0 * SQRT3);
    let m22 = 1.0 + 3.0 * a + a / (a + 2.0) * (1.0 + (1.0 + SQRT3) / SQRT2 - SQRT3 * a);
    Ok(QuadraticFormMatrix {
        kind: FormKind::Minus,
        alpha,
        entries: [[m11, m12, 0.0], [m12, m22, 0.0], [0.0, 0.0, 0.0]],
    })
}

/// The matrix whose positivity carries the lower bound at `alpha`: B₋ for
/// α ≤ 0 (at α = 0 it is the identity, whereas B₊(0) is singular), B₊ above.
pub fn applicable_form(alpha: f64) -> Result<QuadraticFormMatrix> {
    if alpha <= 0.0 {
        b_minus(alpha)
    } else {
        b_plus(alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinorValues {
    pub p1: f64,
    pub p2: f64,
    pub p3: Option<f64>,
}

impl MinorValues {
    pub fn all_positive(&self) -> bool {
        self.p1 > 0.0 && self.p2 > 0.0 && self.p3.is_none_or(|p| p > 0.0)
    }
}

/// Determinants of the leading principal blocks.
pub fn minors(m: &QuadraticFormMatrix) -> MinorValues {
    let d = leading_minors(&m.entries, m.dim());
    MinorValues {
        p1: d[0],
        p2: d[1],
        p3: d.get(2).copied(),
    }
}

/// Closed form of the first minor of either matrix.
pub fn p_plus_1(a: f64) -> f64 {
    (2.0 * a * a + 6.0 * a + 6.0) / (3.0 * (a + 2.0))
}

pub fn p_plus_2(a: f64) -> f64 {
    let num =
        a.powi(4) - 4.0 * (1.0 - SQRT2) * a.powi(3) - 12.0 * (3.0 - SQRT2) * a * a - 12.0 * (6.0 - SQRT2) * a - 48.0;
    -num / (12.0 * (a + 2.0).powi(2))
}

pub fn p_plus_3(a: f64) -> f64 {
    let num = 6.0 * a.powi(5) + (23.0 + 3.0 * SQRT2) * a.powi(4) + (13.0 + 19.0 * SQRT2) * a.powi(3)
        - (77.0 - 38.0 * SQRT2) * a * a
        - (157.0 - 24.0 * SQRT2) * a
        - 96.0;
    -a * num / (12.0 * (a + 2.0).powi(3))
}

pub fn p_minus_1(a: f64) -> f64 {
    p_plus_1(a)
}

pub fn p_minus_2(a: f64) -> f64 {
    let num = -(2.0 + 7.0 * SQRT3) * a.powi(4)
        + 2.0 * (15.0 + SQRT2 - 11.0 * SQRT3 + SQRT6) * a.powi(3)
        + 2.0 * (57.0 + 3.0 * SQRT2 - 10.0 * SQRT3 + 3.0 * SQRT6) * a * a
        + 6.0 * (20.0 + SQRT2 + SQRT6) * a
        + 24.0;
    num / (6.0 * (a + 2.0).powi(2))
}

/// Closed-form minors for the matrix kind at `alpha`.
pub fn closed_form_minors(kind: FormKind, alpha: f64) -> MinorValues {
    match kind {
        FormKind::Plus => MinorValues {
            p1: p_plus_1(alpha),
            p2: p_plus_2(alpha),
            p3: Some(p_plus_3(alpha)),
        },
        FormKind::Minus => MinorValues {
            p1: p_minus_1(alpha),
            p2: p_minus_2(alpha),
            p3: None,
        },
    }
}

/// A root enclosed in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(LabError::InvalidInput(format!("tolerance must be positive, got {tol}")))
    }
}

/// Bisects a sign change of `f` on `[lo, hi]` down to width `tol` (or to
/// adjacent doubles).
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<Bracket> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(Bracket { lo, hi: lo });
    }
    if fhi == 0.0 {
        return Ok(Bracket { lo: hi, hi });
    }
    if flo.signum() == fhi.signum() {
        return Err(LabError::BracketFailure("no sign change on the bisection interval"));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(Bracket { lo: mid, hi: mid });
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(Bracket { lo, hi })
}

/// All scan cells `[a, a + step]` in `[from, to]` on which `f` changes sign.
pub fn sign_changes<F: Fn(f64) -> f64>(f: F, from: f64, to: f64, step: f64) -> Vec<(f64, f64)> {
    let n = ((to - from) / step).round() as usize;
    let mut out = Vec::new();
    let mut a = from;
    let mut fa = f(a);
    for i in 1..=n {
        let b = if i == n { to } else { from + step * i as f64 };
        let fb = f(b);
        if fa == 0.0 || fa.signum() != fb.signum() {
            out.push((a, b));
        }
        a = b;
        fa = fb;
    }
    out
}

fn smallest_root<F: Fn(f64) -> f64>(f: F, from: f64, to: f64, tol: f64, what: &'static str) -> Result<Bracket> {
    let cells = sign_changes(&f, from, to, SCAN_STEP);
    let (a, b) = *cells.first().ok_or(LabError::BracketFailure(what))?;
    bisect(&f, a, b, tol)
}

fn largest_root<F: Fn(f64) -> f64>(f: F, from: f64, to: f64, tol: f64, what: &'static str) -> Result<Bracket> {
    let cells = sign_changes(&f, from, to, SCAN_STEP);
    let (a, b) = *cells.last().ok_or(LabError::BracketFailure(what))?;
    bisect(&f, a, b, tol)
}

/// Brackets for `(α₋, α₊)`: the smallest root of p₋,₂ in (−1, 0) and the
/// largest root of p₊,₃ in (0, 50].
pub fn positivity_brackets(tol: f64) -> Result<(Bracket, Bracket)> {
    check_tol(tol)?;
    let minus = smallest_root(
        p_minus_2,
        -1.0 + SCAN_STEP,
        -SCAN_STEP,
        tol,
        "p_minus_2 has no sign change in (-1, 0)",
    )?;
    // p₊,₃ vanishes at 0 itself; start the scan just above it
    let plus = largest_root(
        p_plus_3,
        SCAN_STEP,
        SCAN_UPPER,
        tol,
        "p_plus_3 has no sign change in (0, 50]",
    )?;
    Ok((minus, plus))
}

pub fn positivity_interval(tol: f64) -> Result<(f64, f64)> {
    let (m, p) = positivity_brackets(tol)?;
    Ok((m.mid(), p.mid()))
}

/// `q(α) = (α+1)(3α+4)² − α⁴/4`, the value of d₂ at the witness direction
/// `(2^{-1/2}, 2^{-1/2}, 0)`.
pub fn necessary_q(alpha: f64) -> f64 {
    let a = alpha;
    (a + 1.0) * (3.0 * a + 4.0).powi(2) - a.powi(4) / 4.0
}

pub fn critical_brackets(tol: f64) -> Result<(Bracket, Bracket)> {
    check_tol(tol)?;
    let minus = smallest_root(necessary_q, -1.0, 0.0, tol, "q has no sign change in [-1, 0]")?;
    let plus = largest_root(necessary_q, 0.0, SCAN_UPPER, tol, "q has no sign change in [0, 50]")?;
    Ok((minus, plus))
}

/// `(α₋^(c), α₊^(c))`: below the first or above the second, q < 0 and the
/// weighted form cannot be positive.
pub fn critical_roots(tol: f64) -> Result<(f64, f64)> {
    let (m, p) = critical_brackets(tol)?;
    Ok((m.mid(), p.mid()))
}

/// `d₂(ω; α) = 4(α+1)(α+2+αω₁²)² − α⁴ω₁²ω₂²`.
pub fn d2(omega: &[f64; 3], alpha: f64) -> f64 {
    let s = omega[0] * omega[0];
    let t = omega[1] * omega[1];
    4.0 * (alpha + 1.0) * (alpha + 2.0 + alpha * s).powi(2) - alpha.powi(4) * s * t
}

/// The witness direction `(2^{-1/2}, 2^{-1/2}, 0)`.
pub const D2_WITNESS: [f64; 3] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2, 0.0];

/// Fibonacci lattice of `n` points on S².
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [rho * phi.cos(), rho * phi.sin(), z]
        })
        .collect()
}

fn from_angles(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Minimum of d₂ over a Fibonacci grid with the witness inserted, followed
/// by a pattern-search polish in spherical angles so that the reported
/// value does not depend on the grid density. The result never exceeds
/// `q(α)`.
pub fn d2_minimum(alpha: f64, sphere_samples: usize) -> Result<f64> {
    if !(alpha > -1.0) {
        return Err(LabError::InvalidParameter(alpha));
    }
    let mut points = fibonacci_sphere(sphere_samples);
    points.push(D2_WITNESS);
    let f = |w: &[f64; 3]| d2(w, alpha);
    let best = points
        .iter()
        .copied()
        .min_by(|a, b| f(a).total_cmp(&f(b)))
        .expect("grid is never empty");
    let mut value = f(&best);
    let mut theta = best[2].clamp(-1.0, 1.0).acos();
    let mut phi = best[1].atan2(best[0]);
    let mut step = (4.0 * std::f64::consts::PI / (sphere_samples as f64 + 1.0)).sqrt();
    while step > 1e-12 {
        let mut improved = false;
        for (dt, dp) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let v = f(&from_angles(theta + dt, phi + dp));
            if v < value {
                value = v;
                theta += dt;
                phi += dp;
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(value)
}

/// Everything the region command reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionReport {
    pub alpha_minus: f64,
    pub alpha_plus: f64,
    pub alpha_minus_critical: f64,
    pub alpha_plus_critical: f64,
    /// Widest of the four final brackets.
    pub bracket_width: f64,
    pub alpha_minus_bracket: Bracket,
    pub alpha_plus_bracket: Bracket,
    pub alpha_minus_critical_bracket: Bracket,
    pub alpha_plus_critical_bracket: Bracket,
}

pub fn region_report(tol: f64) -> Result<RegionReport> {
    let (m, p) = positivity_brackets(tol)?;
    let (mc, pc) = critical_brackets(tol)?;
    let width = [m, p, mc, pc].iter().map(Bracket::width).fold(0.0, f64::max);
    Ok(RegionReport {
        alpha_minus: m.mid(),
        alpha_plus: p.mid(),
        alpha_minus_critical: mc.mid(),
        alpha_plus_critical: pc.mid(),
        bracket_width: width,
        alpha_minus_bracket: m,
        alpha_plus_bracket: p,
        alpha_minus_critical_bracket: mc,
        alpha_plus_critical_bracket: pc,
    })
}
