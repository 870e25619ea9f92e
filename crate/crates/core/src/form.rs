//! Direct quadrature of the weighted form `∫(Lu)ᵀΦu dx` and of its
//! expansion `½|u(0)|² + ℬ*(u,u)` through the spherical split, the lower
//! bound that follows from the B± matrices, and a randomized search for
//! fields on which the form turns negative.
//!
//! Both sides are built from the same sphere-node jets: per shell the
//! α-independent sphere integrals are collected once and then combined for
//! every requested α.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::elastic::{DisplacementField, ElasticParameter};
use crate::error::{LabError, Result};
use crate::field::{RandomFieldOptions, TestFieldSpec};
use crate::linalg::{dot3, frob2, norm3, pairwise_sum, Vec3};
use crate::quadrature::{PolarGrid, RadialRule, SphereRule, SUPPORT_TOLERANCE};
use crate::region::{applicable_form, positivity_interval};
use crate::split::{Shell, SplitField};

/// Relative tolerance of the identity check.
pub const IDENTITY_TOLERANCE: f64 = 1e-6;

/// Number of α-independent sphere integrals per shell.
const SUMS: usize = 15;

// indices into the per-shell sums
const LAP_U: usize = 0; // (−Δu)·u
const LAP_W: usize = 1; // (−Δu·ω)(u·ω)
const GD_U: usize = 2; // (−∇div u)·u
const GD_W: usize = 3; // (−∇div u·ω)(u·ω)
const T1: usize = 4; // v_k (D_k v)·ω
const T2: usize = 5; // (div v)(v·ω)
const E1: usize = 6; // |D_r ū|²
const E2: usize = 7; // (D_r ū_i)² ω_i²
const E3: usize = 8; // |Dv|²
const E4: usize = 9; // (div v)²
const E5: usize = 10; // |(D_k v)·ω|²
const E6: usize = 11; // (div v)[ω_i (D_i v)·ω]
const E7: usize = 12; // (D_r ū·ω)(div v)
const E8: usize = 13; // (D_r ū·ω)[ω_i (D_i v)·ω]
const GRAD: usize = 14; // |Du|²

fn shell_sums(shell: &Shell<'_>) -> [f64; SUMS] {
    let n = shell.jets.len();
    let d = shell.mean_derivative;
    let mut terms = vec![[0.0; SUMS]; n];
    for (node, t) in terms.iter_mut().enumerate() {
        let jet = &shell.jets[node];
        let w = shell.omega(node);
        let u = &jet.value;
        let mut lap = [0.0; 3];
        let mut gd = [0.0; 3];
        for i in 0..3 {
            for k in 0..3 {
                lap[i] -= jet.hessian[i][k][k];
                gd[i] -= jet.hessian[k][i][k];
            }
        }
        let uw = dot3(u, w);
        let v = shell.fluctuation(node);
        let dv = shell.fluctuation_jacobian(node);
        let div = dv[0][0] + dv[1][1] + dv[2][2];
        // (D_k v)·ω for each k
        let dvw = [dot3(&dv[0], w), dot3(&dv[1], w), dot3(&dv[2], w)];
        let wdvw = dot3(w, &dvw);
        let dw = dot3(&d, w);
        t[LAP_U] = dot3(&lap, u);
        t[LAP_W] = dot3(&lap, w) * uw;
        t[GD_U] = dot3(&gd, u);
        t[GD_W] = dot3(&gd, w) * uw;
        t[T1] = dot3(&v, &dvw);
        t[T2] = div * dot3(&v, w);
        t[E1] = dot3(&d, &d);
        t[E2] = d[0] * d[0] * w[0] * w[0] + d[1] * d[1] * w[1] * w[1] + d[2] * d[2] * w[2] * w[2];
        t[E3] = frob2(&dv);
        t[E4] = div * div;
        t[E5] = dot3(&dvw, &dvw);
        t[E6] = div * wdvw;
        t[E7] = dw * div;
        t[E8] = dw * wdvw;
        t[GRAD] = frob2(&jet.jacobian);
    }
    let mut out = [0.0; SUMS];
    let mut col = vec![0.0; n];
    for (s, o) in out.iter_mut().enumerate() {
        for (node, c) in col.iter_mut().enumerate() {
            *c = shell.rule.nodes[node].weight * terms[node][s];
        }
        *o = pairwise_sum(&col);
    }
    out
}

/// The nine integrals making up ℬ*(u,u), each with its coefficient and
/// `c_α` applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BStarTerms {
    /// `α/(α+2) ∫ r⁻² [v_k (D_k v)·ω − (div v)(v·ω)]`
    pub singular: f64,
    pub radial: f64,
    pub radial_weighted: f64,
    pub fluctuation: f64,
    pub divergence: f64,
    pub normal_projection: f64,
    pub divergence_normal: f64,
    pub radial_divergence: f64,
    pub radial_normal: f64,
}

impl BStarTerms {
    pub fn total(&self) -> f64 {
        pairwise_sum(&[
            self.singular,
            self.radial,
            self.radial_weighted,
            self.fluctuation,
            self.divergence,
            self.normal_projection,
            self.divergence_normal,
            self.radial_divergence,
            self.radial_normal,
        ])
    }
}

/// Identity check and lower-bound ratio for one field and one α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FormReport {
    pub alpha: f64,
    /// `∫(Lu)ᵀΦu dx`
    pub lhs: f64,
    /// `½|u(0)|²`
    pub point_term: f64,
    /// `ℬ*(u,u)`
    pub bilinear_star: f64,
    /// `lhs − point_term − bilinear_star`
    pub residual: f64,
    /// `|lhs| + |point_term| + |bilinear_star| + 1`
    pub scale: f64,
    /// `∫|Du|²|x|⁻¹ dx`
    pub gradient_energy: f64,
    /// `(lhs − point_term) / gradient_energy`
    pub coercivity_ratio: f64,
    pub terms: BStarTerms,
}

impl FormReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.residual.abs() <= tol * self.scale
    }
}

/// Per-shell sums of a field about `center`, weighted by the radial rule.
struct ShellTable {
    radii: Vec<f64>,
    weights: Vec<f64>,
    sums: Vec<[f64; SUMS]>,
    point_value: Vec3,
}

fn shell_table<F: DisplacementField + ?Sized>(u: &F, grid: &PolarGrid, center: Vec3) -> Result<ShellTable> {
    let s = SplitField::about(u, &grid.sphere, center);
    let edge = s.shell(grid.r_max());
    let edge_size = edge
        .jets
        .iter()
        .map(|j| norm3(&j.value) + frob2(&j.jacobian).sqrt())
        .fold(0.0, f64::max);
    if edge_size > SUPPORT_TOLERANCE {
        return Err(LabError::NonCompactSupport(edge_size));
    }
    let sums: Vec<[f64; SUMS]> = grid
        .radial
        .nodes
        .par_iter()
        .map(|n| shell_sums(&s.shell(n.r)))
        .collect();
    Ok(ShellTable {
        radii: grid.radial.nodes.iter().map(|n| n.r).collect(),
        weights: grid.radial.nodes.iter().map(|n| n.weight).collect(),
        sums,
        point_value: u.value(&center),
    })
}

impl ShellTable {
    /// `Σ_shells w_r · f(r, sums)`.
    fn reduce<G: Fn(f64, &[f64; SUMS]) -> f64>(&self, g: G) -> f64 {
        let terms: Vec<f64> = self
            .radii
            .iter()
            .zip(&self.weights)
            .zip(&self.sums)
            .map(|((r, w), s)| w * g(*r, s))
            .collect();
        pairwise_sum(&terms)
    }

    fn report(&self, p: ElasticParameter) -> FormReport {
        let alpha = p.alpha();
        let c = p.c_alpha();
        let a = p.anisotropy();
        // integrands already multiplied by the r² Jacobian
        let lhs = c * self.reduce(|r, s| r * (s[LAP_U] + a * s[LAP_W] + alpha * (s[GD_U] + a * s[GD_W])));
        let term = |coef: f64, idx: usize| c * coef * self.reduce(|r, s| r * s[idx]);
        let terms = BStarTerms {
            singular: c * a * self.reduce(|_, s| s[T1] - s[T2]),
            radial: term(1.0, E1),
            radial_weighted: term(alpha * (2.0 * alpha + 3.0) / (alpha + 2.0), E2),
            fluctuation: term(1.0, E3),
            divergence: term(alpha, E4),
            normal_projection: term(a, E5),
            divergence_normal: term(alpha * alpha / (alpha + 2.0), E6),
            radial_divergence: term(alpha * (3.0 * alpha + 4.0) / (alpha + 2.0), E7),
            radial_normal: term(alpha, E8),
        };
        let bilinear_star = terms.total();
        let point_term = 0.5 * dot3(&self.point_value, &self.point_value);
        let gradient_energy = self.reduce(|r, s| r * s[GRAD]);
        FormReport {
            alpha,
            lhs,
            point_term,
            bilinear_star,
            residual: lhs - point_term - bilinear_star,
            scale: lhs.abs() + point_term.abs() + bilinear_star.abs() + 1.0,
            gradient_energy,
            coercivity_ratio: (lhs - point_term) / gradient_energy,
            terms,
        }
    }
}

/// The grid with radial panels split at the field's cutoff radii.
pub fn grid_for(u: &TestFieldSpec, grid: &PolarGrid) -> PolarGrid {
    let b = u.radial_breakpoints();
    if b.is_empty() {
        grid.clone()
    } else {
        grid.with_breakpoints(&b)
    }
}

/// Form reports for several α from one pass over the shells.
pub fn form_reports<F: DisplacementField + ?Sized>(
    params: &[ElasticParameter],
    u: &F,
    grid: &PolarGrid,
) -> Result<Vec<FormReport>> {
    let table = shell_table(u, grid, [0.0; 3])?;
    Ok(params.iter().map(|p| table.report(*p)).collect())
}

/// `∫(Lu)ᵀΦ_y u dx` with the polar rule centred at `y`.
pub fn lhs_form(p: ElasticParameter, u: &TestFieldSpec, grid: &PolarGrid, y: &Vec3) -> Result<f64> {
    let g = if norm3(y) == 0.0 {
        grid_for(u, grid)
    } else {
        grid.clone()
    };
    Ok(shell_table(u, &g, *y)?.report(p).lhs)
}

pub fn bstar_form(p: ElasticParameter, u: &TestFieldSpec, grid: &PolarGrid) -> Result<f64> {
    Ok(shell_table(u, &grid_for(u, grid), [0.0; 3])?.report(p).bilinear_star)
}

/// Like [`form_reports`] for one α, failing with `ToleranceExceeded` when
/// the identity residual is above [`IDENTITY_TOLERANCE`] relative to scale.
pub fn identity_residual(p: ElasticParameter, u: &TestFieldSpec, grid: &PolarGrid) -> Result<FormReport> {
    let report = shell_table(u, &grid_for(u, grid), [0.0; 3])?.report(p);
    if report.passes(IDENTITY_TOLERANCE) {
        Ok(report)
    } else {
        Err(LabError::ToleranceExceeded {
            residual: report.residual.abs() / report.scale,
            tolerance: IDENTITY_TOLERANCE,
        })
    }
}

/// Lower bound `c_α λ_min(B(α))` on the coercivity ratio.
pub fn coercivity_bound(p: ElasticParameter) -> Result<f64> {
    Ok(p.c_alpha() * applicable_form(p.alpha())?.smallest_eigenvalue())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coercivity {
    pub ratio: f64,
    pub bound: f64,
}

impl Coercivity {
    pub fn holds(&self, relative_slack: f64) -> bool {
        self.ratio >= self.bound * (1.0 - relative_slack)
    }
}

/// Ratio `(lhs − ½|u(0)|²) / ∫|Du|²|x|⁻¹dx` and its proven lower bound.
/// Only defined strictly inside the proven positivity interval.
pub fn coercivity_check(p: ElasticParameter, u: &TestFieldSpec, grid: &PolarGrid) -> Result<Coercivity> {
    let (lo, hi) = positivity_interval(1e-9)?;
    let alpha = p.alpha();
    if !(alpha > lo && alpha < hi) {
        return Err(LabError::DomainError {
            what: "coercivity bound needs alpha inside the proven positivity interval",
            alpha,
        });
    }
    let report = shell_table(u, &grid_for(u, grid), [0.0; 3])?.report(p);
    Ok(Coercivity {
        ratio: report.coercivity_ratio,
        bound: coercivity_bound(p)?,
    })
}

/// Threshold below which a form value counts as negative.
pub const NEGATIVE_THRESHOLD: f64 = -1e-8;
/// Default evaluation budget of the search.
pub const DEFAULT_SEARCH_BUDGET: usize = 5000;
/// Independently seeded workers per search.
pub const SEARCH_WORKERS: usize = 4;
const MAX_SEARCH_BUMPS: usize = 6;
const MIN_BUMP_RADIUS: f64 = 0.4;

/// A field with a negative weighted form, confirmed at two resolutions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub field: TestFieldSpec,
    pub worker_seed: u64,
    /// `lhs / ∫|Du|²|x|⁻¹` on the coarse search grid.
    pub search_ratio: f64,
    pub lhs_default: f64,
    pub lhs_refined: f64,
    pub evaluations: usize,
}

/// Coarse rule used inside the search loop.
pub fn search_grid() -> PolarGrid {
    PolarGrid::new(SphereRule::product(12, 24), RadialRule::composite(8.0, 8, 4))
}

fn normalized_form(p: ElasticParameter, u: &TestFieldSpec, grid: &PolarGrid) -> f64 {
    match shell_table(u, &grid_for(u, grid), [0.0; 3]) {
        Ok(t) => {
            let r = t.report(p);
            if r.gradient_energy > 0.0 {
                r.lhs / r.gradient_energy
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Flattened search coordinates of one bump: centre, amplitude, radius,
/// linear and upper-triangular quadratic modulation.
const BUMP_COORDS: usize = 16;

fn coordinate(u: &mut TestFieldSpec, idx: usize) -> &mut f64 {
    let b = &mut u.bumps[idx / BUMP_COORDS];
    match idx % BUMP_COORDS {
        i @ 0..=2 => &mut b.center[i],
        i @ 3..=5 => &mut b.amplitude[i - 3],
        6 => &mut b.radius,
        i @ 7..=9 => &mut b.modulation.linear[i - 7],
        i => {
            let (r, c) = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)][i - 10];
            &mut b.modulation.quadratic[r][c]
        }
    }
}

fn symmetrize(u: &mut TestFieldSpec) {
    for b in &mut u.bumps {
        let q = &mut b.modulation.quadratic;
        q[1][0] = q[0][1];
        q[2][0] = q[0][2];
        q[2][1] = q[1][2];
    }
}

fn admissible(u: &TestFieldSpec) -> bool {
    u.bumps
        .iter()
        .all(|b| b.radius >= MIN_BUMP_RADIUS && norm3(&b.center) + b.radius <= u.support_radius)
}

struct WorkerResult {
    seed: u64,
    best: TestFieldSpec,
    value: f64,
    evaluations: usize,
}

fn search_worker(p: ElasticParameter, budget: usize, seed: u64, grid: &PolarGrid) -> WorkerResult {
    let opts = RandomFieldOptions {
        max_bumps: MAX_SEARCH_BUMPS,
        origin_excluded: true,
        ..RandomFieldOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluations = 0;
    let mut best = TestFieldSpec::random(seed, &opts);
    let mut value = normalized_form(p, &best, grid);
    evaluations += 1;
    // random restarts for the first fifth of the budget
    while evaluations < budget / 5 {
        let candidate = TestFieldSpec::random(rng.gen(), &opts);
        let v = normalized_form(p, &candidate, grid);
        evaluations += 1;
        if v < value {
            best = candidate;
            value = v;
        }
    }
    best.seed = seed;
    let mut step = 0.25;
    while evaluations < budget && step > 1e-4 {
        let mut improved = false;
        let n = best.bumps.len() * BUMP_COORDS;
        for idx in 0..n {
            for sign in [1.0, -1.0] {
                if evaluations >= budget {
                    break;
                }
                let mut cand = best.clone();
                *coordinate(&mut cand, idx) += sign * step;
                symmetrize(&mut cand);
                if !admissible(&cand) {
                    continue;
                }
                let v = normalized_form(p, &cand, grid);
                evaluations += 1;
                if v < value {
                    best = cand;
                    value = v;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    WorkerResult {
        seed,
        best,
        value,
        evaluations,
    }
}

/// Seeded random sampling followed by coordinate descent on the normalized
/// form `lhs / ∫|Du|²|x|⁻¹` over origin-excluded fields. Workers run in
/// parallel; the lowest value (then lowest seed) wins. A field is returned
/// only when its form is below [`NEGATIVE_THRESHOLD`] at both the default
/// and the doubled quadrature.
pub fn counterexample_search(p: ElasticParameter, budget: usize, seed: u64) -> Option<Counterexample> {
    let grid = search_grid();
    let per_worker = (budget / SEARCH_WORKERS).max(1);
    let mut results: Vec<WorkerResult> = (0..SEARCH_WORKERS as u64)
        .into_par_iter()
        .map(|k| {
            search_worker(
                p,
                per_worker,
                seed.wrapping_mul(SEARCH_WORKERS as u64).wrapping_add(k),
                &grid,
            )
        })
        .collect();
    let evaluations = results.iter().map(|r| r.evaluations).sum();
    results.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.seed.cmp(&b.seed)));
    let winner = results.into_iter().next()?;
    if !(winner.value < 0.0) {
        return None;
    }
    let default = PolarGrid::default();
    let lhs_default = lhs_form(p, &winner.best, &default, &[0.0; 3]).ok()?;
    let lhs_refined = lhs_form(p, &winner.best, &default.refined(), &[0.0; 3]).ok()?;
    (lhs_default < NEGATIVE_THRESHOLD && lhs_refined < NEGATIVE_THRESHOLD).then_some(Counterexample {
        field: winner.best,
        worker_seed: winner.seed,
        search_ratio: winner.value,
        lhs_default,
        lhs_refined,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Bump;

    fn param(a: f64) -> ElasticParameter {
        ElasticParameter::new(a).unwrap()
    }

    #[test]
    fn zero_field_has_zero_form() {
        let u = TestFieldSpec::new(vec![], 0, 2.0, None).unwrap();
        let r = form_reports(&[param(0.7)], &u, &PolarGrid::default()).unwrap()[0];
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.bilinear_star, 0.0);
        assert_eq!(r.point_term, 0.0);
    }

    #[test]
    fn form_is_quadratic() {
        let u = TestFieldSpec::random(2, &RandomFieldOptions::default());
        let g = PolarGrid::default();
        let a = lhs_form(param(0.8), &u, &g, &[0.0; 3]).unwrap();
        let b = lhs_form(param(0.8), &u.scaled(2.0), &g, &[0.0; 3]).unwrap();
        assert!((b - 4.0 * a).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn alpha_zero_reduces_to_gradient_energy() {
        let u = TestFieldSpec::random(13, &RandomFieldOptions::default());
        let g = PolarGrid::default();
        let lhs = lhs_form(param(0.0), &u, &g, &[0.0; 3]).unwrap();
        // independent: ½|u(0)|² + ∫|Du|²/(4π|x|) on the same grid
        let u0 = u.value(&[0.0; 3]);
        let energy = crate::quadrature::volume_integrate_polar(
            &g,
            |r, w| frob2(&u.jacobian(&[r * w[0], r * w[1], r * w[2]])) / (4.0 * std::f64::consts::PI * r),
            1,
        )
        .unwrap();
        let expected = 0.5 * dot3(&u0, &u0) + energy;
        assert!((lhs - expected).abs() <= 1e-6 * expected.abs(), "{lhs} vs {expected}");
    }

    #[test]
    fn identity_holds_for_random_fields() {
        let g = PolarGrid::default();
        let params: Vec<_> = [-0.1, 0.0, 0.5, 1.0, 1.5].iter().map(|a| param(*a)).collect();
        for seed in 0..3 {
            let u = TestFieldSpec::random(seed, &RandomFieldOptions::default());
            for r in form_reports(&params, &u, &grid_for(&u, &g)).unwrap() {
                assert!(r.passes(IDENTITY_TOLERANCE), "seed {seed} alpha {}: {r:?}", r.alpha);
            }
            assert!(identity_residual(param(1.0), &u, &g).is_ok());
        }
    }

    #[test]
    fn annular_field_has_no_point_term() {
        let opts = RandomFieldOptions {
            origin_excluded: true,
            ..RandomFieldOptions::default()
        };
        let u = TestFieldSpec::random(4, &opts);
        let r = identity_residual(param(0.5), &u, &PolarGrid::default()).unwrap();
        assert_eq!(r.point_term, 0.0);
    }

    #[test]
    fn alpha_zero_terms() {
        let u = TestFieldSpec::random(6, &RandomFieldOptions::default());
        let r = identity_residual(param(0.0), &u, &PolarGrid::default()).unwrap();
        let t = r.terms;
        for x in [
            t.singular,
            t.radial_weighted,
            t.divergence,
            t.normal_projection,
            t.divergence_normal,
            t.radial_divergence,
            t.radial_normal,
        ] {
            assert_eq!(x, 0.0);
        }
        assert!((r.bilinear_star - (t.radial + t.fluctuation)).abs() <= 1e-15 * r.bilinear_star);
        // and the ratio is exactly c₀ up to quadrature
        assert!((r.coercivity_ratio - 1.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-7);
    }

    #[test]
    fn zero_mean_field_drops_radial_terms() {
        // u = x b(|x|) has ū ≡ 0
        let bump = Bump {
            center: [0.0; 3],
            radius: 2.0,
            amplitude: [1.0, 0.0, 0.0],
            modulation: crate::field::Modulation {
                constant: 0.0,
                linear: [1.0, 0.0, 0.0],
                quadratic: [[0.0; 3]; 3],
            },
        };
        let u = TestFieldSpec::new(vec![bump], 0, 2.0, None).unwrap();
        let r = identity_residual(param(1.0), &u, &PolarGrid::default()).unwrap();
        let t = r.terms;
        for x in [t.radial, t.radial_weighted, t.radial_divergence, t.radial_normal] {
            assert!(x.abs() < 1e-13, "{t:?}");
        }
    }

    #[test]
    fn coercivity_at_one() {
        let g = PolarGrid::default();
        let bound = coercivity_bound(param(1.0)).unwrap();
        assert!(bound > 0.0);
        for seed in 0..3 {
            let u = TestFieldSpec::random(seed, &RandomFieldOptions::default());
            let c = coercivity_check(param(1.0), &u, &g).unwrap();
            assert!(c.holds(1e-3), "{c:?}");
        }
        let u = TestFieldSpec::random(0, &RandomFieldOptions::default());
        assert!(matches!(
            coercivity_check(param(2.0), &u, &g),
            Err(LabError::DomainError { .. })
        ));
    }

    #[test]
    fn coercivity_bound_at_zero_is_c0() {
        let b = coercivity_bound(param(0.0)).unwrap();
        assert!((b - 1.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-14);
    }

    #[test]
    fn outside_grid_is_rejected() {
        let u = TestFieldSpec::random(1, &RandomFieldOptions::default());
        let small = PolarGrid::new(SphereRule::product(8, 16), RadialRule::composite(1.0, 4, 4));
        assert!(matches!(
            lhs_form(param(0.0), &u, &small, &[0.0; 3]),
            Err(LabError::NonCompactSupport(_))
        ));
    }

    #[test]
    fn search_finds_nothing_at_zero() {
        assert!(counterexample_search(param(0.0), 200, 1).is_none());
    }
}
