//! Deterministic product rules on S² and on balls in polar coordinates.
//!
//! The sphere rule is Gauss–Legendre in `cos θ` times the uniform rule in
//! `φ`; the radial rule is composite Gauss–Legendre. Integrands on balls are
//! evaluated as `Σ w_r w_ω g(r, ω) r²`, so weights like `r⁻¹` or `r⁻²` in
//! `g` are absorbed by the Jacobian as long as `g r²` stays bounded.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::elastic::DisplacementField;
use crate::error::{LabError, Result};
use crate::linalg::{pairwise_sum, Vec3};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            // P₁(z) = z, root at 0, weight 2
            x[0] = 0.0;
            w[0] = 2.0;
            return (x, w);
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphereNode {
    pub omega: Vec3,
    pub weight: f64,
}

/// Product rule on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SphereRule {
    pub nodes: Vec<SphereNode>,
    pub exactness_degree: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl SphereRule {
    /// `n_theta` Gauss nodes in `cos θ` times `n_phi` equispaced azimuths.
    /// Exact for spherical polynomials of degree
    /// `min(2 n_theta - 1, n_phi - 1)`.
    pub fn product(n_theta: usize, n_phi: usize) -> Self {
        let (z, wz) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        for (zi, wi) in z.iter().zip(&wz) {
            let s = (1.0 - zi * zi).max(0.0).sqrt();
            for j in 0..n_phi {
                let phi = dphi * (j as f64 + 0.5);
                nodes.push(SphereNode {
                    omega: [s * phi.cos(), s * phi.sin(), *zi],
                    weight: wi * dphi,
                });
            }
        }
        SphereRule {
            nodes,
            exactness_degree: (2 * n_theta - 1).min(n_phi - 1),
            n_theta,
            n_phi,
        }
    }

    /// 32 × 64 nodes.
    pub fn standard() -> Self {
        Self::product(32, 64)
    }

    pub fn refined(&self) -> Self {
        Self::product(2 * self.n_theta, 2 * self.n_phi)
    }
}

/// `Σ wᵢ f(ωᵢ)`.
pub fn sphere_integrate<F: Fn(&Vec3) -> f64>(rule: &SphereRule, f: F) -> f64 {
    let terms: Vec<f64> = rule.nodes.iter().map(|n| n.weight * f(&n.omega)).collect();
    pairwise_sum(&terms)
}

/// Component-wise sphere integral of a vector-valued function.
pub fn sphere_integrate_vec<F: Fn(&Vec3) -> Vec3>(rule: &SphereRule, f: F) -> Vec3 {
    let vals: Vec<Vec3> = rule.nodes.iter().map(|n| f(&n.omega)).collect();
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let terms: Vec<f64> = vals.iter().zip(&rule.nodes).map(|(v, n)| n.weight * v[c]).collect();
        *o = pairwise_sum(&terms);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialNode {
    pub r: f64,
    pub weight: f64,
}

/// Composite Gauss–Legendre rule on `[0, r_max]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialRule {
    pub nodes: Vec<RadialNode>,
    pub r_max: f64,
    pub panels: usize,
    pub nodes_per_panel: usize,
    pub breakpoints: Vec<f64>,
}

impl RadialRule {
    pub fn composite(r_max: f64, panels: usize, nodes_per_panel: usize) -> Self {
        Self::with_breakpoints(r_max, panels, nodes_per_panel, &[])
    }

    /// Uniform panels, further split at the given radii so that kinks of
    /// the integrand fall on panel edges.
    pub fn with_breakpoints(r_max: f64, panels: usize, nodes_per_panel: usize, breaks: &[f64]) -> Self {
        let mut edges: Vec<f64> = (0..=panels).map(|i| r_max * i as f64 / panels as f64).collect();
        for &b in breaks {
            if b > 0.0 && b < r_max {
                edges.push(b);
            }
        }
        edges.sort_by(|a, b| a.total_cmp(b));
        edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * r_max);
        let (x, w) = gauss_legendre(nodes_per_panel);
        let mut nodes = Vec::with_capacity((edges.len() - 1) * nodes_per_panel);
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(RadialNode {
                    r: mid + half * xi,
                    weight: half * wi,
                });
            }
        }
        let mut breakpoints: Vec<f64> = breaks.iter().copied().filter(|b| *b > 0.0 && *b < r_max).collect();
        breakpoints.sort_by(|a, b| a.total_cmp(b));
        RadialRule {
            nodes,
            r_max,
            panels,
            nodes_per_panel,
            breakpoints,
        }
    }

    /// Polynomials in `r` up to this degree are integrated exactly.
    pub fn exactness_degree(&self) -> usize {
        2 * self.nodes_per_panel - 1
    }
}

/// Tensor product of a sphere rule and a radial rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarGrid {
    pub sphere: SphereRule,
    pub radial: RadialRule,
}

impl Default for PolarGrid {
    /// 32 × 64 sphere nodes, 16 panels × 8 nodes on `[0, 8]`.
    fn default() -> Self {
        PolarGrid {
            sphere: SphereRule::standard(),
            radial: RadialRule::composite(8.0, 16, 8),
        }
    }
}

impl PolarGrid {
    pub fn new(sphere: SphereRule, radial: RadialRule) -> Self {
        PolarGrid { sphere, radial }
    }

    /// Doubles the node count in every direction.
    pub fn refined(&self) -> Self {
        PolarGrid {
            sphere: self.sphere.refined(),
            radial: RadialRule::with_breakpoints(
                self.radial.r_max,
                2 * self.radial.panels,
                self.radial.nodes_per_panel,
                &self.radial.breakpoints,
            ),
        }
    }

    /// Same rule with the radial panels split at `breaks`.
    pub fn with_breakpoints(&self, breaks: &[f64]) -> Self {
        let mut all = self.radial.breakpoints.clone();
        all.extend_from_slice(breaks);
        PolarGrid {
            sphere: self.sphere.clone(),
            radial: RadialRule::with_breakpoints(
                self.radial.r_max,
                self.radial.panels,
                self.radial.nodes_per_panel,
                &all,
            ),
        }
    }

    pub fn r_max(&self) -> f64 {
        self.radial.r_max
    }

    pub fn len(&self) -> usize {
        self.sphere.nodes.len() * self.radial.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of `B_{r_max}` reproduced by the rule.
    pub fn ball_volume(&self) -> f64 {
        let radial: Vec<f64> = self.radial.nodes.iter().map(|n| n.weight * n.r * n.r).collect();
        let sphere: Vec<f64> = self.sphere.nodes.iter().map(|n| n.weight).collect();
        pairwise_sum(&radial) * pairwise_sum(&sphere)
    }

    /// Sums `shell(r)` weighted by the radial weights, evaluating shells in
    /// parallel and reducing pairwise in radial order.
    pub fn reduce_shells<F>(&self, shell: F) -> f64
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        let terms: Vec<f64> = self.radial.nodes.par_iter().map(|n| n.weight * shell(n.r)).collect();
        pairwise_sum(&terms)
    }
}

/// Absolute level above which an integrand is considered not to vanish on
/// the outer sphere.
pub const SUPPORT_TOLERANCE: f64 = 1e-12;

/// `∫ g(r, ω) r² dr dσ` over `B_{r_max}`.
///
/// `singular_power` states the power of `r⁻¹` carried by `g`; it must be
/// 0, 1 or 2 so that `g r²` stays bounded at the origin.
pub fn volume_integrate_polar<G>(grid: &PolarGrid, g: G, singular_power: u32) -> Result<f64>
where
    G: Fn(f64, &Vec3) -> f64 + Sync,
{
    if singular_power > 2 {
        return Err(LabError::InvalidInput(format!(
            "r^-{singular_power} is not integrable against r^2 dr"
        )));
    }
    let r_max = grid.r_max();
    let edge = grid
        .sphere
        .nodes
        .iter()
        .map(|n| g(r_max, &n.omega).abs())
        .fold(0.0, f64::max);
    if edge > SUPPORT_TOLERANCE {
        return Err(LabError::NonCompactSupport(edge));
    }
    Ok(grid.reduce_shells(|r| r * r * sphere_integrate(&grid.sphere, |w| g(r, w))))
}

/// Spherical mean `ū(r) = (4π)⁻¹ ∫ u(rω) dσ`; `u(0)` at `r = 0`.
pub fn spherical_mean<F: DisplacementField + ?Sized>(rule: &SphereRule, u: &F, r: f64) -> Vec3 {
    if r == 0.0 {
        return u.value(&[0.0; 3]);
    }
    let s = sphere_integrate_vec(rule, |w| u.value(&[r * w[0], r * w[1], r * w[2]]));
    [s[0] / (4.0 * PI), s[1] / (4.0 * PI), s[2] / (4.0 * PI)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elastic::Jet;
    use crate::field::{RandomFieldOptions, TestFieldSpec};
    use crate::linalg::norm3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1, 2, 5, 8, 16, 32] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..(2 * n) {
                let approx: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn sphere_rule_basic_integrals() {
        let rule = SphereRule::standard();
        assert!(rule.exactness_degree >= 31);
        assert!((sphere_integrate(&rule, |_| 1.0) - 4.0 * PI).abs() < 1e-12);
        assert!(sphere_integrate(&rule, |w| w[0] * w[1]).abs() < 1e-14);
        for i in 0..3 {
            for j in 0..3 {
                let v = sphere_integrate(&rule, |w| w[i] * w[j]);
                let e = if i == j { 4.0 * PI / 3.0 } else { 0.0 };
                assert!((v - e).abs() < 1e-12);
            }
        }
        // ∫ ω₁⁴ = 4π/5, ∫ ω₁² ω₂² = 4π/15
        assert!((sphere_integrate(&rule, |w| w[0].powi(4)) - 4.0 * PI / 5.0).abs() < 1e-12);
        assert!((sphere_integrate(&rule, |w| (w[0] * w[1]).powi(2)) - 4.0 * PI / 15.0).abs() < 1e-12);
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
        // unit quaternion
        let q: [f64; 4] = loop {
            let v = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.1 && n < 1.0 {
                break [v[0] / n, v[1] / n, v[2] / n, v[3] / n];
            }
        };
        let [a, b, c, d] = q;
        [
            [
                a * a + b * b - c * c - d * d,
                2.0 * (b * c - a * d),
                2.0 * (b * d + a * c),
            ],
            [
                2.0 * (b * c + a * d),
                a * a - b * b + c * c - d * d,
                2.0 * (c * d - a * b),
            ],
            [
                2.0 * (b * d - a * c),
                2.0 * (c * d + a * b),
                a * a - b * b - c * c + d * d,
            ],
        ]
    }

    #[test]
    fn rotational_invariance() {
        let rule = SphereRule::standard();
        let f = |w: &Vec3| (2.0 * w[0] + w[1] * w[2]).exp() * (1.0 + w[2] * w[2]);
        let base = sphere_integrate(&rule, f);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let m = random_rotation(&mut rng);
            let rotated = sphere_integrate(&rule, |w| {
                let rw = [
                    m[0][0] * w[0] + m[0][1] * w[1] + m[0][2] * w[2],
                    m[1][0] * w[0] + m[1][1] * w[1] + m[1][2] * w[2],
                    m[2][0] * w[0] + m[2][1] * w[1] + m[2][2] * w[2],
                ];
                f(&rw)
            });
            assert!((rotated - base).abs() < 1e-9 * base.abs());
        }
    }

    #[test]
    fn polar_grid_measures_ball() {
        let grid = PolarGrid::default();
        let exact = 4.0 * PI * 512.0 / 3.0;
        assert!((grid.ball_volume() - exact).abs() < 1e-10 * exact);
        for n in &grid.radial.nodes {
            assert!(n.weight > 0.0 && n.r > 0.0);
        }
        assert!(grid.sphere.nodes.iter().all(|n| n.weight > 0.0));
    }

    #[test]
    fn gaussian_against_r_inverse() {
        let grid = PolarGrid::new(SphereRule::standard(), RadialRule::composite(6.0, 16, 8));
        let v = volume_integrate_polar(&grid, |r, _| (-r * r).exp() / r, 1).unwrap();
        assert!((v - 2.0 * PI).abs() < 1e-8, "{v}");
    }

    #[test]
    fn ball_indicator_with_breakpoint() {
        let grid = PolarGrid::default().with_breakpoints(&[1.0]);
        let v = volume_integrate_polar(&grid, |r, _| if r < 1.0 { 1.0 } else { 0.0 }, 0).unwrap();
        assert!((v - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn odd_angular_factor_integrates_to_zero() {
        let grid = PolarGrid::default();
        let h = |r: f64| if r < 3.0 { (1.0 - r * r / 9.0).powi(4) } else { 0.0 };
        let v = volume_integrate_polar(&grid, |r, w| w[0] * h(r) / (r * r), 2).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn non_compact_integrand_is_rejected() {
        let grid = PolarGrid::default();
        let err = volume_integrate_polar(&grid, |_, _| 1.0, 0).unwrap_err();
        assert!(matches!(err, LabError::NonCompactSupport(_)));
        assert!(volume_integrate_polar(&grid, |_, _| 0.0, 3).is_err());
    }

    #[test]
    fn self_convergence_under_refinement() {
        let grid = PolarGrid::default();
        let u = TestFieldSpec::random(4, &RandomFieldOptions::default());
        let g = |r: f64, w: &Vec3| {
            let j = u.jet(&[r * w[0], r * w[1], r * w[2]]);
            crate::linalg::frob2(&j.jacobian) / r
        };
        let a = volume_integrate_polar(&grid, g, 1).unwrap();
        let b = volume_integrate_polar(&grid.refined(), g, 1).unwrap();
        assert!((a - b).abs() < 1e-8 * a.abs(), "{a} vs {b}");
    }

    struct Radial;
    impl DisplacementField for Radial {
        fn jet(&self, x: &Vec3) -> Jet {
            let r = norm3(x);
            let f = |r: f64| if r < 2.0 { (4.0 - r * r).powi(3) } else { 0.0 };
            Jet {
                value: [f(r), 2.0 * f(r), -f(r)],
                ..Jet::default()
            }
        }
        fn support_radius(&self) -> f64 {
            2.0
        }
    }

    struct OddRadial;
    impl DisplacementField for OddRadial {
        fn jet(&self, x: &Vec3) -> Jet {
            let r = norm3(x);
            let b = if r < 2.0 { (4.0 - r * r).powi(3) } else { 0.0 };
            Jet {
                value: [x[0] * b, x[1] * b, x[2] * b],
                ..Jet::default()
            }
        }
        fn support_radius(&self) -> f64 {
            2.0
        }
    }

    #[test]
    fn spherical_mean_examples() {
        let rule = SphereRule::standard();
        for r in [0.0, 0.3, 1.1, 1.9] {
            let m = spherical_mean(&rule, &Radial, r);
            let f = (4.0 - r * r).powi(3);
            assert!((m[0] - f).abs() < 1e-12 * f.max(1.0));
            assert!((m[1] - 2.0 * f).abs() < 1e-12 * f.max(1.0));
            let o = spherical_mean(&rule, &OddRadial, r);
            assert!(norm3(&o) < 1e-13);
        }
    }

    #[test]
    fn spherical_mean_matches_monte_carlo() {
        let rule = SphereRule::standard();
        let u = TestFieldSpec::random(21, &RandomFieldOptions::default());
        let r = 1.3;
        let mean = spherical_mean(&rule, &u, r);
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let n = 1_000_000;
        let mut sum = [0.0; 3];
        let mut sum2 = [0.0; 3];
        for _ in 0..n {
            let w = crate::field::random_unit(&mut rng);
            let v = u.value(&[r * w[0], r * w[1], r * w[2]]);
            for c in 0..3 {
                sum[c] += v[c];
                sum2[c] += v[c] * v[c];
            }
        }
        for c in 0..3 {
            let m = sum[c] / n as f64;
            let var = sum2[c] / n as f64 - m * m;
            let se = (var / n as f64).sqrt();
            assert!(
                (m - mean[c]).abs() <= 3.0 * se,
                "component {c}: {m} vs {} (se {se})",
                mean[c]
            );
        }
    }
}
