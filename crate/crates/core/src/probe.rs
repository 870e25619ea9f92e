//! Finite-difference Lamé Dirichlet solver on voxel domains and the decay
//! quantities used to confront solutions with the Wiener series.
//!
//! Unknowns live at the centres of open voxels and vanish everywhere else.
//! The operator is `A = −Δ_h + α DᵀD`, with `Δ_h` the 7-point Laplacian and
//! `D` the centred divergence of the zero-extended field. `DᵀD` is the
//! centred `−grad div`, and `DᵀD ≤ −Δ_h` symbol-wise, so `A` is symmetric
//! positive definite for every `α > −1`.

use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::{wiener_profile, wiener_profile_shape, WienerOptions, WienerProfile};
use crate::elastic::{lame_from_jet, DisplacementField, ElasticParameter, Jet};
use crate::error::{LabError, Result};
use crate::field::{Bump, Modulation, TestFieldSpec};
use crate::linalg::{conjugate_gradient, dot3, norm3, pairwise_sum, CgOutcome, Vec3};
use crate::voxel::{DomainShape, Lattice, VoxelDomain};

/// Default relative residual of the Dirichlet solves.
pub const PROBE_TOLERANCE: f64 = 1e-8;
/// Fits need at least this many dyadic levels.
pub const MIN_FIT_LEVELS: usize = 4;
/// Wiener partial sums below this count as zero.
pub const NO_DECAY_THRESHOLD: f64 = 1e-6;

const PAD: usize = 2;

/// `A = −Δ_h + α DᵀD` on the open voxels of a lattice, acting on three
/// component blocks of a lattice padded by two ghost layers.
#[derive(Debug, Clone)]
pub struct LameSystem {
    pub lattice: Lattice,
    pub alpha: f64,
    padded: [usize; 3],
    free: Vec<bool>,
}

impl LameSystem {
    pub fn new(lattice: Lattice, open: &[bool], alpha: ElasticParameter) -> Result<Self> {
        if open.len() != lattice.len() {
            return Err(LabError::InvalidInput("mask does not match the lattice".into()));
        }
        let padded = lattice.dims.map(|d| d + 2 * PAD);
        let mut free = vec![false; padded[0] * padded[1] * padded[2]];
        for (idx, &o) in open.iter().enumerate() {
            if o {
                let [i, j, k] = lattice.coords(idx);
                free[i + PAD + padded[0] * (j + PAD + padded[1] * (k + PAD))] = true;
            }
        }
        Ok(LameSystem {
            lattice,
            alpha: alpha.alpha(),
            padded,
            free,
        })
    }

    /// Nodes per component block.
    pub fn block(&self) -> usize {
        self.free.len()
    }

    pub fn unknowns(&self) -> usize {
        3 * self.free.iter().filter(|&&f| f).count()
    }

    fn padded_index(&self, idx: usize) -> usize {
        let [i, j, k] = self.lattice.coords(idx);
        i + PAD + self.padded[0] * (j + PAD + self.padded[1] * (k + PAD))
    }

    /// Lattice field → block vector (masked voxels dropped).
    pub fn pack(&self, u: &[Vec3]) -> Vec<f64> {
        let n = self.block();
        let mut out = vec![0.0; 3 * n];
        for (idx, v) in u.iter().enumerate() {
            let p = self.padded_index(idx);
            if self.free[p] {
                for c in 0..3 {
                    out[c * n + p] = v[c];
                }
            }
        }
        out
    }

    /// Block vector → lattice field, zero on masked voxels.
    pub fn unpack(&self, x: &[f64]) -> Vec<Vec3> {
        let n = self.block();
        (0..self.lattice.len())
            .map(|idx| {
                let p = self.padded_index(idx);
                if self.free[p] {
                    [x[p], x[n + p], x[2 * n + p]]
                } else {
                    [0.0; 3]
                }
            })
            .collect()
    }

    pub fn diagonal(&self) -> f64 {
        let h2 = self.lattice.h * self.lattice.h;
        (6.0 + 0.5 * self.alpha) / h2
    }

    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let d = 1.0 / self.diagonal();
        let mut inv = vec![0.0; 3 * self.block()];
        for c in 0..3 {
            for (p, &f) in self.free.iter().enumerate() {
                if f {
                    inv[c * self.block() + p] = d;
                }
            }
        }
        inv
    }

    /// `y = A x`; entries of `x` at masked nodes must be zero.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.block();
        let [px, py, pz] = self.padded;
        let sx = 1;
        let sy = px;
        let sz = px * py;
        let h = self.lattice.h;
        let (ux, rest) = x.split_at(n);
        let (uy, uz) = rest.split_at(n);
        let mut q = vec![0.0; n];
        if self.alpha != 0.0 {
            let inv2h = 0.5 / h;
            q.par_chunks_mut(sz).enumerate().for_each(|(k, plane)| {
                if k == 0 || k + 1 == pz {
                    return;
                }
                for j in 1..py - 1 {
                    for i in 1..px - 1 {
                        let p = i + sy * j + sz * k;
                        plane[i + sy * j] =
                            inv2h * (ux[p + sx] - ux[p - sx] + uy[p + sy] - uy[p - sy] + uz[p + sz] - uz[p - sz]);
                    }
                }
            });
        }
        let inv_h2 = 1.0 / (h * h);
        let grad_scale = self.alpha * 0.5 / h;
        let strides = [sx, sy, sz];
        y.par_chunks_mut(sz).enumerate().for_each(|(t, plane)| {
            let (c, k) = (t / pz, t % pz);
            let u = &x[c * n..(c + 1) * n];
            let s = strides[c];
            for j in 0..py {
                for i in 0..px {
                    let p = i + sy * j + sz * k;
                    plane[i + sy * j] = if self.free[p] {
                        let lap = 6.0 * u[p] - u[p - sx] - u[p + sx] - u[p - sy] - u[p + sy] - u[p - sz] - u[p + sz];
                        inv_h2 * lap + grad_scale * (q[p - s] - q[p + s])
                    } else {
                        0.0
                    };
                }
            }
        });
    }

    pub fn iteration_cap(&self) -> usize {
        10 * (3.0 * self.block() as f64).cbrt().ceil() as usize * 3
    }

    /// Solves `A x = b` from `x = 0`.
    pub fn solve(&self, b: &[f64], tol: f64) -> Result<(Vec<f64>, CgOutcome)> {
        let mut x = vec![0.0; b.len()];
        let inv = self.inverse_diagonal();
        let out = conjugate_gradient(|v, w| self.apply(v, w), &inv, b, &mut x, tol, self.iteration_cap())?;
        Ok((x, out))
    }
}

/// `Lu = f` in Ω with zero trace; the forcing vanishes on `B_{2R}`.
pub struct DirichletProblem<'a> {
    pub domain: &'a VoxelDomain,
    pub alpha: ElasticParameter,
    pub forcing: &'a dyn DisplacementField,
    pub r: f64,
}

impl<'a> DirichletProblem<'a> {
    /// Checks at every voxel centre in `B_{2R}` that the forcing vanishes.
    pub fn new(
        domain: &'a VoxelDomain,
        alpha: ElasticParameter,
        forcing: &'a dyn DisplacementField,
        r: f64,
    ) -> Result<Self> {
        if !(r > 0.0) {
            return Err(LabError::InvalidInput(format!("R must be positive, got {r}")));
        }
        let l = &domain.lattice;
        let hit = (0..l.len()).into_par_iter().find_any(|&idx| {
            let x = l.center_of(idx);
            norm3(&x) <= 2.0 * r && forcing.value(&x).iter().any(|v| *v != 0.0)
        });
        if let Some(idx) = hit {
            return Err(LabError::InvalidInput(format!(
                "forcing is nonzero at {:?}, inside B_2R with R = {r}",
                l.center_of(idx)
            )));
        }
        Ok(DirichletProblem {
            domain,
            alpha,
            forcing,
            r,
        })
    }
}

/// Discrete solution on the problem lattice; `u` is zero on masked voxels.
#[derive(Debug, Clone)]
pub struct SolutionGrid {
    pub lattice: Lattice,
    pub open: Vec<bool>,
    pub u: Vec<Vec3>,
    pub residual: f64,
    pub iterations: usize,
    pub h: f64,
}

impl SolutionGrid {
    /// Grid data given directly, e.g. synthetic fields for the profiles.
    pub fn from_values(domain: &VoxelDomain, mut u: Vec<Vec3>) -> Result<Self> {
        if u.len() != domain.lattice.len() {
            return Err(LabError::InvalidInput("field does not match the lattice".into()));
        }
        for (v, &o) in u.iter_mut().zip(&domain.open) {
            if !o {
                *v = [0.0; 3];
            }
        }
        Ok(SolutionGrid {
            lattice: domain.lattice,
            open: domain.open.clone(),
            u,
            residual: 0.0,
            iterations: 0,
            h: domain.h(),
        })
    }

    /// `|Du|²` at voxel `idx` by centred differences of the zero extension.
    pub fn gradient_sq(&self, idx: usize) -> f64 {
        let l = &self.lattice;
        let c = l.coords(idx);
        let mut s = 0.0;
        for a in 0..3 {
            let mut lo = c;
            let mut hi = c;
            let below = if c[a] > 0 {
                lo[a] -= 1;
                self.u[l.index(lo[0], lo[1], lo[2])]
            } else {
                [0.0; 3]
            };
            let above = if c[a] + 1 < l.dims[a] {
                hi[a] += 1;
                self.u[l.index(hi[0], hi[1], hi[2])]
            } else {
                [0.0; 3]
            };
            for i in 0..3 {
                let d = (above[i] - below[i]) / (2.0 * self.h);
                s += d * d;
            }
        }
        s
    }

    /// `Σ g(x, idx) h³` over open voxels with `pred(|x|)`.
    fn sum_open<P, G>(&self, pred: P, g: G) -> f64
    where
        P: Fn(f64) -> bool + Sync,
        G: Fn(&Vec3, usize) -> f64 + Sync,
    {
        let terms: Vec<f64> = (0..self.lattice.len())
            .into_par_iter()
            .map(|idx| {
                if !self.open[idx] {
                    return 0.0;
                }
                let x = self.lattice.center_of(idx);
                if pred(norm3(&x)) {
                    g(&x, idx)
                } else {
                    0.0
                }
            })
            .collect();
        pairwise_sum(&terms) * self.h.powi(3)
    }

    fn max_open<P: Fn(f64) -> bool + Sync>(&self, pred: P) -> f64 {
        (0..self.lattice.len())
            .into_par_iter()
            .filter(|&idx| self.open[idx] && pred(norm3(&self.lattice.center_of(idx))))
            .map(|idx| dot3(&self.u[idx], &self.u[idx]))
            .reduce(|| 0.0, f64::max)
    }
}

/// Solves the discrete Dirichlet problem by Jacobi-preconditioned CG.
pub fn solve_dirichlet(prob: &DirichletProblem, tol: f64) -> Result<SolutionGrid> {
    let dom = prob.domain;
    let sys = LameSystem::new(dom.lattice, &dom.open, prob.alpha)?;
    let f: Vec<Vec3> = (0..dom.lattice.len())
        .into_par_iter()
        .map(|idx| {
            if dom.open[idx] {
                prob.forcing.value(&dom.lattice.center_of(idx))
            } else {
                [0.0; 3]
            }
        })
        .collect();
    let (x, out) = sys.solve(&sys.pack(&f), tol)?;
    Ok(SolutionGrid {
        lattice: dom.lattice,
        open: dom.open.clone(),
        u: sys.unpack(&x),
        residual: out.relative_residual,
        iterations: out.iterations,
        h: dom.h(),
    })
}

/// Scalar `−Δ_h w = f` with zero extension, solved independently of
/// [`LameSystem`]; the reference for the `α = 0` Lamé solve.
pub fn poisson_solve(dom: &VoxelDomain, rhs: &[f64], tol: f64) -> Result<(Vec<f64>, CgOutcome)> {
    let l = dom.lattice;
    let h2 = l.h * l.h;
    let apply = |x: &[f64], y: &mut [f64]| {
        y.par_iter_mut().enumerate().for_each(|(idx, out)| {
            if !dom.open[idx] {
                *out = 0.0;
                return;
            }
            let c = l.coords(idx);
            let mut acc = 6.0 * x[idx];
            for a in 0..3 {
                for step in [-1i64, 1] {
                    let mut nb = c;
                    let t = c[a] as i64 + step;
                    if t < 0 || t >= l.dims[a] as i64 {
                        continue;
                    }
                    nb[a] = t as usize;
                    acc -= x[l.index(nb[0], nb[1], nb[2])];
                }
            }
            *out = acc / h2;
        });
    };
    let inv: Vec<f64> = dom.open.iter().map(|&o| if o { h2 / 6.0 } else { 0.0 }).collect();
    let b: Vec<f64> = rhs
        .iter()
        .zip(&dom.open)
        .map(|(v, &o)| if o { *v } else { 0.0 })
        .collect();
    let mut x = vec![0.0; b.len()];
    let cap = 30 * (l.len() as f64).cbrt().ceil() as usize * 3;
    let out = conjugate_gradient(apply, &inv, &b, &mut x, tol, cap)?;
    Ok((x, out))
}

/// `w = S(x)·(1 + x₂, x₁ − x₃, 1 + x₁x₂)` with `S = Π sin²(πx_k)`, which
/// vanishes with its gradient on the boundary of the unit cube.
#[derive(Debug, Clone, Copy, Default)]
pub struct ManufacturedField;

impl DisplacementField for ManufacturedField {
    fn jet(&self, x: &Vec3) -> Jet {
        use std::f64::consts::PI;
        let mut jet = Jet::default();
        if x.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return jet;
        }
        // factors sin²(πt) with first and second derivatives
        let f: [(f64, f64, f64); 3] = std::array::from_fn(|k| {
            let (s, c) = (PI * x[k]).sin_cos();
            (s * s, 2.0 * PI * s * c, 2.0 * PI * PI * (c * c - s * s))
        });
        let sv = f[0].0 * f[1].0 * f[2].0;
        let mut sg = [0.0; 3];
        let mut sh = [[0.0; 3]; 3];
        for k in 0..3 {
            let (a, b) = ((k + 1) % 3, (k + 2) % 3);
            sg[k] = f[k].1 * f[a].0 * f[b].0;
            sh[k][k] = f[k].2 * f[a].0 * f[b].0;
            for l in 0..3 {
                if l != k {
                    let m = 3 - k - l;
                    sh[k][l] = f[k].1 * f[l].1 * f[m].0;
                }
            }
        }
        let m = [1.0 + x[1], x[0] - x[2], 1.0 + x[0] * x[1]];
        // mg[i][k] = D_k m_i, mh[i][k][l] = D_k D_l m_i
        let mg = [[0.0, 1.0, 0.0], [1.0, 0.0, -1.0], [x[1], x[0], 0.0]];
        let mut mh = [[[0.0; 3]; 3]; 3];
        mh[2][0][1] = 1.0;
        mh[2][1][0] = 1.0;
        for i in 0..3 {
            jet.value[i] = sv * m[i];
            for k in 0..3 {
                jet.jacobian[k][i] = sg[k] * m[i] + sv * mg[i][k];
                for l in 0..3 {
                    jet.hessian[i][k][l] = sh[k][l] * m[i] + sg[k] * mg[i][l] + sg[l] * mg[i][k] + sv * mh[i][k][l];
                }
            }
        }
        jet
    }

    fn support_radius(&self) -> f64 {
        3f64.sqrt()
    }
}

/// The unit cube with `n³` voxels whose centres are the interior nodes
/// `(i + 1)/(n + 1)`; the ghost layer sits on the cube faces.
pub fn unit_cube_domain(n: usize) -> Result<VoxelDomain> {
    let h = 1.0 / (n as f64 + 1.0);
    let lattice = Lattice::new([n; 3], h, [0.5 * h; 3])?;
    VoxelDomain::new(lattice, vec![true; lattice.len()])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManufacturedRun {
    pub n: usize,
    pub h: f64,
    pub max_error: f64,
    pub rms_error: f64,
    pub iterations: usize,
}

/// Solves `L_h u = L w` for [`ManufacturedField`] and compares with `w`.
pub fn manufactured_run(alpha: ElasticParameter, n: usize, tol: f64) -> Result<ManufacturedRun> {
    let dom = unit_cube_domain(n)?;
    let l = dom.lattice;
    let w = ManufacturedField;
    let f: Vec<Vec3> = (0..l.len())
        .into_par_iter()
        .map(|idx| lame_from_jet(alpha, &w.jet(&l.center_of(idx))))
        .collect();
    let sys = LameSystem::new(l, &dom.open, alpha)?;
    let (x, out) = sys.solve(&sys.pack(&f), tol)?;
    let u = sys.unpack(&x);
    let errs: Vec<f64> = (0..l.len())
        .into_par_iter()
        .map(|idx| {
            let e = w.value(&l.center_of(idx));
            let d = [u[idx][0] - e[0], u[idx][1] - e[1], u[idx][2] - e[2]];
            dot3(&d, &d)
        })
        .collect();
    Ok(ManufacturedRun {
        n,
        h: l.h,
        max_error: errs.iter().cloned().fold(0.0, f64::max).sqrt(),
        rms_error: (pairwise_sum(&errs) / errs.len() as f64).sqrt(),
        iterations: out.iterations,
    })
}

/// `log(e₁/e₂)/log(h₁/h₂)` between consecutive runs, on the max error.
pub fn observed_orders(runs: &[ManufacturedRun]) -> Vec<f64> {
    runs.windows(2)
        .map(|w| (w[0].max_error / w[1].max_error).ln() / (w[0].h / w[1].h).ln())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub radii: Vec<f64>,
    /// `ρ⁻³ ∫_{Ω∩S_ρ} |u|²`
    pub m_rho: Vec<f64>,
    /// `ρ⁻³ ∫_{Ω∩B_ρ} |u|²`
    #[serde(rename = "M_rho")]
    pub big_m_rho: Vec<f64>,
    /// `max_{Ω∩B_ρ} |u|²` over voxel centres.
    pub phi_rho: Vec<f64>,
    /// `∫_{Ω∩B_ρ} |Du|²/|x|`
    pub psi_rho: Vec<f64>,
    /// Wiener partial sums at the same radii, once attached.
    pub wiener_partials: Vec<f64>,
}

impl DecayReport {
    /// Copies the partial sums of the profile levels whose radii match.
    pub fn attach_wiener(&mut self, profile: &WienerProfile) -> Result<()> {
        let mut out = Vec::with_capacity(self.radii.len());
        for &rho in &self.radii {
            let level = profile
                .levels
                .iter()
                .find(|l| (l.rho - rho).abs() <= 1e-12 * rho)
                .ok_or_else(|| LabError::InvalidInput(format!("no Wiener level at radius {rho}")))?;
            out.push(level.partial_sum);
        }
        self.wiener_partials = out;
        Ok(())
    }
}

/// `ρ ≤ |x| < 2ρ`.
fn in_shell(r: f64, rho: f64) -> bool {
    r >= rho && r < 2.0 * rho
}

/// Decay quantities at each radius; voxel centres decide membership and
/// the `|x|⁻¹` weight is floored at `h/2`.
pub fn modulus_profile(sol: &SolutionGrid, radii: &[f64]) -> DecayReport {
    let h = sol.h;
    let mut report = DecayReport {
        radii: radii.to_vec(),
        m_rho: Vec::new(),
        big_m_rho: Vec::new(),
        phi_rho: Vec::new(),
        psi_rho: Vec::new(),
        wiener_partials: Vec::new(),
    };
    for &rho in radii {
        let sq = |_: &Vec3, idx: usize| dot3(&sol.u[idx], &sol.u[idx]);
        report.m_rho.push(sol.sum_open(|r| in_shell(r, rho), sq) / rho.powi(3));
        report.big_m_rho.push(sol.sum_open(|r| r < rho, sq) / rho.powi(3));
        report.phi_rho.push(sol.max_open(|r| r < rho));
        report
            .psi_rho
            .push(sol.sum_open(|r| r < rho, |x, idx| sol.gradient_sq(idx) / norm3(x).max(0.5 * h)));
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum DecayFit {
    /// `log(φ_ρ + ψ_ρ) ≈ intercept − c2 · W(ρ)`; `residual` is the RMS misfit.
    Fitted { c2: f64, intercept: f64, residual: f64 },
    /// The Wiener partial sums vanish, so no decay is predicted.
    NoDecayExpected,
}

/// Least-squares fit of `log(φ_ρ + ψ_ρ)` against `−W(ρ)`.
pub fn decay_vs_wiener(report: &DecayReport) -> Result<DecayFit> {
    let n = report.wiener_partials.len();
    if n < MIN_FIT_LEVELS || report.phi_rho.len() != n {
        return Err(LabError::InsufficientLevels {
            needed: MIN_FIT_LEVELS,
            got: n.min(report.phi_rho.len()),
        });
    }
    if report.wiener_partials.iter().all(|w| w.abs() <= NO_DECAY_THRESHOLD) {
        return Ok(DecayFit::NoDecayExpected);
    }
    let xs: Vec<f64> = report.wiener_partials.iter().map(|w| -w).collect();
    let ys: Vec<f64> = report
        .phi_rho
        .iter()
        .zip(&report.psi_rho)
        .map(|(a, b)| (a + b).ln())
        .collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(LabError::InvalidInput(
            "decay fit needs φ_ρ + ψ_ρ > 0 at every level".into(),
        ));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Ok(DecayFit::NoDecayExpected);
    }
    let c2 = sxy / sxx;
    let intercept = my - c2 * mx;
    let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - c2 * x).powi(2)).sum();
    Ok(DecayFit::Fitted {
        c2,
        intercept,
        residual: (ss / nf).sqrt(),
    })
}

/// Cutoff `η(t)`: 1 for `t ≤ 4/3`, 0 for `t ≥ 5/3`, cubic smoothstep between.
pub fn cutoff_eta(t: f64) -> f64 {
    let s = ((t - 4.0 / 3.0) * 3.0).clamp(0.0, 1.0);
    1.0 - s * s * (3.0 - 2.0 * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaccioppoliCheck {
    pub rho: f64,
    /// `ρ⁻¹ ∫ |Du|²` over Ω where `η(|x|/ρ)` varies.
    pub energy: f64,
    /// `ρ⁻³ ∫_{Ω∩S_ρ} |u|²`
    pub mass: f64,
}

impl CaccioppoliCheck {
    /// The empirical constant `energy / mass`, if the mass is positive.
    pub fn ratio(&self) -> Option<f64> {
        (self.mass > 0.0).then(|| self.energy / self.mass)
    }
}

/// Local energy against local mass around the origin.
pub fn caccioppoli_check(sol: &SolutionGrid, rho: f64) -> CaccioppoliCheck {
    let transition = |r: f64| {
        let e = cutoff_eta(r / rho);
        e > 0.0 && e < 1.0
    };
    let energy = sol.sum_open(transition, |_, idx| sol.gradient_sq(idx)) / rho;
    let mass = sol.sum_open(|r| in_shell(r, rho), |_, idx| dot3(&sol.u[idx], &sol.u[idx])) / rho.powi(3);
    CaccioppoliCheck { rho, energy, mass }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum PoincareCheck {
    /// `lhs = m_ρ · cap(S̄_ρ∖Ω)`, `rhs = ∫_{Ω∩S_ρ} |Du|²`.
    Evaluated { rho: f64, lhs: f64, rhs: f64 },
    /// The capacity vanishes and the inequality says nothing.
    Skipped { rho: f64 },
}

impl PoincareCheck {
    pub fn ratio(&self) -> Option<f64> {
        match *self {
            PoincareCheck::Evaluated { lhs, rhs, .. } if rhs > 0.0 => Some(lhs / rhs),
            _ => None,
        }
    }
}

/// Scaled mass on `S_ρ` times the capacity of `S̄_ρ∖Ω`, against the
/// gradient energy on `S_ρ`.
pub fn poincare_capacity_check(sol: &SolutionGrid, rho: f64, cap: f64) -> PoincareCheck {
    if cap <= 1e-12 * rho {
        return PoincareCheck::Skipped { rho };
    }
    let mass = sol.sum_open(|r| in_shell(r, rho), |_, idx| dot3(&sol.u[idx], &sol.u[idx])) / rho.powi(3);
    let rhs = sol.sum_open(|r| in_shell(r, rho), |_, idx| sol.gradient_sq(idx));
    PoincareCheck::Evaluated {
        rho,
        lhs: mass * cap,
        rhs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeConfig {
    pub alpha: f64,
    /// Outer radius `R` of the dyadic levels.
    pub r: f64,
    /// Radii `R, R/2, …, R/2^levels`.
    pub levels: usize,
    pub tol: f64,
    pub wiener: WienerOptions,
    pub forcing: TestFieldSpec,
}

/// One bump of radius 0.2 around `(0.7, 0.7, 0.7)`, clear of `B₁`.
pub fn default_forcing() -> TestFieldSpec {
    let bump = Bump {
        center: [0.7, 0.7, 0.7],
        radius: 0.2,
        amplitude: [1.0, 0.5, -0.25],
        modulation: Modulation::default(),
    };
    TestFieldSpec {
        bumps: vec![bump],
        seed: 0,
        support_radius: 1.5,
        origin_cutoff: None,
    }
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            alpha: 0.5,
            r: 0.5,
            levels: 3,
            tol: PROBE_TOLERANCE,
            wiener: WienerOptions::default(),
            forcing: default_forcing(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub h: f64,
    pub unknowns: usize,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeOutcome {
    pub solve: SolveSummary,
    pub report: DecayReport,
    pub fit: DecayFit,
    pub wiener: WienerProfile,
    pub caccioppoli: Vec<CaccioppoliCheck>,
    pub poincare: Vec<PoincareCheck>,
}

/// Solve, profile and fit. With `shape` the Wiener profile samples the
/// analytic domain; otherwise it is taken from the voxels themselves.
pub fn run_probe(dom: &VoxelDomain, shape: Option<&dyn DomainShape>, cfg: &ProbeConfig) -> Result<ProbeOutcome> {
    let alpha = ElasticParameter::new(cfg.alpha)?;
    cfg.forcing.validate()?;
    let h = dom.h();
    let max_levels = (cfg.r / (4.0 * h)).log2().floor();
    if max_levels < 0.0 || cfg.levels as f64 > max_levels {
        return Err(LabError::ResolutionExceeded(format!(
            "{} levels below R = {} need h <= {}",
            cfg.levels,
            cfg.r,
            cfg.r / (4.0 * 2f64.powi(cfg.levels as i32))
        )));
    }
    if let Some(b) = cfg.forcing.bumps.iter().find(|b| 2.0 * b.radius < 4.0 * h) {
        return Err(LabError::ResolutionExceeded(format!(
            "forcing bump of radius {} spans fewer than 4 voxels",
            b.radius
        )));
    }
    let prob = DirichletProblem::new(dom, alpha, &cfg.forcing, cfg.r)?;
    let wiener = match shape {
        Some(s) => wiener_profile_shape(s, cfg.r, cfg.levels, &cfg.wiener)?,
        None => wiener_profile(dom, cfg.r, cfg.levels, &cfg.wiener)?,
    };
    let sol = solve_dirichlet(&prob, cfg.tol)?;
    let radii: Vec<f64> = wiener.levels.iter().map(|l| l.rho).collect();
    let mut report = modulus_profile(&sol, &radii);
    report.attach_wiener(&wiener)?;
    let fit = decay_vs_wiener(&report)?;
    let caccioppoli = radii.iter().map(|&rho| caccioppoli_check(&sol, rho)).collect();
    let poincare = wiener
        .levels
        .iter()
        .map(|l| poincare_capacity_check(&sol, l.rho, l.cap_annulus))
        .collect();
    Ok(ProbeOutcome {
        solve: SolveSummary {
            h,
            unknowns: LameSystem::new(dom.lattice, &dom.open, alpha)?.unknowns(),
            iterations: sol.iterations,
            residual: sol.residual,
        },
        report,
        fit,
        wiener,
        caccioppoli,
        poincare,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_domain(m: usize, h: f64) -> VoxelDomain {
        let l = Lattice::centered(m, h);
        VoxelDomain::new(l, vec![true; l.len()]).unwrap()
    }

    #[test]
    fn zero_forcing_gives_zero_solution() {
        let dom = box_domain(4, 0.25);
        let zero = TestFieldSpec {
            bumps: vec![],
            seed: 0,
            support_radius: 1.0,
            origin_cutoff: None,
        };
        let prob = DirichletProblem::new(&dom, ElasticParameter::new(0.5).unwrap(), &zero, 0.2).unwrap();
        let sol = solve_dirichlet(&prob, 1e-10).unwrap();
        assert!(sol.u.iter().all(|v| *v == [0.0; 3]));
    }

    #[test]
    fn operator_is_symmetric() {
        let l = Lattice::new([5, 4, 3], 0.2, [0.0; 3]).unwrap();
        let open: Vec<bool> = (0..l.len()).map(|i| i % 7 != 3).collect();
        let sys = LameSystem::new(l, &open, ElasticParameter::new(0.7).unwrap()).unwrap();
        let field = |s: f64| -> Vec<Vec3> {
            (0..l.len())
                .map(|i| [(i as f64 * s).sin(), (i as f64 * 0.3 * s).cos(), (i as f64 + s).sqrt()])
                .collect()
        };
        let (x, y) = (sys.pack(&field(1.3)), sys.pack(&field(0.4)));
        let (mut ax, mut ay) = (vec![0.0; x.len()], vec![0.0; y.len()]);
        sys.apply(&x, &mut ax);
        sys.apply(&y, &mut ay);
        let xay: f64 = x.iter().zip(&ay).map(|(a, b)| a * b).sum();
        let yax: f64 = y.iter().zip(&ax).map(|(a, b)| a * b).sum();
        assert!((xay - yax).abs() <= 1e-12 * xay.abs().max(1.0), "{xay} vs {yax}");
    }

    #[test]
    fn forcing_inside_double_ball_is_rejected() {
        let dom = box_domain(8, 0.125);
        let f = default_forcing();
        let alpha = ElasticParameter::new(0.5).unwrap();
        assert!(DirichletProblem::new(&dom, alpha, &f, 0.25).is_ok());
        assert!(DirichletProblem::new(&dom, alpha, &f, 0.6).is_err());
    }

    #[test]
    fn synthetic_fit_recovers_unit_slope() {
        let w = [0.0, 1.5, 3.0, 4.5, 6.0];
        let report = DecayReport {
            radii: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
            m_rho: vec![0.0; 5],
            big_m_rho: vec![0.0; 5],
            phi_rho: w.iter().map(|x: &f64| (-x).exp()).collect(),
            psi_rho: vec![0.0; 5],
            wiener_partials: w.to_vec(),
        };
        match decay_vs_wiener(&report).unwrap() {
            DecayFit::Fitted { c2, residual, .. } => {
                assert!((c2 - 1.0).abs() < 1e-6);
                assert!(residual < 1e-10);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cutoff_plateau_and_support() {
        assert_eq!(cutoff_eta(1.0), 1.0);
        assert_eq!(cutoff_eta(4.0 / 3.0), 1.0);
        assert_eq!(cutoff_eta(5.0 / 3.0), 0.0);
        assert!((cutoff_eta(1.5) - 0.5).abs() < 1e-12);
    }
}
