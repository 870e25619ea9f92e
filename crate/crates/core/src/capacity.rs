//! Discrete harmonic capacity of voxel sets and dyadic Wiener profiles.
//!
//! The energy `∫|Df|²` is discretized on a tensor-product grid whose core
//! nodes are the voxel centres of the set's lattice and whose padding grows
//! geometrically outwards. On the outer faces the exterior energy of a
//! monopole `f = C/|x − c|` is added exactly as the Robin term
//! `∮ β f² dS`, `β = (x − c)·n / |x − c|²`, so truncation costs far less
//! than a Dirichlet wall at the same distance. The grid depends only on the
//! lattice, never on the set, which makes discrete monotonicity and
//! subadditivity exact.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg::{conjugate_gradient, dot, norm3, CgOutcome, Vec3};
use crate::voxel::{DomainShape, Lattice, VoxelDomain, VoxelSet};

/// Default relative residual of the capacity solves.
pub const CAPACITY_TOLERANCE: f64 = 1e-8;
/// Ratio of consecutive padding gaps.
pub const PADDING_RATIO: f64 = 1.2;
/// Padding reaches this many core half-widths beyond the core.
pub const PADDING_EXTENT: f64 = 3.0;

/// Tensor-product grid: uniform core plus geometric padding.
#[derive(Debug, Clone)]
pub struct GradedGrid {
    pub axes: [Vec<f64>; 3],
    pub core_start: usize,
    pub core_dims: [usize; 3],
    widths: [Vec<f64>; 3],
    inv_gaps: [Vec<f64>; 3],
    shunt: Vec<f64>,
}

impl GradedGrid {
    pub fn for_lattice(lattice: &Lattice) -> Self {
        let h = lattice.h;
        let half = lattice.dims.iter().map(|&d| d as f64 * h / 2.0).fold(0.0, f64::max);
        // padding offsets shared by all axes and both sides
        let mut pads = Vec::new();
        let (mut gap, mut reach) = (h, 0.0);
        while reach < PADDING_EXTENT * half {
            gap *= PADDING_RATIO;
            reach += gap;
            pads.push(reach);
        }
        let np = pads.len();
        let mut center = [0.0; 3];
        let axes: [Vec<f64>; 3] = std::array::from_fn(|a| {
            let n = lattice.dims[a];
            let first = lattice.origin[a] + 0.5 * h;
            let last = lattice.origin[a] + (n as f64 - 0.5) * h;
            center[a] = lattice.origin[a] + n as f64 * h / 2.0;
            let mut x: Vec<f64> = pads.iter().rev().map(|p| first - p).collect();
            x.extend((0..n).map(|i| lattice.origin[a] + (i as f64 + 0.5) * h));
            x.extend(pads.iter().map(|p| last + p));
            x
        });
        let inv_gaps: [Vec<f64>; 3] =
            std::array::from_fn(|a| axes[a].windows(2).map(|w| 1.0 / (w[1] - w[0])).collect());
        let widths: [Vec<f64>; 3] = std::array::from_fn(|a| {
            let x = &axes[a];
            let n = x.len();
            (0..n)
                .map(|i| {
                    let lo = if i == 0 { x[0] } else { 0.5 * (x[i - 1] + x[i]) };
                    let hi = if i + 1 == n { x[n - 1] } else { 0.5 * (x[i] + x[i + 1]) };
                    hi - lo
                })
                .collect()
        });
        let mut grid = GradedGrid {
            axes,
            core_start: np,
            core_dims: lattice.dims,
            widths,
            inv_gaps,
            shunt: Vec::new(),
        };
        grid.shunt = grid.robin_shunt(&center);
        grid
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()]
    }

    pub fn len(&self) -> usize {
        let d = self.dims();
        d[0] * d[1] * d[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let d = self.dims();
        i + d[0] * (j + d[1] * k)
    }

    /// Node index of lattice voxel `(i, j, k)`.
    pub fn core_index(&self, i: usize, j: usize, k: usize) -> usize {
        self.index(i + self.core_start, j + self.core_start, k + self.core_start)
    }

    fn robin_shunt(&self, c: &Vec3) -> Vec<f64> {
        let [nx, ny, nz] = self.dims();
        let mut s = vec![0.0; self.len()];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let ijk = [i, j, k];
                    let x = [self.axes[0][i], self.axes[1][j], self.axes[2][k]];
                    let d = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
                    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                    let mut total = 0.0;
                    for a in 0..3 {
                        let n = self.axes[a].len();
                        let (b, e) = ((a + 1) % 3, (a + 2) % 3);
                        let area = self.widths[b][ijk[b]] * self.widths[e][ijk[e]];
                        if ijk[a] == 0 {
                            total += area * (-d[a]) / r2;
                        }
                        if ijk[a] == n - 1 {
                            total += area * d[a] / r2;
                        }
                    }
                    s[self.index(i, j, k)] = total;
                }
            }
        }
        s
    }

    /// `y = A f` for the energy `fᵀ A f = Σ_edges c_e (Δf)² + Σ β A f²`.
    pub fn apply(&self, f: &[f64], y: &mut [f64]) {
        let [nx, ny, nz] = self.dims();
        let plane = nx * ny;
        y.par_chunks_mut(plane).enumerate().for_each(|(k, out)| {
            for j in 0..ny {
                for i in 0..nx {
                    let p = i + nx * j;
                    let idx = p + plane * k;
                    let v = f[idx];
                    let mut acc = self.shunt[idx] * v;
                    let ayz = self.widths[1][j] * self.widths[2][k];
                    if i > 0 {
                        acc += ayz * self.inv_gaps[0][i - 1] * (v - f[idx - 1]);
                    }
                    if i + 1 < nx {
                        acc += ayz * self.inv_gaps[0][i] * (v - f[idx + 1]);
                    }
                    let axz = self.widths[0][i] * self.widths[2][k];
                    if j > 0 {
                        acc += axz * self.inv_gaps[1][j - 1] * (v - f[idx - nx]);
                    }
                    if j + 1 < ny {
                        acc += axz * self.inv_gaps[1][j] * (v - f[idx + nx]);
                    }
                    let axy = self.widths[0][i] * self.widths[1][j];
                    if k > 0 {
                        acc += axy * self.inv_gaps[2][k - 1] * (v - f[idx - plane]);
                    }
                    if k + 1 < nz {
                        acc += axy * self.inv_gaps[2][k] * (v - f[idx + plane]);
                    }
                    out[p] = acc;
                }
            }
        });
    }

    /// Diagonal of `A`.
    pub fn diagonal(&self) -> Vec<f64> {
        let [nx, ny, nz] = self.dims();
        let mut d = self.shunt.clone();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let mut s = 0.0;
                    let ayz = self.widths[1][j] * self.widths[2][k];
                    let axz = self.widths[0][i] * self.widths[2][k];
                    let axy = self.widths[0][i] * self.widths[1][j];
                    if i > 0 {
                        s += ayz * self.inv_gaps[0][i - 1];
                    }
                    if i + 1 < nx {
                        s += ayz * self.inv_gaps[0][i];
                    }
                    if j > 0 {
                        s += axz * self.inv_gaps[1][j - 1];
                    }
                    if j + 1 < ny {
                        s += axz * self.inv_gaps[1][j];
                    }
                    if k > 0 {
                        s += axy * self.inv_gaps[2][k - 1];
                    }
                    if k + 1 < nz {
                        s += axy * self.inv_gaps[2][k];
                    }
                    d[self.index(i, j, k)] += s;
                }
            }
        }
        d
    }

    /// `fᵀ A f`.
    pub fn energy(&self, f: &[f64]) -> f64 {
        let mut af = vec![0.0; f.len()];
        self.apply(f, &mut af);
        dot(f, &af)
    }

    /// Marks the nodes of the set's voxels.
    pub fn fixed_nodes(&self, k: &VoxelSet) -> Vec<bool> {
        let mut fixed = vec![false; self.len()];
        for (idx, &on) in k.mask.iter().enumerate() {
            if on {
                let [i, j, l] = k.lattice.coords(idx);
                fixed[self.core_index(i, j, l)] = true;
            }
        }
        fixed
    }

    pub fn iteration_cap(&self) -> usize {
        10 * (self.len() as f64).cbrt().ceil() as usize * 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityEstimate {
    pub value: f64,
    /// `round(−log₂ h)`.
    pub grid_level: i32,
    /// Relative residual reached by the solver.
    pub residual: f64,
    pub iterations: usize,
    pub nodes: usize,
}

fn grid_level(h: f64) -> i32 {
    (-h.log2()).round() as i32
}

/// Minimizes the discrete energy over grid functions equal to 1 on `K`.
pub fn capacity(k: &VoxelSet, tol: f64) -> Result<CapacityEstimate> {
    let grid = GradedGrid::for_lattice(&k.lattice);
    capacity_on(&grid, k, tol)
}

/// As [`capacity`] on a prebuilt grid for `k`'s lattice.
pub fn capacity_on(grid: &GradedGrid, k: &VoxelSet, tol: f64) -> Result<CapacityEstimate> {
    let level = grid_level(k.lattice.h);
    if k.is_empty() {
        return Ok(CapacityEstimate {
            value: 0.0,
            grid_level: level,
            residual: 0.0,
            iterations: 0,
            nodes: grid.len(),
        });
    }
    let fixed = grid.fixed_nodes(k);
    let (f, out) = solve_fixed(grid, &fixed, tol)?;
    Ok(CapacityEstimate {
        value: grid.energy(&f),
        grid_level: level,
        residual: out.relative_residual,
        iterations: out.iterations,
        nodes: grid.len(),
    })
}

/// Harmonic extension of the indicator of `fixed`.
fn solve_fixed(grid: &GradedGrid, fixed: &[bool], tol: f64) -> Result<(Vec<f64>, CgOutcome)> {
    let n = grid.len();
    let f0: Vec<f64> = fixed.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut af0 = vec![0.0; n];
    grid.apply(&f0, &mut af0);
    let diag = grid.diagonal();
    let inv: Vec<f64> = diag
        .iter()
        .zip(fixed)
        .map(|(d, &b)| if b { 0.0 } else { 1.0 / d })
        .collect();
    let b: Vec<f64> = af0
        .iter()
        .zip(fixed)
        .map(|(a, &fx)| if fx { 0.0 } else { -a })
        .collect();
    let mut e = vec![0.0; n];
    let out = conjugate_gradient(|x, y| grid.apply(x, y), &inv, &b, &mut e, tol, grid.iteration_cap())?;
    let f = f0.iter().zip(&e).map(|(a, b)| a + b).collect();
    Ok((f, out))
}

/// Minimizes the same energy under `f ≥ 1` on `K` by projected red-black
/// SOR started from the indicator of `K`.
pub fn capacity_inequality(k: &VoxelSet, tol: f64) -> Result<CapacityEstimate> {
    let grid = GradedGrid::for_lattice(&k.lattice);
    let level = grid_level(k.lattice.h);
    if k.is_empty() {
        return Ok(CapacityEstimate {
            value: 0.0,
            grid_level: level,
            residual: 0.0,
            iterations: 0,
            nodes: grid.len(),
        });
    }
    let fixed = grid.fixed_nodes(k);
    let [nx, ny, nz] = grid.dims();
    let diag = grid.diagonal();
    let mut f: Vec<f64> = fixed.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let omega = 2.0 / (1.0 + std::f64::consts::PI / nx.max(ny).max(nz) as f64);
    let cap = 200 * grid.iteration_cap();
    let plane = nx * ny;
    for sweep in 0..cap {
        let mut change: f64 = 0.0;
        for color in 0..2 {
            for kk in 0..nz {
                for j in 0..ny {
                    let start = (color + j + kk) % 2;
                    for i in (start..nx).step_by(2) {
                        let idx = i + nx * j + plane * kk;
                        // off-diagonal part of (A f)_idx
                        let mut off = 0.0;
                        let ayz = grid.widths[1][j] * grid.widths[2][kk];
                        let axz = grid.widths[0][i] * grid.widths[2][kk];
                        let axy = grid.widths[0][i] * grid.widths[1][j];
                        if i > 0 {
                            off += ayz * grid.inv_gaps[0][i - 1] * f[idx - 1];
                        }
                        if i + 1 < nx {
                            off += ayz * grid.inv_gaps[0][i] * f[idx + 1];
                        }
                        if j > 0 {
                            off += axz * grid.inv_gaps[1][j - 1] * f[idx - nx];
                        }
                        if j + 1 < ny {
                            off += axz * grid.inv_gaps[1][j] * f[idx + nx];
                        }
                        if kk > 0 {
                            off += axy * grid.inv_gaps[2][kk - 1] * f[idx - plane];
                        }
                        if kk + 1 < nz {
                            off += axy * grid.inv_gaps[2][kk] * f[idx + plane];
                        }
                        let gs = off / diag[idx];
                        let mut next = f[idx] + omega * (gs - f[idx]);
                        if fixed[idx] {
                            next = next.max(1.0);
                        }
                        change = change.max((next - f[idx]).abs());
                        f[idx] = next;
                    }
                }
            }
        }
        if change <= tol {
            return Ok(CapacityEstimate {
                value: grid.energy(&f),
                grid_level: level,
                residual: change,
                iterations: sweep + 1,
                nodes: grid.len(),
            });
        }
    }
    Err(LabError::NoConvergence {
        residual: f64::NAN,
        iterations: cap,
    })
}

/// Capacities with the constraint `f = 1` and with `f ≥ 1` on `K`.
pub fn capacity_equivalence_check(k: &VoxelSet, tol: f64) -> Result<(CapacityEstimate, CapacityEstimate)> {
    Ok((capacity(k, tol)?, capacity_inequality(k, tol)?))
}

/// The voxelized closed ball `B̄_ρ` (voxel centres within ρ) on a lattice
/// symmetric about the origin with one voxel of margin.
pub fn voxel_ball(rho: f64, h: f64) -> Result<VoxelSet> {
    if !(rho > 0.0 && h > 0.0) {
        return Err(LabError::InvalidInput(format!(
            "ball needs rho > 0 and h > 0, got {rho}, {h}"
        )));
    }
    let m = (rho / h).ceil() as usize + 1;
    Ok(VoxelSet::from_predicate(Lattice::centered(m, h), |x| norm3(x) <= rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WienerLevel {
    pub level: usize,
    pub rho: f64,
    /// Voxel size used at this level.
    pub h: f64,
    /// `cap(B̄_ρ ∖ Ω)`
    pub cap_ball: f64,
    /// `cap(S̄_ρ ∖ Ω)`
    pub cap_annulus: f64,
    /// `cap(S̄_ρ ∖ Ω)/ρ`
    pub gamma: f64,
    /// `Σ_{i ≤ level} cap(B̄_{ρ_i} ∖ Ω)/ρ_i`
    pub partial_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WienerProfile {
    pub levels: Vec<WienerLevel>,
    /// `max_j γ_j`.
    pub a_grid: f64,
    pub voxels_per_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WienerOptions {
    /// Target resolution: ρ_j / h_j.
    pub voxels_per_radius: usize,
    pub tol: f64,
}

impl Default for WienerOptions {
    fn default() -> Self {
        WienerOptions {
            voxels_per_radius: 8,
            tol: CAPACITY_TOLERANCE,
        }
    }
}

/// The two sets whose capacities one level needs.
struct LevelSets {
    rho: f64,
    h: f64,
    ball: VoxelSet,
    annulus: VoxelSet,
}

/// Capacities of many sets, solving each distinct mask once on the unit
/// lattice and rescaling by `h` (capacity is homogeneous of degree 1).
fn capacities_dedup(sets: &[&VoxelSet], tol: f64) -> Result<Vec<f64>> {
    type Key = ([usize; 3], Vec<bool>);
    let mut unique: Vec<Key> = Vec::new();
    let mut lookup: HashMap<Key, usize> = HashMap::new();
    let mut slot = Vec::with_capacity(sets.len());
    for s in sets {
        let key = (s.lattice.dims, s.mask.clone());
        let id = *lookup.entry(key.clone()).or_insert_with(|| {
            unique.push(key);
            unique.len() - 1
        });
        slot.push(id);
    }
    let unit: Vec<f64> = unique
        .par_iter()
        .map(|(dims, mask)| {
            let lattice = Lattice {
                dims: *dims,
                h: 1.0,
                origin: dims.map(|d| -(d as f64) / 2.0),
            };
            let set = VoxelSet {
                lattice,
                mask: mask.clone(),
            };
            capacity(&set, tol).map(|c| c.value)
        })
        .collect::<Result<_>>()?;
    Ok(sets.iter().zip(slot).map(|(s, id)| unit[id] * s.lattice.h).collect())
}

fn assemble(sets: Vec<LevelSets>, tol: f64, voxels_per_radius: f64) -> Result<WienerProfile> {
    let mut refs: Vec<&VoxelSet> = Vec::with_capacity(2 * sets.len());
    for s in &sets {
        refs.push(&s.ball);
        refs.push(&s.annulus);
    }
    let caps = capacities_dedup(&refs, tol)?;
    let mut partial = 0.0;
    let mut levels = Vec::with_capacity(sets.len());
    for (j, s) in sets.iter().enumerate() {
        let (cap_ball, cap_annulus) = (caps[2 * j], caps[2 * j + 1]);
        partial += cap_ball / s.rho;
        levels.push(WienerLevel {
            level: j,
            rho: s.rho,
            h: s.h,
            cap_ball,
            cap_annulus,
            gamma: cap_annulus / s.rho,
            partial_sum: partial,
        });
    }
    let a_grid = levels.iter().map(|l| l.gamma).fold(0.0, f64::max);
    Ok(WienerProfile {
        levels,
        a_grid,
        voxels_per_radius,
    })
}

fn level_sets(domain_ball: &VoxelDomain, domain_annulus: &VoxelDomain, rho: f64) -> LevelSets {
    LevelSets {
        rho,
        h: domain_ball.h(),
        ball: domain_ball.complement_in_ball(rho),
        annulus: domain_annulus.complement_in_annulus(rho),
    }
}

/// Dyadic profile of an analytic domain: level `j` samples the shape at
/// `h_j = ρ_j / voxels_per_radius` on lattices symmetric about the origin.
pub fn wiener_profile_shape(
    shape: &dyn DomainShape,
    r: f64,
    levels: usize,
    opts: &WienerOptions,
) -> Result<WienerProfile> {
    if !(r > 0.0) || opts.voxels_per_radius < 2 {
        return Err(LabError::InvalidInput(
            "wiener profile needs R > 0 and at least 2 voxels per radius".into(),
        ));
    }
    let n = opts.voxels_per_radius;
    let sets = (0..=levels)
        .map(|j| {
            let rho = r / 2f64.powi(j as i32);
            let h = rho / n as f64;
            let ball = VoxelDomain::from_shape(shape, Lattice::centered(n + 1, h));
            let annulus = VoxelDomain::from_shape(shape, Lattice::centered(2 * n + 1, h));
            level_sets(&ball, &annulus, rho)
        })
        .collect();
    assemble(sets, opts.tol, n as f64)
}

/// Dyadic profile of a voxel domain. Level `j` uses a window of the native
/// lattice around the origin, merged in 2ᵐ blocks while `ρ_j/h` stays at
/// or above the target resolution.
pub fn wiener_profile(dom: &VoxelDomain, r: f64, levels: usize, opts: &WienerOptions) -> Result<WienerProfile> {
    let h = dom.h();
    if !(r > 0.0) {
        return Err(LabError::InvalidInput(format!("R must be positive, got {r}")));
    }
    let max_levels = (r / (4.0 * h)).log2().floor();
    if max_levels < 0.0 || levels as f64 > max_levels {
        return Err(LabError::ResolutionExceeded(format!(
            "{levels} levels need R/(4h) >= 2^{levels}; R = {r}, h = {h} allows {}",
            max_levels.max(-1.0)
        )));
    }
    let target = opts.voxels_per_radius as f64;
    let mut sets = Vec::with_capacity(levels + 1);
    for j in 0..=levels {
        let rho = r / 2f64.powi(j as i32);
        let mut factor = 1;
        while rho / (2.0 * factor as f64 * h) >= target {
            factor *= 2;
        }
        // windows just cover the sets; the capacity grid adds its own padding
        let round_up = |m: usize| m.div_ceil(factor) * factor;
        let ball = dom.window(round_up((rho / h).ceil() as usize))?.coarsen(factor)?;
        let annulus = dom.window(round_up((2.0 * rho / h).ceil() as usize))?.coarsen(factor)?;
        sets.push(level_sets(&ball, &annulus, rho));
    }
    assemble(sets, opts.tol, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// `1/(4π G(0))` for the simple-cubic lattice Green's function,
    /// `G(0) = 0.252731…` (Watson's integral).
    const POINT_CAPACITY: f64 = 1.0 / 0.252_731_009_858_663;

    #[test]
    fn empty_set_has_zero_capacity() {
        let k = VoxelSet::empty(Lattice::centered(4, 0.25));
        assert_eq!(capacity(&k, 1e-8).unwrap().value, 0.0);
        let (a, b) = capacity_equivalence_check(&k, 1e-8).unwrap();
        assert_eq!((a.value, b.value), (0.0, 0.0));
    }

    #[test]
    fn single_voxel_matches_lattice_green_function() {
        let lattice = Lattice::centered(4, 0.1);
        let mut mask = vec![false; lattice.len()];
        mask[lattice.index(4, 4, 4)] = true;
        let k = VoxelSet::new(lattice, mask).unwrap();
        let (eq, ineq) = capacity_equivalence_check(&k, 1e-10).unwrap();
        let expected = 0.1 * POINT_CAPACITY;
        assert!(
            (eq.value - expected).abs() < 0.02 * expected,
            "{} vs {expected}",
            eq.value
        );
        assert!(
            (eq.value - ineq.value).abs() < 1e-6 * eq.value,
            "{} vs {}",
            eq.value,
            ineq.value
        );
    }

    #[test]
    fn padding_reaches_beyond_three_half_widths() {
        let grid = GradedGrid::for_lattice(&Lattice::centered(6, 0.25));
        let dims = grid.dims();
        assert!(dims.iter().all(|&d| d > 12));
        assert!(grid.axes[0][0] < -3.5 * 1.5);
    }

    #[test]
    fn ball_capacity_coarse() {
        let k = voxel_ball(0.5, 1.0 / 16.0).unwrap();
        let c = capacity(&k, 1e-8).unwrap();
        assert!(c.residual <= 1e-8);
        assert!((c.value - 2.0 * PI).abs() < 0.05 * 2.0 * PI, "{}", c.value);
        assert_eq!(c.grid_level, 4);
    }

    #[test]
    fn nested_sets_are_monotone() {
        let lattice = Lattice::centered(6, 0.1);
        let small = VoxelSet::from_predicate(lattice, |x| norm3(x) <= 0.25);
        let large = VoxelSet::from_predicate(lattice, |x| norm3(x) <= 0.4);
        let a = capacity(&small, 1e-9).unwrap().value;
        let b = capacity(&large, 1e-9).unwrap().value;
        assert!(a <= b + 1e-9);
    }
}
