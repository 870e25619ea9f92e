//! Uniform voxel lattices, voxelized open sets and compact voxel sets, and
//! the `voxdom v1` text format.
//!
//! A lattice covers `[origin, origin + dims·h]`; voxel `(i, j, k)` has its
//! centre at `origin + (i + ½, j + ½, k + ½)·h`. Linear indices run
//! x-fastest.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg::{norm3, Vec3};

/// An open set described by a membership test.
pub trait DomainShape: Sync + Send {
    /// True when `x` lies in the open set.
    fn contains(&self, x: &Vec3) -> bool;
    fn name(&self) -> &str;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lattice {
    pub dims: [usize; 3],
    pub h: f64,
    pub origin: Vec3,
}

impl Lattice {
    pub fn new(dims: [usize; 3], h: f64, origin: Vec3) -> Result<Self> {
        if dims.contains(&0) {
            return Err(LabError::InvalidInput("lattice dimensions must be positive".into()));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(LabError::InvalidInput(format!("spacing must be positive, got {h}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(LabError::InvalidInput("origin must be finite".into()));
        }
        Ok(Lattice { dims, h, origin })
    }

    /// `2m` voxels per axis of size `h`, symmetric about the origin, so that
    /// the origin is a lattice vertex.
    pub fn centered(m: usize, h: f64) -> Self {
        let e = -(m as f64) * h;
        Lattice {
            dims: [2 * m; 3],
            h,
            origin: [e, e, e],
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            self.origin[0] + (i as f64 + 0.5) * self.h,
            self.origin[1] + (j as f64 + 0.5) * self.h,
            self.origin[2] + (k as f64 + 0.5) * self.h,
        ]
    }

    pub fn center_of(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        self.center(i, j, k)
    }

    /// Lattice-vertex coordinates of the point `x`, if it is a vertex.
    pub fn vertex_of(&self, x: &Vec3) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let t = (x[a] - self.origin[a]) / self.h;
            let r = t.round();
            if (t - r).abs() > 1e-9 || r < 0.0 || r > self.dims[a] as f64 {
                return None;
            }
            out[a] = r as usize;
        }
        Some(out)
    }
}

/// A compact voxel set (union of closed voxels) on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSet {
    pub lattice: Lattice,
    pub mask: Vec<bool>,
}

impl VoxelSet {
    pub fn new(lattice: Lattice, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != lattice.len() {
            return Err(LabError::InvalidInput(format!(
                "mask has {} entries, lattice has {}",
                mask.len(),
                lattice.len()
            )));
        }
        Ok(VoxelSet { lattice, mask })
    }

    pub fn empty(lattice: Lattice) -> Self {
        VoxelSet {
            mask: vec![false; lattice.len()],
            lattice,
        }
    }

    /// Voxels whose centres satisfy `pred`.
    pub fn from_predicate<P: Fn(&Vec3) -> bool>(lattice: Lattice, pred: P) -> Self {
        let mask = (0..lattice.len()).map(|idx| pred(&lattice.center_of(idx))).collect();
        VoxelSet { lattice, mask }
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn union(&self, other: &VoxelSet) -> Result<VoxelSet> {
        self.same_lattice(other)?;
        Ok(VoxelSet {
            lattice: self.lattice,
            mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect(),
        })
    }

    pub fn intersection(&self, other: &VoxelSet) -> Result<VoxelSet> {
        self.same_lattice(other)?;
        Ok(VoxelSet {
            lattice: self.lattice,
            mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect(),
        })
    }

    pub fn is_subset_of(&self, other: &VoxelSet) -> bool {
        self.lattice == other.lattice && self.mask.iter().zip(&other.mask).all(|(a, b)| !*a || *b)
    }

    fn same_lattice(&self, other: &VoxelSet) -> Result<()> {
        if self.lattice == other.lattice {
            Ok(())
        } else {
            Err(LabError::InvalidInput("voxel sets live on different lattices".into()))
        }
    }
}

/// A voxelized open set; `open[idx]` is true for voxels inside Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelDomain {
    pub lattice: Lattice,
    pub open: Vec<bool>,
}

/// Voxels whose centres lie within this many spacings of the origin form
/// the neighbourhood checked by [`VoxelDomain::origin_on_boundary`].
const ORIGIN_NEIGHBOURHOOD: f64 = 4.0;

impl VoxelDomain {
    pub fn new(lattice: Lattice, open: Vec<bool>) -> Result<Self> {
        if open.len() != lattice.len() {
            return Err(LabError::InvalidInput(format!(
                "mask has {} entries, lattice has {}",
                open.len(),
                lattice.len()
            )));
        }
        Ok(VoxelDomain { lattice, open })
    }

    pub fn from_shape(shape: &dyn DomainShape, lattice: Lattice) -> Self {
        let open = (0..lattice.len())
            .map(|idx| shape.contains(&lattice.center_of(idx)))
            .collect();
        VoxelDomain { lattice, open }
    }

    pub fn h(&self) -> f64 {
        self.lattice.h
    }

    /// True when voxels near the origin are found both inside and outside Ω.
    pub fn origin_on_boundary(&self) -> bool {
        let (mut inside, mut outside) = (false, false);
        let reach = ORIGIN_NEIGHBOURHOOD * self.lattice.h;
        for (idx, &open) in self.open.iter().enumerate() {
            if norm3(&self.lattice.center_of(idx)) <= reach {
                if open {
                    inside = true;
                } else {
                    outside = true;
                }
            }
        }
        inside && outside
    }

    /// Voxels outside Ω whose centres satisfy `pred`.
    pub fn complement_where<P: Fn(&Vec3) -> bool>(&self, pred: P) -> VoxelSet {
        let mask = self
            .open
            .iter()
            .enumerate()
            .map(|(idx, &open)| !open && pred(&self.lattice.center_of(idx)))
            .collect();
        VoxelSet {
            lattice: self.lattice,
            mask,
        }
    }

    /// `B̄_ρ ∖ Ω`.
    pub fn complement_in_ball(&self, rho: f64) -> VoxelSet {
        self.complement_where(|x| norm3(x) <= rho)
    }

    /// `S̄_ρ ∖ Ω` with `S̄_ρ = {ρ ≤ |x| ≤ 2ρ}`.
    pub fn complement_in_annulus(&self, rho: f64) -> VoxelSet {
        self.complement_where(|x| {
            let r = norm3(x);
            r >= rho && r <= 2.0 * rho
        })
    }

    /// The `2m`-voxel cube around the lattice vertex at the origin.
    pub fn window(&self, m: usize) -> Result<VoxelDomain> {
        let v = self
            .lattice
            .vertex_of(&[0.0; 3])
            .ok_or_else(|| LabError::InvalidInput("the origin is not a lattice vertex".into()))?;
        for a in 0..3 {
            if v[a] < m || v[a] + m > self.lattice.dims[a] {
                return Err(LabError::ResolutionExceeded(format!(
                    "a window of {m} voxels around the origin leaves the domain"
                )));
            }
        }
        let lattice = Lattice::centered(m, self.lattice.h);
        let mut open = Vec::with_capacity(lattice.len());
        for k in 0..2 * m {
            for j in 0..2 * m {
                for i in 0..2 * m {
                    open.push(self.open[self.lattice.index(v[0] - m + i, v[1] - m + j, v[2] - m + k)]);
                }
            }
        }
        Ok(VoxelDomain { lattice, open })
    }

    /// Merges `factor³` blocks; a coarse voxel lies outside Ω when at least
    /// half of its fine voxels do.
    pub fn coarsen(&self, factor: usize) -> Result<VoxelDomain> {
        if factor == 0 || self.lattice.dims.iter().any(|d| d % factor != 0) {
            return Err(LabError::InvalidInput(format!("cannot coarsen by {factor}")));
        }
        let dims = self.lattice.dims.map(|d| d / factor);
        let lattice = Lattice {
            dims,
            h: self.lattice.h * factor as f64,
            origin: self.lattice.origin,
        };
        let block = factor * factor * factor;
        let mut open = Vec::with_capacity(lattice.len());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let mut outside = 0;
                    for c in 0..factor {
                        for b in 0..factor {
                            for a in 0..factor {
                                let idx = self.lattice.index(i * factor + a, j * factor + b, k * factor + c);
                                if !self.open[idx] {
                                    outside += 1;
                                }
                            }
                        }
                    }
                    open.push(2 * outside < block);
                }
            }
        }
        Ok(VoxelDomain { lattice, open })
    }

    pub fn to_voxdom(&self) -> String {
        let l = &self.lattice;
        let mut s = String::with_capacity(l.len() + l.dims[1] * l.dims[2] + 128);
        s.push_str("voxdom v1\n");
        let _ = writeln!(s, "dims {} {} {}", l.dims[0], l.dims[1], l.dims[2]);
        let _ = writeln!(s, "spacing {}", l.h);
        let _ = writeln!(s, "origin {} {} {}", l.origin[0], l.origin[1], l.origin[2]);
        for row in self.open.chunks(l.dims[0]) {
            s.extend(row.iter().map(|&b| if b { '1' } else { '0' }));
            s.push('\n');
        }
        s
    }

    pub fn parse_voxdom(text: &str) -> Result<VoxelDomain> {
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l.trim_end_matches('\r')));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| LabError::Parse {
                line: 0,
                msg: format!("unexpected end of file, expected {what}"),
            })
        };
        let (n, magic) = next("header")?;
        if magic.trim() != "voxdom v1" {
            return Err(LabError::Parse {
                line: n,
                msg: format!("expected 'voxdom v1', found '{magic}'"),
            });
        }
        let header = |(line, text): (usize, &str), key: &str, count: usize| {
            keyed_numbers::<f64>((line, text), key, count).map(|v| (line, v))
        };
        let (dims_line, dims) = {
            let entry = next("dims")?;
            (entry.0, keyed_numbers::<usize>(entry, "dims", 3)?)
        };
        let (spacing_line, spacing) = header(next("spacing")?, "spacing", 1)?;
        let (origin_line, origin) = header(next("origin")?, "origin", 3)?;
        let bad = |line: usize, msg: &str| LabError::Parse { line, msg: msg.into() };
        if dims.contains(&0) {
            return Err(bad(dims_line, "dimensions must be positive"));
        }
        if !(spacing[0] > 0.0 && spacing[0].is_finite()) {
            return Err(bad(spacing_line, "spacing must be positive"));
        }
        let lattice = Lattice::new(
            [dims[0], dims[1], dims[2]],
            spacing[0],
            [origin[0], origin[1], origin[2]],
        )
        .map_err(|e| bad(origin_line, &e.to_string()))?;
        let rows = dims[1] * dims[2];
        let mut open = Vec::with_capacity(lattice.len());
        for _ in 0..rows {
            let (n, row) = next("mask row")?;
            if row.len() != dims[0] {
                return Err(LabError::Parse {
                    line: n,
                    msg: format!("expected {} mask characters, found {}", dims[0], row.len()),
                });
            }
            for c in row.chars() {
                match c {
                    '0' => open.push(false),
                    '1' => open.push(true),
                    other => {
                        return Err(LabError::Parse {
                            line: n,
                            msg: format!("invalid mask character '{other}'"),
                        })
                    }
                }
            }
        }
        for (n, rest) in lines {
            if !rest.trim().is_empty() {
                return Err(LabError::Parse {
                    line: n,
                    msg: "trailing data after the mask".into(),
                });
            }
        }
        Ok(VoxelDomain { lattice, open })
    }

    pub fn read(path: &Path) -> Result<VoxelDomain> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_voxdom(&text)
    }
}

fn keyed_numbers<T: std::str::FromStr>((line, text): (usize, &str), key: &str, count: usize) -> Result<Vec<T>> {
    let mut parts = text.split_whitespace();
    if parts.next() != Some(key) {
        return Err(LabError::Parse {
            line,
            msg: format!("expected '{key}' line"),
        });
    }
    let values: Vec<T> = parts
        .map(|p| {
            p.parse::<T>().map_err(|_| LabError::Parse {
                line,
                msg: format!("cannot parse '{p}'"),
            })
        })
        .collect::<Result<_>>()?;
    if values.len() != count {
        return Err(LabError::Parse {
            line,
            msg: format!("'{key}' needs {count} values, found {}", values.len()),
        });
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct HalfSpace;
    impl DomainShape for HalfSpace {
        fn contains(&self, x: &Vec3) -> bool {
            x[0] > 0.0
        }
        fn name(&self) -> &str {
            "half-space"
        }
    }

    #[test]
    fn lattice_indexing_round_trips() {
        let l = Lattice::new([3, 4, 5], 0.5, [-1.0, 0.0, 2.0]).unwrap();
        for idx in 0..l.len() {
            let [i, j, k] = l.coords(idx);
            assert_eq!(l.index(i, j, k), idx);
        }
        assert_eq!(l.center(0, 0, 0), [-0.75, 0.25, 2.25]);
        assert_eq!(Lattice::centered(4, 0.25).vertex_of(&[0.0; 3]), Some([4, 4, 4]));
        assert_eq!(l.vertex_of(&[0.1, 0.0, 2.0]), None);
    }

    #[test]
    fn voxdom_round_trip() {
        let d = VoxelDomain::from_shape(&HalfSpace, Lattice::centered(3, 1.0 / 3.0));
        let text = d.to_voxdom();
        assert!(text.starts_with("voxdom v1\ndims 6 6 6\nspacing 0.3333333333333333\norigin -1 -1 -1\n"));
        let back = VoxelDomain::parse_voxdom(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_voxdom(), text);
        assert!(d.origin_on_boundary());
    }

    #[test]
    fn voxdom_errors() {
        assert!(matches!(
            VoxelDomain::parse_voxdom("voxdom v2\n"),
            Err(LabError::Parse { line: 1, .. })
        ));
        let bad = "voxdom v1\ndims 2 1 1\nspacing 1\norigin 0 0 0\n0x\n";
        assert!(matches!(
            VoxelDomain::parse_voxdom(bad),
            Err(LabError::Parse { line: 5, .. })
        ));
        let short = "voxdom v1\ndims 2 2 1\nspacing 1\norigin 0 0 0\n01\n";
        assert!(VoxelDomain::parse_voxdom(short).is_err());
        let neg = "voxdom v1\ndims 1 1 1\nspacing -1\norigin 0 0 0\n0\n";
        assert!(VoxelDomain::parse_voxdom(neg).is_err());
        let trailing = "voxdom v1\ndims 1 1 1\nspacing 1\norigin 0 0 0\n0\n1\n";
        assert!(VoxelDomain::parse_voxdom(trailing).is_err());
    }

    #[test]
    fn window_and_coarsen() {
        let d = VoxelDomain::from_shape(&HalfSpace, Lattice::centered(8, 0.125));
        let w = d.window(4).unwrap();
        assert_eq!(w.lattice.dims, [8, 8, 8]);
        assert_eq!(w, VoxelDomain::from_shape(&HalfSpace, Lattice::centered(4, 0.125)));
        let c = w.coarsen(2).unwrap();
        assert_eq!(c, VoxelDomain::from_shape(&HalfSpace, Lattice::centered(2, 0.25)));
        assert!(d.window(9).is_err());
        assert!(w.coarsen(3).is_err());
    }

    #[test]
    fn complement_sets() {
        let d = VoxelDomain::from_shape(&HalfSpace, Lattice::centered(8, 0.125));
        let ball = d.complement_in_ball(0.5);
        let annulus = d.complement_in_annulus(0.25);
        assert!(ball.count() > 0 && annulus.count() > 0);
        assert!(annulus.intersection(&ball).unwrap().count() > 0);
        let small = d.complement_in_ball(0.25);
        assert!(small.is_subset_of(&ball));
        assert!(!ball.is_subset_of(&small));
        assert!(VoxelSet::empty(d.lattice).is_empty());
    }
}
