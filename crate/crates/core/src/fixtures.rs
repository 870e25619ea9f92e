//! Analytic test domains with the origin on their boundary.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::Serialize;

use crate::error::LabError;
use crate::linalg::{dot3, norm3, Vec3};
use crate::voxel::{DomainShape, Lattice, VoxelDomain};

/// `Ω = {x₁ > 0}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct HalfSpaceComplement;

impl DomainShape for HalfSpaceComplement {
    fn contains(&self, x: &Vec3) -> bool {
        x[0] > 0.0
    }

    fn name(&self) -> &str {
        "half-space"
    }
}

/// `Ω = ℝ³ ∖ C` with `C` the closed solid cone of the given half-angle
/// around `axis`, vertex at the origin.
#[derive(Debug, Clone, Copy)]
pub struct ConeComplement {
    axis: Vec3,
    cos_half_angle: f64,
    name: &'static str,
}

impl ConeComplement {
    pub fn new(axis: Vec3, half_angle: f64, name: &'static str) -> Self {
        let n = norm3(&axis);
        ConeComplement {
            axis: [axis[0] / n, axis[1] / n, axis[2] / n],
            cos_half_angle: half_angle.cos(),
            name,
        }
    }

    /// Cone of half-angle 60° around `−e₃`.
    pub fn cone() -> Self {
        Self::new([0.0, 0.0, -1.0], PI / 3.0, "cone")
    }

    /// Thin cone of half-angle 25° around `−e₃`.
    pub fn spike() -> Self {
        Self::new([0.0, 0.0, -1.0], 25f64.to_radians(), "spike")
    }
}

impl DomainShape for ConeComplement {
    fn contains(&self, x: &Vec3) -> bool {
        let r = norm3(x);
        r > 0.0 && dot3(x, &self.axis) < self.cos_half_angle * r
    }

    fn name(&self) -> &str {
        self.name
    }
}

/// `Ω = ℝ³ ∖ {0}`; no voxel centre is excluded.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointComplement;

impl DomainShape for PointComplement {
    fn contains(&self, x: &Vec3) -> bool {
        norm3(x) > 0.0
    }

    fn name(&self) -> &str {
        "point"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fixture {
    HalfSpace,
    Cone,
    Spike,
    Point,
}

impl Fixture {
    pub const ALL: [Fixture; 4] = [Fixture::HalfSpace, Fixture::Cone, Fixture::Spike, Fixture::Point];

    pub fn shape(self) -> Box<dyn DomainShape> {
        match self {
            Fixture::HalfSpace => Box::new(HalfSpaceComplement),
            Fixture::Cone => Box::new(ConeComplement::cone()),
            Fixture::Spike => Box::new(ConeComplement::spike()),
            Fixture::Point => Box::new(PointComplement),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Fixture::HalfSpace => "half-space",
            Fixture::Cone => "cone",
            Fixture::Spike => "spike",
            Fixture::Point => "point",
        }
    }

    /// The fixture sampled on `[−m h, m h]³`.
    pub fn voxel_domain(self, m: usize, h: f64) -> VoxelDomain {
        VoxelDomain::from_shape(self.shape().as_ref(), Lattice::centered(m, h))
    }
}

impl FromStr for Fixture {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, LabError> {
        Fixture::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| LabError::InvalidInput(format!("unknown fixture '{s}' (half-space, cone, spike, point)")))
    }
}
