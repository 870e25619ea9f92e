//! Decomposition `u(x) = ū(r) + v(x)` into the spherical mean and a
//! fluctuation with zero mean on every sphere, plus the sphere-level
//! inequalities used to bound the weighted form.

use std::f64::consts::PI;

use serde::Serialize;

use crate::elastic::{DisplacementField, Jet};
use crate::linalg::{add3, dot3, frob2, pairwise_sum, scale3, Mat3, Vec3};
use crate::quadrature::{sphere_integrate, volume_integrate_polar, PolarGrid, SphereRule};

/// Spherical split of a field about a centre (the origin unless built with
/// [`SplitField::about`]).
#[derive(Clone, Copy)]
pub struct SplitField<'a, F: ?Sized> {
    pub base: &'a F,
    pub rule: &'a SphereRule,
    pub center: Vec3,
}

pub fn split<'a, F: DisplacementField + ?Sized>(u: &'a F, rule: &'a SphereRule) -> SplitField<'a, F> {
    SplitField::about(u, rule, [0.0; 3])
}

/// All sphere-node jets of `u` at one radius together with the mean and
/// its radial derivative.
#[derive(Debug, Clone)]
pub struct Shell<'a> {
    pub rule: &'a SphereRule,
    pub r: f64,
    pub mean: Vec3,
    /// `D_r ū`, the sphere average of `ω_k D_k u_i`.
    pub mean_derivative: Vec3,
    pub jets: Vec<Jet>,
}

impl Shell<'_> {
    pub fn omega(&self, node: usize) -> &Vec3 {
        &self.rule.nodes[node].omega
    }

    pub fn fluctuation(&self, node: usize) -> Vec3 {
        let u = &self.jets[node].value;
        [u[0] - self.mean[0], u[1] - self.mean[1], u[2] - self.mean[2]]
    }

    /// `Dv = Du − ω ⊗ D_r ū`, entry `(k, i) = D_k v_i`.
    pub fn fluctuation_jacobian(&self, node: usize) -> Mat3 {
        let w = self.omega(node);
        let mut m = self.jets[node].jacobian;
        for (k, row) in m.iter_mut().enumerate() {
            for (i, e) in row.iter_mut().enumerate() {
                *e -= w[k] * self.mean_derivative[i];
            }
        }
        m
    }

    /// `Σ wₙ f(n)` over the sphere nodes.
    pub fn integrate<G: Fn(usize) -> f64>(&self, f: G) -> f64 {
        let terms: Vec<f64> = (0..self.jets.len()).map(|n| self.rule.nodes[n].weight * f(n)).collect();
        pairwise_sum(&terms)
    }
}

impl<'a, F: DisplacementField + ?Sized> SplitField<'a, F> {
    pub fn about(u: &'a F, rule: &'a SphereRule, center: Vec3) -> Self {
        SplitField { base: u, rule, center }
    }

    fn point(&self, r: f64, w: &Vec3) -> Vec3 {
        add3(&self.center, &scale3(r, w))
    }

    pub fn shell(&self, r: f64) -> Shell<'a> {
        let jets: Vec<Jet> = self
            .rule
            .nodes
            .iter()
            .map(|n| self.base.jet(&self.point(r, &n.omega)))
            .collect();
        let mut mean = [0.0; 3];
        let mut mean_derivative = [0.0; 3];
        for i in 0..3 {
            let vals: Vec<f64> = jets
                .iter()
                .zip(&self.rule.nodes)
                .map(|(j, n)| n.weight * j.value[i])
                .collect();
            mean[i] = pairwise_sum(&vals) / (4.0 * PI);
            let ders: Vec<f64> = jets
                .iter()
                .zip(&self.rule.nodes)
                .map(|(j, n)| n.weight * (0..3).map(|k| n.omega[k] * j.jacobian[k][i]).sum::<f64>())
                .collect();
            mean_derivative[i] = pairwise_sum(&ders) / (4.0 * PI);
        }
        Shell {
            rule: self.rule,
            r,
            mean,
            mean_derivative,
            jets,
        }
    }

    pub fn mean(&self, r: f64) -> Vec3 {
        self.shell(r).mean
    }

    pub fn mean_derivative(&self, r: f64) -> Vec3 {
        self.shell(r).mean_derivative
    }

    pub fn fluctuation(&self, r: f64, w: &Vec3) -> Vec3 {
        let m = self.mean(r);
        let u = self.base.value(&self.point(r, w));
        [u[0] - m[0], u[1] - m[1], u[2] - m[2]]
    }

    pub fn fluctuation_jacobian(&self, r: f64, w: &Vec3) -> Mat3 {
        let d = self.mean_derivative(r);
        let mut m = self.base.jacobian(&self.point(r, w));
        for k in 0..3 {
            for i in 0..3 {
                m[k][i] -= w[k] * d[i];
            }
        }
        m
    }
}

/// The two integrals that vanish when `g` has zero spherical means:
/// `∫ f(r) g(x) dx` and `∫ r⁻¹ Df(r)·Dg(x) dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Orthogonality {
    pub value_integral: f64,
    pub gradient_integral: f64,
}

impl Orthogonality {
    pub fn holds(&self, tol: f64) -> bool {
        self.value_integral.abs() <= tol && self.gradient_integral.abs() <= tol
    }
}

/// `f` returns `(f(r), f'(r))`; `g` returns the value and gradient of the
/// scalar field at `x`.
pub fn orthogonality_check<Fr, G>(f: Fr, g: G, grid: &PolarGrid) -> crate::Result<Orthogonality>
where
    Fr: Fn(f64) -> (f64, f64) + Sync,
    G: Fn(&Vec3) -> (f64, Vec3) + Sync,
{
    let value_integral = volume_integrate_polar(
        grid,
        |r, w| {
            let (fv, _) = f(r);
            fv * g(&scale3(r, w)).0
        },
        0,
    )?;
    let gradient_integral = volume_integrate_polar(
        grid,
        |r, w| {
            let (_, df) = f(r);
            let (_, grad) = g(&scale3(r, w));
            df * dot3(w, &grad) / r
        },
        1,
    )?;
    Ok(Orthogonality {
        value_integral,
        gradient_integral,
    })
}

/// `(‖v‖²_ω, (r²/2)‖Dv‖²_ω)` on the sphere of radius `r`. The first never
/// exceeds the second because 2 is the first nonzero eigenvalue of the
/// Laplace–Beltrami operator on S².
pub fn poincare_sphere_check<F: DisplacementField + ?Sized>(s: &SplitField<'_, F>, r: f64) -> (f64, f64) {
    let shell = s.shell(r);
    let lhs = shell.integrate(|n| {
        let v = shell.fluctuation(n);
        dot3(&v, &v)
    });
    let dv = shell.integrate(|n| frob2(&shell.fluctuation_jacobian(n)));
    (lhs, 0.5 * r * r * dv)
}

/// `(‖div v‖²_ω, 3‖Dv‖²_ω)`; Cauchy–Schwarz on the trace.
pub fn div_bound_check<F: DisplacementField + ?Sized>(s: &SplitField<'_, F>, r: f64) -> (f64, f64) {
    let shell = s.shell(r);
    let div = shell.integrate(|n| {
        let m = shell.fluctuation_jacobian(n);
        let d = m[0][0] + m[1][1] + m[2][2];
        d * d
    });
    let dv = shell.integrate(|n| frob2(&shell.fluctuation_jacobian(n)));
    (div, 3.0 * dv)
}

/// `(‖D_r ū·ω‖²_ω, ‖D_r ū‖²_ω / 3)`; equal because `∫ωᵢωⱼ = (4π/3)δᵢⱼ`.
pub fn radial_projection_check<F: DisplacementField + ?Sized>(s: &SplitField<'_, F>, r: f64) -> (f64, f64) {
    let d = s.mean_derivative(r);
    let lhs = sphere_integrate(s.rule, |w| dot3(&d, w).powi(2));
    (lhs, 4.0 * PI * dot3(&d, &d) / 3.0)
}
