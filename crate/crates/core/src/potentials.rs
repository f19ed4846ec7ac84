//! Ginzburg-Landau double well `F(phi) = phi^2 (phi - 1)^2 / (4 eta^2)`, its
//! convex/concave split and the two discrete free energies.
//!
//! No clamping happens here: the polynomials are evaluated as is for any
//! real `phi`.

use crate::fespace::{FeSpace, NodalField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potential {
    eta: f64,
    inv_eta2: f64,
}

impl Potential {
    /// `eta` is the interface-width parameter; must be positive.
    pub fn new(eta: f64) -> Self {
        assert!(eta > 0.0 && eta.is_finite(), "eta must be positive, got {eta}");
        Self {
            eta,
            inv_eta2: 1.0 / (eta * eta),
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    #[inline]
    pub fn f(&self, phi: f64) -> f64 {
        let t = phi * (phi - 1.0);
        0.25 * t * t * self.inv_eta2
    }

    #[inline]
    pub fn fp(&self, phi: f64) -> f64 {
        (phi * phi * phi - 1.5 * phi * phi + 0.5 * phi) * self.inv_eta2
    }

    /// Convex part `(phi^4 - 2 phi^3 + 3/2 phi^2) / (4 eta^2)`.
    #[inline]
    pub fn fc(&self, phi: f64) -> f64 {
        let p2 = phi * phi;
        0.25 * (p2 * p2 - 2.0 * p2 * phi + 1.5 * p2) * self.inv_eta2
    }

    #[inline]
    pub fn fcp(&self, phi: f64) -> f64 {
        (phi * phi * phi - 1.5 * phi * phi + 0.75 * phi) * self.inv_eta2
    }

    #[inline]
    pub fn fcpp(&self, phi: f64) -> f64 {
        let d = phi - 0.5;
        3.0 * d * d * self.inv_eta2
    }

    /// Concave part `-phi^2 / (8 eta^2)`.
    #[inline]
    pub fn fe(&self, phi: f64) -> f64 {
        -0.125 * phi * phi * self.inv_eta2
    }

    #[inline]
    pub fn fep(&self, phi: f64) -> f64 {
        -0.25 * phi * self.inv_eta2
    }

    #[inline]
    pub fn fepp(&self, _phi: f64) -> f64 {
        -0.25 * self.inv_eta2
    }

    /// `E_h(phi) = 1/2 (grad phi, grad phi) + sum_i w_i F(phi_i)`: the
    /// potential term uses the lumped (nodal) quadrature.
    pub fn energy_lumped(&self, space: &FeSpace, phi: &NodalField) -> f64 {
        let bulk: f64 = space
            .lumped_weights()
            .iter()
            .zip(phi.values())
            .map(|(w, &p)| w * self.f(p))
            .sum();
        0.5 * space.dirichlet_energy(phi) + bulk
    }

    /// `E(phi) = 1/2 (grad phi, grad phi) + int F(phi)` with the potential
    /// integrated by a rule exact for the quartic `F(phi)` of a P1 field.
    pub fn energy_quadrature(&self, space: &FeSpace, phi: &NodalField) -> f64 {
        0.5 * space.dirichlet_energy(phi) + space.integrate(phi, |p| self.f(p))
    }
}
