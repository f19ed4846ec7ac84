//! Mobility laws and the element-wise P0 mobility matrices.
//!
//! `M(phi) = phi (1 - phi)`. `M0` truncates it by zero outside `[0, 1]`;
//! `M_eps` freezes it at `M(eps)` outside `[eps, 1 - eps]`. The functionals
//! `G_eps` (`G'' = 1 / M_eps`) and `J_eps` (`J'' = 1 / sqrt(M_eps)`) are the
//! entropy-like potentials whose discrete chain rules the mobility matrices
//! reproduce exactly.
//!
//! Everything here is symmetric about `phi = 1/2`: `G(phi) = G(1 - phi)`,
//! `G'(phi) = -G'(1 - phi)`, and the same for `J`. Values above one half are
//! evaluated through `s = 1 - phi`, which is exact for `phi` in `[1/2, 2]`.
//! This keeps the upper knot meaningful even when `1 - eps` rounds to `1`.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::fespace::{ElementDiagCoeff, NodalField};
use crate::mesh::StructuredMesh;
use crate::par;
use crate::potentials::Potential;

/// `M0(phi) = phi (1 - phi)` on `[0, 1]`, zero elsewhere.
#[inline]
pub fn m0(phi: f64) -> f64 {
    if (0.0..=1.0).contains(&phi) {
        phi * (1.0 - phi)
    } else {
        0.0
    }
}

/// Which piece of a truncated functional a value falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Lower,
    Inner,
    Upper,
}

/// Truncation parameter `eps` in `(0, 1/2)` with its knot data precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    eps: f64,
    /// `M(eps) = eps (1 - eps)`
    m_knot: f64,
    g_knot: [f64; 3],
    j_knot: [f64; 3],
}

impl Truncation {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::config("eps", format!("must lie in (0, 0.5), got {eps}")));
        }
        let m_knot = eps * (1.0 - eps);
        let g_knot = [g_inner(eps), g1_inner(eps), 1.0 / m_knot];
        let j_knot = [j_inner(eps), j1_inner(eps), 1.0 / m_knot.sqrt()];
        Ok(Self {
            eps,
            m_knot,
            g_knot,
            j_knot,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `M(eps)`, the value of `M_eps` outside `[eps, 1 - eps]`.
    pub fn knot_mobility(&self) -> f64 {
        self.m_knot
    }

    pub fn branch(&self, phi: f64) -> Branch {
        if phi < self.eps {
            Branch::Lower
        } else if 1.0 - phi < self.eps {
            Branch::Upper
        } else {
            Branch::Inner
        }
    }

    /// `M_eps(phi) = M(clamp(phi, eps, 1 - eps))`.
    pub fn m_eps(&self, phi: f64) -> f64 {
        match self.branch(phi) {
            Branch::Inner => phi * (1.0 - phi),
            _ => self.m_knot,
        }
    }

    /// `G_eps` and its first two derivatives (`order` in 0..=2).
    pub fn g(&self, phi: f64, order: u8) -> Result<f64> {
        check_order(order)?;
        Ok(self.eval(phi, order, &self.g_knot, [g_inner, g1_inner, g2_inner]))
    }

    /// `J_eps` and its first two derivatives (`order` in 0..=2).
    pub fn j(&self, phi: f64, order: u8) -> Result<f64> {
        check_order(order)?;
        Ok(self.eval(phi, order, &self.j_knot, [j_inner, j1_inner, j2_inner]))
    }

    #[inline]
    pub fn g0(&self, phi: f64) -> f64 {
        self.eval(phi, 0, &self.g_knot, [g_inner, g1_inner, g2_inner])
    }

    #[inline]
    pub fn g1(&self, phi: f64) -> f64 {
        self.eval(phi, 1, &self.g_knot, [g_inner, g1_inner, g2_inner])
    }

    #[inline]
    pub fn g2(&self, phi: f64) -> f64 {
        1.0 / self.m_eps(phi)
    }

    #[inline]
    pub fn j0(&self, phi: f64) -> f64 {
        self.eval(phi, 0, &self.j_knot, [j_inner, j1_inner, j2_inner])
    }

    #[inline]
    pub fn j1(&self, phi: f64) -> f64 {
        self.eval(phi, 1, &self.j_knot, [j_inner, j1_inner, j2_inner])
    }

    #[inline]
    pub fn j2(&self, phi: f64) -> f64 {
        1.0 / self.m_eps(phi).sqrt()
    }

    /// Evaluates the lower-half form at `s = min(phi, 1 - phi)` and restores
    /// the sign of odd derivatives.
    #[inline]
    fn eval(&self, phi: f64, order: u8, knot: &[f64; 3], inner: [fn(f64) -> f64; 3]) -> f64 {
        let (s, sign) = if phi <= 0.5 { (phi, 1.0) } else { (1.0 - phi, -1.0) };
        let v = if s < self.eps {
            let d = s - self.eps;
            match order {
                0 => knot[0] + knot[1] * d + 0.5 * knot[2] * d * d,
                1 => knot[1] + knot[2] * d,
                _ => knot[2],
            }
        } else {
            inner[order as usize](s)
        };
        if order == 1 {
            sign * v
        } else {
            v
        }
    }

    /// `f'(b) - f'(a)` for `G_eps` or `J_eps`. Values in the same half are
    /// differenced in closed form, since `f'` is large and flat near the
    /// ends of `[0, 1]` and a plain subtraction loses every digit there.
    #[inline]
    fn slope_diff(&self, a: f64, b: f64, knot: &[f64; 3], inner_diff: fn(f64, f64) -> f64, d1: impl Fn(f64) -> f64) -> f64 {
        if b < a {
            return -self.slope_diff(b, a, knot, inner_diff, d1);
        }
        if (a <= 0.5) != (b <= 0.5) {
            return d1(b) - d1(a);
        }
        let (sa, sb, sign) = if a <= 0.5 { (a, b, 1.0) } else { (1.0 - a, 1.0 - b, -1.0) };
        let eps = self.eps;
        // offset from the knot value f'(eps)
        let off = |s: f64| if s < eps { knot[2] * (s - eps) } else { inner_diff(eps, s) };
        let d = match (sa < eps, sb < eps) {
            (false, false) => inner_diff(sa, sb),
            (true, true) => knot[2] * (sb - sa),
            _ => off(sb) - off(sa),
        };
        sign * d
    }

    /// `G_eps'(b) - G_eps'(a)`.
    pub fn g1_diff(&self, a: f64, b: f64) -> f64 {
        self.slope_diff(a, b, &self.g_knot, g1_inner_diff, |x| self.g1(x))
    }

    /// `J_eps'(b) - J_eps'(a)`.
    pub fn j1_diff(&self, a: f64, b: f64) -> f64 {
        self.slope_diff(a, b, &self.j_knot, j1_inner_diff, |x| self.j1(x))
    }
}

fn check_order(order: u8) -> Result<()> {
    if order > 2 {
        return Err(Error::config("order", format!("derivative order must be 0, 1 or 2, got {order}")));
    }
    Ok(())
}

// Inner (untruncated) functionals on (0, 1/2]. Written so that small arguments
// do not suffer cancellation.

fn g_inner(s: f64) -> f64 {
    let a = if s > 0.0 { s * s.ln() } else { 0.0 };
    a + (1.0 - s) * (-s).ln_1p() + 1.0
}

fn g1_inner(s: f64) -> f64 {
    s.ln() - (-s).ln_1p()
}

/// `g1_inner(sb) - g1_inner(sa)` as a sum of two `ln_1p` terms.
fn g1_inner_diff(sa: f64, sb: f64) -> f64 {
    ((sb - sa) / sa).ln_1p() - ((sa - sb) / (1.0 - sa)).ln_1p()
}

fn g2_inner(s: f64) -> f64 {
    1.0 / (s * (1.0 - s))
}

/// `J(s) = (1 - 2s) asin(sqrt(1 - s)) + sqrt(s (1 - s)) + (pi/2) s`, rewritten
/// with `asin(sqrt(1 - s)) = pi/2 - asin(sqrt(s))`.
fn j_inner(s: f64) -> f64 {
    let a = s.sqrt().min(1.0).asin();
    FRAC_PI_2 * (1.0 - s) - (1.0 - 2.0 * s) * a + (s * (1.0 - s)).sqrt()
}

/// `J'(s) = -2 (asin(sqrt(1 - s)) - pi/4) = 2 asin(sqrt(s)) - pi/2`.
fn j1_inner(s: f64) -> f64 {
    2.0 * s.sqrt().min(1.0).asin() - FRAC_PI_2
}

/// `j1_inner(sb) - j1_inner(sa)` from
/// `sin(ta - tb) sin(ta + tb) = sin^2 ta - sin^2 tb` with `t = asin(sqrt(s))`.
fn j1_inner_diff(sa: f64, sb: f64) -> f64 {
    let ta = sa.sqrt().min(1.0).asin();
    let tb = sb.sqrt().min(1.0).asin();
    2.0 * ((sb - sa) / (ta + tb).sin()).clamp(-1.0, 1.0).asin()
}

fn j2_inner(s: f64) -> f64 {
    1.0 / (s * (1.0 - s)).sqrt()
}

/// Relative guard below which two nodal values are treated as equal and the
/// difference quotient is replaced by the derivative at `x0`.
const EQUAL_GUARD: f64 = 1e-12;

#[inline]
fn nearly_equal(a: f64, b: f64) -> bool {
    (b - a).abs() <= EQUAL_GUARD * a.abs().max(b.abs())
}

/// `(b - a) / (f'(b) - f'(a))` for one of the truncated functionals, falling
/// back to `1 / f''(a)` for (nearly) equal values and to the knot value when
/// both lie in the same quadratic extension.
#[inline]
fn inverse_slope(
    tr: &Truncation,
    a: f64,
    b: f64,
    diff: impl Fn(f64, f64) -> f64,
    d2: impl Fn(f64) -> f64,
    knot_d2: f64,
) -> f64 {
    let ba = tr.branch(a);
    if nearly_equal(a, b) {
        return 1.0 / d2(a);
    }
    if ba != Branch::Inner && ba == tr.branch(b) {
        return 1.0 / knot_d2;
    }
    (b - a) / diff(a, b)
}

fn check_field(mesh: &StructuredMesh, phi: &NodalField) -> Result<()> {
    if phi.len() != mesh.num_nodes() {
        return Err(Error::MeshMismatch {
            expected: mesh.num_nodes(),
            found: phi.len(),
        });
    }
    if let Some((node, &value)) = phi.values().iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Evaluation { node, value });
    }
    Ok(())
}

fn element_coeff(
    mesh: &StructuredMesh,
    phi: &NodalField,
    f: impl Fn(f64, f64) -> f64 + Sync + Send,
) -> Result<ElementDiagCoeff> {
    check_field(mesh, phi)?;
    let v = phi.values();
    let dim = mesh.dim();
    let entries = par::map_range(mesh.num_elements(), |e| {
        let el = &mesh.elements()[e];
        let mut d = [0.0; 2];
        for (k, dk) in d.iter_mut().enumerate().take(dim) {
            *dk = f(v[el.x0()], v[el.along(k)]);
        }
        d
    });
    Ok(ElementDiagCoeff::new(dim, entries))
}

/// `M^G`: per element and axis, `(phi(xk) - phi(x0)) / (G'(phi(xk)) - G'(phi(x0)))`.
/// Satisfies `M^G grad I_h(G'(phi)) = grad phi` elementwise.
pub fn element_mobility_g(mesh: &StructuredMesh, phi: &NodalField, tr: &Truncation) -> Result<ElementDiagCoeff> {
    let knot = tr.g_knot[2];
    element_coeff(mesh, phi, |a, b| {
        inverse_slope(tr, a, b, |x, y| tr.g1_diff(x, y), |x| tr.g2(x), knot)
    })
}

/// `M^J`: per element and axis, the square of
/// `(phi(xk) - phi(x0)) / (J'(phi(xk)) - J'(phi(x0)))`.
/// Satisfies `M^J grad I_h(J'(phi)) = sqrt(M^J) grad phi` elementwise.
pub fn element_mobility_j(mesh: &StructuredMesh, phi: &NodalField, tr: &Truncation) -> Result<ElementDiagCoeff> {
    let knot = tr.j_knot[2];
    element_coeff(mesh, phi, |a, b| {
        let q = inverse_slope(tr, a, b, |x, y| tr.j1_diff(x, y), |x| tr.j2(x), knot);
        q * q
    })
}

/// `R`: per element and axis, `(Fc'(phi(xk)) - Fc'(phi(x0))) / (phi(xk) - phi(x0))`,
/// so that `grad I_h(Fc'(phi)) = R grad phi`.
pub fn element_r(mesh: &StructuredMesh, phi: &NodalField, pot: &Potential) -> Result<ElementDiagCoeff> {
    element_coeff(mesh, phi, |a, b| {
        if a == b {
            pot.fcpp(a)
        } else {
            // divided difference of the cubic, free of cancellation:
            // (b^3 - a^3 - 1.5 (b^2 - a^2) + 0.75 (b - a)) / (b - a)
            let s = a * a + a * b + b * b - 1.5 * (a + b) + 0.75;
            s / (pot.eta() * pot.eta())
        }
    })
}

/// Per-element mean of `M0(phi)` by element quadrature (isotropic).
pub fn element_mobility_m0(space: &crate::fespace::FeSpace, phi: &NodalField) -> Result<ElementDiagCoeff> {
    check_field(space.mesh(), phi)?;
    let means = space.element_means(phi, m0);
    Ok(ElementDiagCoeff::from_scalar(space.mesh(), means))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{LN_2, PI};

    fn tr(eps: f64) -> Truncation {
        Truncation::new(eps).unwrap()
    }

    #[test]
    fn m0_values() {
        assert_eq!(m0(0.5), 0.25);
        assert_eq!(m0(-0.1), 0.0);
        assert_eq!(m0(1.2), 0.0);
        assert!((m0(0.015) - 0.014775).abs() < 1e-15);
    }

    #[test]
    fn m_eps_values() {
        let t = tr(0.015);
        assert!((t.m_eps(0.001) - 0.014775).abs() < 1e-15);
        assert!((t.m_eps(1.3) - 0.014775).abs() < 1e-15);
        for eps in [1e-20, 1e-3, 0.2, 0.49] {
            assert_eq!(tr(eps).m_eps(0.5), 0.25);
        }
    }

    #[test]
    fn m_eps_close_to_m0() {
        for eps in [1e-6, 1e-3, 0.05, 0.3] {
            let t = tr(eps);
            let bound = eps * (1.0 - eps);
            for i in 0..=20_000 {
                let phi = -1.0 + 3.0 * i as f64 / 20_000.0;
                assert!((t.m_eps(phi) - m0(phi)).abs() <= bound * (1.0 + 1e-14));
            }
        }
    }

    #[test]
    fn rejects_bad_eps_and_order() {
        assert!(Truncation::new(0.7).is_err());
        assert!(Truncation::new(0.0).is_err());
        assert!(Truncation::new(0.5).is_err());
        assert!(tr(0.1).g(0.3, 3).is_err());
        assert!(tr(0.1).j(0.3, 5).is_err());
    }

    #[test]
    fn center_values() {
        for eps in [1e-20, 1e-4, 0.1] {
            let t = tr(eps);
            assert!((t.g0(0.5) - (1.0 - LN_2)).abs() < 1e-15);
            assert_eq!(t.g1(0.5), 0.0);
            assert!((t.g2(0.5) - 4.0).abs() < 1e-15);
            assert!(t.j1(0.5).abs() < 1e-15);
            assert!((t.j2(0.5) - 2.0).abs() < 1e-15);
            assert!((t.j0(0.5) - (0.5 + PI / 4.0)).abs() < 1e-15);
            assert!((t.j0(0.5) - 1.2853982).abs() < 1e-7);
        }
    }

    #[test]
    fn quadratic_extension_by_hand() {
        // G(0.1) = 0.1 ln 0.1 + 0.9 ln 0.9 + 1, G'(0.1) = -ln 9, G''(0.1) = 1/0.09
        let g = 0.1 * 0.1f64.ln() + 0.9 * 0.9f64.ln() + 1.0;
        let want = g + (-(9.0f64).ln()) * (-0.2) + 0.5 / 0.09 * 0.04;
        let t = tr(0.1);
        assert!((t.g0(-0.1) - want).abs() < 1e-14);
        assert!((t.g0(-0.1) - 1.336584).abs() < 1e-6);
        // mirror image
        assert!((t.g0(1.1) - want).abs() < 1e-14);
        assert_eq!(t.g(-0.1, 0).unwrap(), t.g0(-0.1));
    }

    #[test]
    fn original_j_formulas() {
        let j = |p: f64| {
            (1.0 - 2.0 * p) * (1.0 - p).sqrt().asin() + ((1.0 - p) * p).sqrt() + 2.0 * 0.5f64.sqrt().asin() * p
        };
        let j1 = |p: f64| -2.0 * ((1.0 - p).sqrt().asin() - 0.5f64.sqrt().asin());
        let t = tr(1e-3);
        for p in [0.01, 0.2, 0.37, 0.5, 0.61, 0.9, 0.99] {
            assert!((t.j0(p) - j(p)).abs() < 1e-13, "J at {p}");
            assert!((t.j1(p) - j1(p)).abs() < 1e-13, "J' at {p}");
        }
        let g = |p: f64| p * p.ln() + (1.0 - p) * (1.0 - p).ln() + 1.0;
        for p in [0.01, 0.2, 0.5, 0.8, 0.999] {
            assert!((t.g0(p) - g(p)).abs() < 1e-13);
            assert!((t.g1(p) - (p / (1.0 - p)).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn lower_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let eps = 10f64.powf(rng.random_range(-8.0..-1.0));
            let t = tr(eps);
            let m = eps * (1.0 - eps);
            let below = eps - rng.random_range(0.0..2.0);
            assert!(t.g0(below) >= below * below / (2.0 * m));
            assert!(t.j0(below) >= below * below / (2.0 * m.sqrt()));
            let above = 1.0 - eps + rng.random_range(0.0..2.0);
            let over = (above - 1.0).max(0.0);
            assert!(t.g0(above) >= over * over / (2.0 * m));
            assert!(t.j0(above) >= over * over / (2.0 * m.sqrt()));
        }
    }

    #[test]
    fn nonnegative_and_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..2000 {
            let t = tr(10f64.powf(rng.random_range(-20.0..-0.4)));
            let p = rng.random_range(-1.0..2.0);
            assert!(t.g0(p) >= 0.0 && t.j0(p) >= 0.0);
            assert!(t.g2(p) > 0.0 && t.j2(p) > 0.0);
        }
    }

    #[test]
    fn derivatives_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5000 {
            let t = tr(10f64.powf(rng.random_range(-12.0..-0.4)));
            let a = rng.random_range(-1.0..2.0);
            let b = rng.random_range(-1.0..2.0);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if hi - lo < 1e-9 {
                continue;
            }
            assert!(t.g1(lo) < t.g1(hi), "G' at {lo}, {hi}, eps {}", t.eps());
            assert!(t.j1(lo) < t.j1(hi));
        }
    }

    #[test]
    fn c2_at_the_knots() {
        for eps in [1e-3, 0.05, 0.2] {
            let t = tr(eps);
            for knot in [eps, 1.0 - eps] {
                let d = 1e-7;
                for f in [
                    &(|x| t.g0(x)) as &dyn Fn(f64) -> f64,
                    &|x| t.g1(x),
                    &|x| t.g2(x),
                    &|x| t.j0(x),
                    &|x| t.j1(x),
                    &|x| t.j2(x),
                ] {
                    let jump = (f(knot + d) - f(knot - d)).abs();
                    let scale = f(knot).abs().max(1.0);
                    assert!(jump <= 1e-4 * scale, "eps {eps} knot {knot}: jump {jump}");
                }
                // one-sided difference quotients of G and G' agree with G', G''
                let left = (t.g0(knot) - t.g0(knot - d)) / d;
                let right = (t.g0(knot + d) - t.g0(knot)) / d;
                assert!((left - right).abs() <= 1e-3 * t.g1(knot).abs().max(1.0));
                let left = (t.g1(knot) - t.g1(knot - d)) / d;
                let right = (t.g1(knot + d) - t.g1(knot)) / d;
                assert!((left - right).abs() <= 1e-3 * t.g2(knot));
            }
        }
    }

    #[test]
    fn tiny_eps_is_well_defined_at_the_upper_knot() {
        let t = tr(1e-20);
        assert_eq!(t.branch(1.0), Branch::Upper);
        assert!(t.g1(1.0).is_finite() && t.g1(1.0) > 45.0);
        assert!(t.j1(1.0).is_finite());
        assert!((t.g1(1.0) + t.g1(0.0)).abs() < 1e-12);
        assert!(t.g0(1.0 + 1e-10).is_finite());
    }

    fn mesh1(n: usize) -> StructuredMesh {
        StructuredMesh::interval(n).unwrap()
    }

    #[test]
    fn element_mobility_examples() {
        let mesh = mesh1(2);
        let flat = NodalField::constant(&mesh, 0.5);
        let t = tr(0.1);
        let mg = element_mobility_g(&mesh, &flat, &t).unwrap();
        assert_eq!(mg.get(0, 0), 0.25);
        let mj = element_mobility_j(&mesh, &flat, &t).unwrap();
        assert!((mj.get(0, 0) - 0.25).abs() < 1e-15);

        let phi = NodalField::from_vec(vec![0.2, 0.8, 0.8]);
        for eps in [1e-20, 1e-3, 0.2] {
            let t = tr(eps);
            let mg = element_mobility_g(&mesh, &phi, &t).unwrap();
            assert!((mg.get(0, 0) - 0.6 / 16f64.ln()).abs() < 1e-14);
            assert!((mg.get(0, 0) - 0.216405).abs() < 1e-6);
            let mj = element_mobility_j(&mesh, &phi, &t).unwrap();
            assert!((mj.get(0, 0) - 0.217342).abs() < 1e-6);
            assert!((mg.get(1, 0) - 0.16).abs() < 1e-15);
        }
        let eta = 0.01;
        let pot = Potential::new(eta);
        let r = element_r(&mesh, &phi, &pot).unwrap();
        assert!((r.get(0, 0) - 0.09 / (eta * eta)).abs() < 1e-9);
        assert_eq!(element_r(&mesh, &flat, &pot).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn same_extension_branch_uses_knot_mobility() {
        let mesh = mesh1(2);
        let t = tr(0.01);
        let phi = NodalField::from_vec(vec![-0.3, -0.01, 1.2]);
        let mg = element_mobility_g(&mesh, &phi, &t).unwrap();
        assert_eq!(mg.get(0, 0), t.knot_mobility());
        let mj = element_mobility_j(&mesh, &phi, &t).unwrap();
        assert!((mj.get(0, 0) - t.knot_mobility()).abs() <= 1e-16);
        assert!(mg.get(1, 0) > 0.0 && mg.get(1, 0) <= 0.25);
    }

    #[test]
    fn rejects_non_finite_fields() {
        let mesh = mesh1(2);
        let phi = NodalField::from_vec(vec![0.2, f64::NAN, 0.1]);
        assert!(matches!(
            element_mobility_g(&mesh, &phi, &tr(0.1)),
            Err(Error::Evaluation { node: 1, .. })
        ));
    }

    #[test]
    fn slope_differences_match_plain_subtraction_away_from_the_ends() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for eps in [1e-3, 0.1] {
            let t = tr(eps);
            for _ in 0..2000 {
                let a: f64 = rng.random_range(-0.5..1.5);
                let b: f64 = rng.random_range(-0.5..1.5);
                let (g, j) = (t.g1(b) - t.g1(a), t.j1(b) - t.j1(a));
                let gs = t.g1(a).abs().max(t.g1(b).abs());
                let js = t.j1(a).abs().max(t.j1(b).abs());
                assert!((t.g1_diff(a, b) - g).abs() <= 1e-13 * gs.max(1.0), "G {a} {b}");
                assert!((t.j1_diff(a, b) - j).abs() <= 1e-13 * js.max(1.0), "J {a} {b}");
            }
        }
    }

    #[test]
    fn close_values_near_the_ends_give_finite_mobility() {
        let t = tr(1e-20);
        let mesh = mesh1(3);
        for (a, b) in [(1e-17, 1.0001e-17), (3e-20, 2.9e-20), (1e-20, 9.9e-21), (1.0 - 1e-14, 1.0 - 1.1e-14)] {
            let phi = NodalField::from_vec(vec![a, b, 0.5, 0.5]);
            let mj = element_mobility_j(&mesh, &phi, &t).unwrap().get(0, 0);
            let mg = element_mobility_g(&mesh, &phi, &t).unwrap().get(0, 0);
            let s = a.min(1.0 - a);
            assert!(mj.is_finite() && mj > 0.0 && mj < 2.0 * s, "{a} {b} {mj}");
            assert!(mg.is_finite() && mg > 0.0 && mg < 2.0 * s, "{a} {b} {mg}");
        }
        // J'(b) - J'(a) = 2 (sqrt b - sqrt a) to leading order
        let d = t.j1_diff(1e-17, 1.0001e-17);
        let want = 2.0 * (1.0001e-17f64.sqrt() - 1e-17f64.sqrt());
        assert!((d - want).abs() <= 1e-6 * want);
    }
}
