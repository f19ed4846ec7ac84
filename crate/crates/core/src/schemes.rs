//! Time stepping: one Picard-linearized step of each scheme.
//!
//! Every Picard iteration solves a coupled linear system in the interleaved
//! unknowns `x[2i] = phi_i`, `x[2i + 1] = mu_i`:
//!
//! ```text
//! B1 phi + dt K_D mu = B1 phi_n
//! B2 mu  - K phi     = (F_c'(phi_l) + F_e'(phi_n), basis)
//! ```
//!
//! `K` is the unit stiffness and `K_D` the stiffness weighted by the scheme's
//! mobility evaluated at the previous iterate `phi_l`. The mass forms `B1`,
//! `B2` and the potential product are lumped or exact depending on the scheme.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{ElementDiagCoeff, FeSpace, NodalField};
use crate::linalg::{Backend, LinearSolver};
use crate::mobility::{self, Truncation};
use crate::potentials::Potential;
use crate::sparse::{CsrMatrix, Pattern};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Mobility matrix from difference quotients of `G_eps'`, lumped products.
    Geps,
    /// Mobility matrix from squared difference quotients of `J_eps'`; exact
    /// potential product, lumped mass.
    Jeps,
    /// Pointwise `M0(phi)` at quadrature points, exact products.
    M0,
    /// Unit mobility, exact products.
    Const,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Geps, Scheme::Jeps, Scheme::M0, Scheme::Const];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Geps => "GEPS",
            Scheme::Jeps => "JEPS",
            Scheme::M0 => "M0",
            Scheme::Const => "CONST",
        }
    }

    /// Whether the time derivative and `(mu, .)` use the lumped mass.
    pub fn lumped_mass(self) -> bool {
        matches!(self, Scheme::Geps | Scheme::Jeps)
    }

    /// The energy that the scheme's discrete energy law controls.
    pub fn energy(self, pot: &Potential, space: &FeSpace, phi: &NodalField) -> f64 {
        match self {
            Scheme::Geps => pot.energy_lumped(space, phi),
            _ => pot.energy_quadrature(space, phi),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "GEPS" | "G" => Ok(Scheme::Geps),
            "JEPS" | "J" => Ok(Scheme::Jeps),
            "M0" => Ok(Scheme::M0),
            "CONST" => Ok(Scheme::Const),
            other => Err(Error::config("scheme", format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    pub scheme: Scheme,
    pub eta: f64,
    /// Truncation parameter. Only the `G_eps`/`J_eps` schemes use it in the
    /// step; the others need it for the singular-integral diagnostics.
    pub eps: f64,
    pub dt: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub linear_rtol: f64,
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self {
            scheme: Scheme::Geps,
            eta: 0.01,
            eps: 1e-8,
            dt: 1e-9,
            picard_tol: 1e-8,
            picard_max_iter: 500,
            linear_rtol: 1e-12,
        }
    }
}

impl SchemeParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive and finite, got {v}")))
            }
        };
        positive("eta", self.eta)?;
        positive("dt", self.dt)?;
        positive("picard_tol", self.picard_tol)?;
        positive("linear_rtol", self.linear_rtol)?;
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::config("eps", format!("must lie in (0, 0.5), got {}", self.eps)));
        }
        if self.picard_tol >= 1.0 {
            return Err(Error::config("picard_tol", "must be below 1"));
        }
        if self.picard_max_iter == 0 {
            return Err(Error::config("picard_max_iter", "must be at least 1"));
        }
        Ok(())
    }

    pub fn potential(&self) -> Potential {
        Potential::new(self.eta)
    }

    pub fn truncation(&self) -> Result<Truncation> {
        Truncation::new(self.eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    pub converged: bool,
    /// Relative `L2 x L2` change of the last Picard update.
    pub final_rel_increment: f64,
    /// Largest relative residual of the linear solves in this step.
    pub linear_residual: f64,
}

impl StepReport {
    /// The iterates blew up (non-finite solution or unevaluable iterate),
    /// so the returned fields are the last usable iterate, not a near-solution.
    pub fn diverged(&self) -> bool {
        !self.converged && self.final_rel_increment.is_nan()
    }
}

/// Result of [`Stepper::step`].
#[derive(Debug, Clone)]
pub struct Step {
    pub phi: NodalField,
    pub mu: NodalField,
    pub report: StepReport,
}

/// Owns the operators, the coupled sparsity pattern and the factorization
/// workspace for one scheme on one mesh.
#[derive(Debug)]
pub struct Stepper {
    space: Arc<FeSpace>,
    params: SchemeParams,
    pot: Potential,
    tr: Truncation,
    /// Coupled value positions `[pp, pm, mp, mm]` for each node-pattern entry.
    blocks: Vec<[usize; 4]>,
    system: CsrMatrix,
    kd: CsrMatrix,
    solver: LinearSolver,
}

impl Stepper {
    pub fn new(space: Arc<FeSpace>, params: SchemeParams) -> Result<Self> {
        params.validate()?;
        let node = space.pattern().clone();
        let (coupled, blocks) = interleave(&node);
        let coupled = Arc::new(coupled);
        let solver = LinearSolver::new(coupled.clone(), Backend::for_dim(space.mesh().dim()))?;
        Ok(Self {
            pot: params.potential(),
            tr: params.truncation()?,
            system: CsrMatrix::zeros(coupled),
            kd: CsrMatrix::zeros(node),
            blocks,
            solver,
            space,
            params,
        })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn potential(&self) -> &Potential {
        &self.pot
    }

    pub fn truncation(&self) -> &Truncation {
        &self.tr
    }

    /// Element mobility of the scheme at `phi` (`None` for unit mobility).
    pub fn mobility(&self, phi: &NodalField) -> Result<Option<ElementDiagCoeff>> {
        let mesh = self.space.mesh();
        Ok(match self.params.scheme {
            Scheme::Geps => Some(mobility::element_mobility_g(mesh, phi, &self.tr)?),
            Scheme::Jeps => Some(mobility::element_mobility_j(mesh, phi, &self.tr)?),
            Scheme::M0 => Some(mobility::element_mobility_m0(&self.space, phi)?),
            Scheme::Const => None,
        })
    }

    /// `(F_c'(a) + F_e'(c), basis_i)` in the scheme's inner product.
    pub fn potential_rhs(&self, a: &NodalField, c: &NodalField) -> Result<Vec<f64>> {
        let pot = self.pot;
        match self.params.scheme {
            Scheme::Geps => {
                let w = self.space.lumped_weights();
                let out: Vec<f64> = w
                    .iter()
                    .zip(a.values().iter().zip(c.values()))
                    .map(|(w, (&x, &y))| w * (pot.fcp(x) + pot.fep(y)))
                    .collect();
                if let Some((node, &value)) = out.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                    return Err(Error::Evaluation { node, value });
                }
                Ok(out)
            }
            _ => self.space.quad_product2(a, c, move |x, y| pot.fcp(x) + pot.fep(y)),
        }
    }

    /// Action of the mass form used for `(mu, .)` and the time derivative.
    pub fn mass_apply(&self, v: &[f64]) -> Vec<f64> {
        if self.params.scheme.lumped_mass() {
            self.space.lumped_weights().iter().zip(v).map(|(w, x)| w * x).collect()
        } else {
            self.space.consistent_mass().apply(v)
        }
    }

    /// Chemical potential consistent with `phi0`: solves the second scheme
    /// equation with `phi = phi0` (both potential arguments equal to `phi0`).
    pub fn initial_mu(&self, phi0: &NodalField) -> Result<NodalField> {
        let mut rhs = self.potential_rhs(phi0, phi0)?;
        let kphi = self.space.unit_stiffness().apply(phi0.values());
        rhs.iter_mut().zip(&kphi).for_each(|(r, k)| *r += k);
        let mu = if self.params.scheme.lumped_mass() {
            rhs.iter().zip(self.space.lumped_weights()).map(|(r, w)| r / w).collect()
        } else {
            let mass = self.space.consistent_mass();
            let backend = Backend::for_dim(self.space.mesh().dim());
            let mut solver = LinearSolver::new(mass.pattern().clone(), backend)?;
            let (x, stats) = solver.solve_refined(mass, &rhs, self.params.linear_rtol, 1)?;
            if stats.relative_residual > self.params.linear_rtol {
                return Err(Error::Solver(format!(
                    "mass solve residual {:.3e} above {:.1e}",
                    stats.relative_residual, self.params.linear_rtol
                )));
            }
            x
        };
        NodalField::new(self.space.mesh(), mu)
    }

    /// One time step from `(phi_n, mu_n)`. Picard non-convergence is reported
    /// in the returned [`StepReport`], not as an error; the fields are then the
    /// last finite iterate.
    pub fn step(&mut self, phi_n: &NodalField, mu_n: &NodalField) -> Result<Step> {
        let n = self.space.num_nodes();
        let tol = self.params.picard_tol;
        let b1_phi_n = self.mass_apply(phi_n.values());
        let mut phi = phi_n.clone();
        let mut mu = mu_n.clone();
        let mut report = StepReport {
            iterations: 0,
            converged: false,
            final_rel_increment: f64::INFINITY,
            linear_residual: 0.0,
        };
        let mut rhs = vec![0.0; 2 * n];
        let mut last_good = (phi.clone(), mu.clone());
        while report.iterations < self.params.picard_max_iter {
            report.iterations += 1;
            // A finite but diverged iterate can still overflow the potential
            // or the mobility; past the first pass that is non-convergence.
            let pot_rhs = match self.potential_rhs(&phi, phi_n).and_then(|r| self.assemble(&phi).map(|_| r)) {
                Ok(r) => r,
                Err(Error::Evaluation { .. } | Error::Assembly(_)) if report.iterations > 1 => {
                    report.final_rel_increment = f64::NAN;
                    (phi, mu) = last_good;
                    break;
                }
                Err(e) => return Err(e),
            };
            last_good = (phi.clone(), mu.clone());
            for i in 0..n {
                rhs[2 * i] = b1_phi_n[i];
                rhs[2 * i + 1] = pot_rhs[i];
            }
            let (x, stats) = self
                .solver
                .solve_refined(&self.system, &rhs, self.params.linear_rtol, 2)?;
            report.linear_residual = report.linear_residual.max(stats.relative_residual);
            if !x.iter().all(|v| v.is_finite()) {
                report.final_rel_increment = f64::NAN;
                break;
            }
            let (mut dphi, mut dmu) = (vec![0.0; n], vec![0.0; n]);
            let (mut nphi, mut nmu) = (vec![0.0; n], vec![0.0; n]);
            for i in 0..n {
                nphi[i] = x[2 * i];
                nmu[i] = x[2 * i + 1];
                dphi[i] = nphi[i] - phi.values()[i];
                dmu[i] = nmu[i] - mu.values()[i];
            }
            let w = self.space.lumped_weights();
            let lumped_sq = |v: &[f64]| v.iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>();
            let num = lumped_sq(&dphi) + lumped_sq(&dmu);
            let den = lumped_sq(&nphi) + lumped_sq(&nmu);
            let rel = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
            phi = NodalField::from_vec(nphi);
            mu = NodalField::from_vec(nmu);
            report.final_rel_increment = rel;
            if rel <= tol {
                report.converged = true;
                break;
            }
        }
        Ok(Step { phi, mu, report })
    }

    /// Fills the coupled matrix for the Picard iterate `phi_l`.
    fn assemble(&mut self, phi_l: &NodalField) -> Result<()> {
        let dt = self.params.dt;
        let kd = match self.mobility(phi_l)? {
            Some(coeff) => {
                self.space.stiffness_into(&mut self.kd, &coeff)?;
                &self.kd
            }
            None => self.space.unit_stiffness(),
        };
        let k = self.space.unit_stiffness();
        let pattern = self.space.pattern();
        let lumped = self.params.scheme.lumped_mass();
        let w = self.space.lumped_weights();
        let mass = self.space.consistent_mass().values();
        let vals = self.system.values_mut();
        for row in 0..pattern.nrows() {
            for p in pattern.row_ptr()[row]..pattern.row_ptr()[row + 1] {
                let col = pattern.col_idx()[p];
                let m = if lumped {
                    if col == row {
                        w[row]
                    } else {
                        0.0
                    }
                } else {
                    mass[p]
                };
                let [pp, pm, mp, mm] = self.blocks[p];
                vals[pp] = m;
                vals[pm] = dt * kd.values()[p];
                vals[mp] = -k.values()[p];
                vals[mm] = m;
            }
        }
        Ok(())
    }

    /// Relative residual of the nonlinear scheme equations at
    /// `(phi, mu)` given the previous state `phi_n`. Each equation's residual
    /// is scaled by the size of its terms.
    pub fn scheme_residual(&self, phi_n: &NodalField, phi: &NodalField, mu: &NodalField) -> Result<f64> {
        let dt = self.params.dt;
        let kd = match self.mobility(phi)? {
            Some(c) => self.space.stiffness(Some(&c))?,
            None => self.space.unit_stiffness().clone(),
        };
        let diff: Vec<f64> = phi.values().iter().zip(phi_n.values()).map(|(a, b)| a - b).collect();
        let t1 = self.mass_apply(&diff);
        let t2: Vec<f64> = kd.apply(mu.values()).iter().map(|v| dt * v).collect();
        let r1: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a + b).collect();
        let s1 = norm(&t1).max(norm(&t2));

        let m = self.mass_apply(mu.values());
        let kphi = self.space.unit_stiffness().apply(phi.values());
        let p = self.potential_rhs(phi, phi_n)?;
        let r2: Vec<f64> = (0..m.len()).map(|i| m[i] - kphi[i] - p[i]).collect();
        let s2 = norm(&m).max(norm(&kphi)).max(norm(&p));

        let rel = |r: &[f64], s: f64| if s > 0.0 { norm(r) / s } else { norm(r) };
        Ok(rel(&r1, s1).max(rel(&r2, s2)))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Coupled pattern over interleaved `(phi, mu)` unknowns and, for each entry
/// of the node pattern, the positions of its four block copies.
fn interleave(node: &Pattern) -> (Pattern, Vec<[usize; 4]>) {
    let n = node.nrows();
    let mut rows = Vec::with_capacity(2 * n);
    for i in 0..n {
        let cols: Vec<usize> = node.col_idx()[node.row_ptr()[i]..node.row_ptr()[i + 1]]
            .iter()
            .flat_map(|&j| [2 * j, 2 * j + 1])
            .collect();
        rows.push(cols.clone());
        rows.push(cols);
    }
    let coupled = Pattern::from_rows(rows, 2 * n);
    let mut blocks = vec![[0; 4]; node.nnz()];
    for i in 0..n {
        let start = node.row_ptr()[i];
        for p in start..node.row_ptr()[i + 1] {
            let off = 2 * (p - start);
            let r0 = coupled.row_ptr()[2 * i] + off;
            let r1 = coupled.row_ptr()[2 * i + 1] + off;
            blocks[p] = [r0, r0 + 1, r1, r1 + 1];
        }
    }
    (coupled, blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::StructuredMesh;

    fn stepper(mesh: StructuredMesh, scheme: Scheme, eta: f64, dt: f64) -> Stepper {
        let space = Arc::new(FeSpace::new(&mesh));
        let params = SchemeParams {
            scheme,
            eta,
            eps: 1e-6,
            dt,
            ..Default::default()
        };
        Stepper::new(space, params).unwrap()
    }

    fn bump(mesh: &StructuredMesh) -> NodalField {
        NodalField::from_fn(mesh, |c| 0.5 + 0.3 * (std::f64::consts::PI * c[0]).cos() * (1.0 + 0.5 * c[1]))
    }

    #[test]
    fn interleaved_blocks_point_at_the_right_entries() {
        let mesh = StructuredMesh::interval(4).unwrap();
        let space = FeSpace::new(&mesh);
        let (coupled, blocks) = interleave(space.pattern());
        let node = space.pattern();
        for i in 0..node.nrows() {
            for p in node.row_ptr()[i]..node.row_ptr()[i + 1] {
                let j = node.col_idx()[p];
                assert_eq!(Some(blocks[p][0]), coupled.position(2 * i, 2 * j));
                assert_eq!(Some(blocks[p][1]), coupled.position(2 * i, 2 * j + 1));
                assert_eq!(Some(blocks[p][2]), coupled.position(2 * i + 1, 2 * j));
                assert_eq!(Some(blocks[p][3]), coupled.position(2 * i + 1, 2 * j + 1));
            }
        }
        assert_eq!(coupled.bandwidth(), (3, 3));
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("foo".parse::<Scheme>().is_err());
    }

    #[test]
    fn params_are_validated() {
        let bad = SchemeParams {
            eps: 0.7,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { key, .. }) if key == "eps"));
        let bad = SchemeParams {
            dt: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn constant_state_is_a_one_iteration_fixed_point() {
        for scheme in Scheme::ALL {
            for mesh in [StructuredMesh::interval(20).unwrap(), StructuredMesh::grid(4, 4).unwrap()] {
                let mut s = stepper(mesh.clone(), scheme, 0.01, 1e-6);
                for c in [0.5, 1.0] {
                    let phi = NodalField::constant(&mesh, c);
                    let mu = s.initial_mu(&phi).unwrap();
                    assert!(mu.values().iter().all(|v| v.abs() < 1e-9), "{scheme}");
                    let out = s.step(&phi, &mu).unwrap();
                    assert_eq!(out.report.iterations, 1, "{scheme}");
                    assert!(out.report.converged);
                    for v in out.phi.values() {
                        assert!((v - c).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn steps_conserve_mass_and_decrease_energy() {
        for scheme in Scheme::ALL {
            for mesh in [StructuredMesh::interval(64).unwrap(), StructuredMesh::grid(8, 8).unwrap()] {
                let mut s = stepper(mesh.clone(), scheme, 0.05, 1e-5);
                let space = s.space().clone();
                let mut phi = bump(&mesh);
                let mut mu = s.initial_mu(&phi).unwrap();
                for _ in 0..5 {
                    let out = s.step(&phi, &mu).unwrap();
                    assert!(out.report.converged, "{scheme}: {:?}", out.report);
                    assert!(out.report.linear_residual <= 1e-12);
                    let v0 = space.integral(&phi);
                    let v1 = space.integral(&out.phi);
                    assert!((v1 - v0).abs() <= 1e-11 * (1.0 + v0.abs()), "{scheme}: {v0} -> {v1}");
                    let pot = s.potential();
                    let e0 = scheme.energy(pot, &space, &phi);
                    let e1 = scheme.energy(pot, &space, &out.phi);
                    assert!(e1 <= e0 + 10.0 * 1e-8 * (1.0 + e0.abs()), "{scheme}: {e0} -> {e1}");
                    let res = s.scheme_residual(&phi, &out.phi, &out.mu).unwrap();
                    assert!(res <= 100.0 * 1e-8, "{scheme}: residual {res}");
                    phi = out.phi;
                    mu = out.mu;
                }
            }
        }
    }

    #[test]
    fn reflected_data_gives_reflected_solution() {
        for mesh in [StructuredMesh::interval(40).unwrap(), StructuredMesh::grid(6, 6).unwrap()] {
            let refl = mesh.reflection();
            for scheme in [Scheme::Geps, Scheme::Jeps, Scheme::M0] {
                let mut s = stepper(mesh.clone(), scheme, 0.05, 1e-5);
                let phi = NodalField::from_fn(&mesh, |c| 0.5 + 0.4 * (5.0 * c[0] + 2.0 * c[1]).sin());
                let phi_r = NodalField::from_vec(refl.iter().map(|&k| phi.values()[k]).collect());
                let mu = s.initial_mu(&phi).unwrap();
                let mu_r = s.initial_mu(&phi_r).unwrap();
                let a = s.step(&phi, &mu).unwrap();
                let b = s.step(&phi_r, &mu_r).unwrap();
                for (i, &k) in refl.iter().enumerate() {
                    assert!((a.phi.values()[k] - b.phi.values()[i]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn initial_mu_solves_the_second_equation() {
        for scheme in Scheme::ALL {
            let mesh = StructuredMesh::grid(5, 5).unwrap();
            let s = stepper(mesh.clone(), scheme, 0.1, 1e-5);
            let phi = bump(&mesh);
            let mu = s.initial_mu(&phi).unwrap();
            let lhs = s.mass_apply(mu.values());
            let k = s.space().unit_stiffness().apply(phi.values());
            let p = s.potential_rhs(&phi, &phi).unwrap();
            for i in 0..lhs.len() {
                assert!((lhs[i] - k[i] - p[i]).abs() < 1e-10 * (1.0 + p[i].abs()));
            }
        }
    }
}
