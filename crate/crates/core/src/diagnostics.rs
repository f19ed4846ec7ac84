//! Per-step observables and the spatial convergence study.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{l2_error, FeSpace, NodalField};
use crate::mesh::StructuredMesh;
use crate::mobility::Truncation;
use crate::par;
use crate::potentials::Potential;
use crate::schemes::{Scheme, SchemeParams};
use crate::simulation::{self, RunOptions, RunStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Singular {
    G,
    J,
}

/// One row of a run's time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRecord {
    pub step: usize,
    pub time: f64,
    /// Energy controlled by the scheme (lumped for `GEPS`, exact otherwise).
    pub energy: f64,
    pub volume: f64,
    pub min_phi: f64,
    pub max_phi: f64,
    pub int_g_eps: f64,
    pub int_j_eps: f64,
    pub neg_part_sq: f64,
    pub over_part_sq: f64,
    /// Picard iterations of the step that produced this state (0 initially).
    pub picard_iters: usize,
}

impl SeriesRecord {
    pub const CSV_HEADER: &'static str =
        "step,time,energy,volume,min_phi,max_phi,int_G_eps,int_J_eps,neg_part_sq,over_part_sq,picard_iters";

    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        space: &FeSpace,
        scheme: Scheme,
        pot: &Potential,
        tr: &Truncation,
        step: usize,
        time: f64,
        phi: &NodalField,
        picard_iters: usize,
    ) -> Self {
        let (neg_part_sq, over_part_sq) = overshoot_norms(space, phi);
        Self {
            step,
            time,
            energy: scheme.energy(pot, space, phi),
            volume: space.integral(phi),
            min_phi: phi.min(),
            max_phi: phi.max(),
            int_g_eps: singular_integral(space, phi, tr, Singular::G),
            int_j_eps: singular_integral(space, phi, tr, Singular::J),
            neg_part_sq,
            over_part_sq,
            picard_iters,
        }
    }

    /// CSV row matching [`SeriesRecord::CSV_HEADER`], floats at 17 significant digits.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            fmt17(self.time),
            fmt17(self.energy),
            fmt17(self.volume),
            fmt17(self.min_phi),
            fmt17(self.max_phi),
            fmt17(self.int_g_eps),
            fmt17(self.int_j_eps),
            fmt17(self.neg_part_sq),
            fmt17(self.over_part_sq),
            self.picard_iters
        )
    }
}

/// Round-trip formatting with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// `int I_h(G_eps(phi))` or `int I_h(J_eps(phi))`: lumped sums.
pub fn singular_integral(space: &FeSpace, phi: &NodalField, tr: &Truncation, which: Singular) -> f64 {
    let f = |p: f64| match which {
        Singular::G => tr.g0(p),
        Singular::J => tr.j0(p),
    };
    space
        .lumped_weights()
        .iter()
        .zip(phi.values())
        .map(|(w, &p)| w * f(p))
        .sum()
}

/// Exact `int (I_h phi_-)^2` and `int (I_h (phi - 1)_+)^2`.
pub fn overshoot_norms(space: &FeSpace, phi: &NodalField) -> (f64, f64) {
    let neg: Vec<f64> = phi.values().iter().map(|&p| (-p).max(0.0)).collect();
    let over: Vec<f64> = phi.values().iter().map(|&p| (p - 1.0).max(0.0)).collect();
    (space.l2_norm_sq(&neg), space.l2_norm_sq(&over))
}

/// One line of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub e2: f64,
    /// Rate against the previous row; absent for the first.
    pub r2: Option<f64>,
}

/// Inputs of [`convergence_study`] (1D meshes).
#[derive(Debug, Clone)]
pub struct ConvergenceSetup {
    pub params: SchemeParams,
    /// Scheme used for the reference solution.
    pub reference_scheme: Scheme,
    pub sizes: Vec<usize>,
    pub reference_size: usize,
    pub steps: usize,
}

impl ConvergenceSetup {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.sizes.is_empty() {
            return Err(Error::config("sizes", "at least one mesh size is required"));
        }
        for &n in &self.sizes {
            if n < 2 || !self.reference_size.is_multiple_of(n) {
                return Err(Error::config(
                    "sizes",
                    format!("size {n} does not divide the reference size {}", self.reference_size),
                ));
            }
        }
        Ok(())
    }
}

/// `r2 = log(e / e_next) / log(h / h_next)`.
pub fn rate(e: f64, e_next: f64, h: f64, h_next: f64) -> f64 {
    (e / e_next).ln() / (h / h_next).ln()
}

/// Runs every size and the reference to the same final time with the same
/// time step, then reports `L2` errors against the reference and pairwise
/// rates. Runs execute concurrently when the `parallel` feature is on.
pub fn convergence_study<F>(setup: &ConvergenceSetup, initial: F) -> Result<Vec<ConvergenceRow>>
where
    F: Fn(&StructuredMesh) -> Result<NodalField> + Sync + Send,
{
    setup.validate()?;
    let mut jobs: Vec<(usize, Scheme)> = setup.sizes.iter().map(|&n| (n, setup.params.scheme)).collect();
    jobs.push((setup.reference_size, setup.reference_scheme));
    let results = par::map_jobs(jobs, |(n, scheme)| -> Result<(Arc<FeSpace>, NodalField)> {
        let mesh = Arc::new(StructuredMesh::interval(n)?);
        let space = Arc::new(FeSpace::from_arc(mesh.clone()));
        let params = SchemeParams { scheme, ..setup.params };
        let phi0 = initial(&mesh)?;
        let opts = RunOptions {
            steps: setup.steps,
            record_every: 0,
            snapshot_every: 0,
            abort_on_fail: true,
        };
        let out = simulation::run_simulation(space.clone(), params, phi0, &opts, |_, _, _| Ok(()))?;
        if let RunStatus::PicardFailure { step } = out.status {
            return Err(Error::Solver(format!("{scheme} run at N={n} did not converge at step {step}")));
        }
        Ok((space, out.phi))
    });
    let mut results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let (ref_space, ref_phi) = results.pop().expect("reference run");
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(results.len());
    for (&n, (space, phi)) in setup.sizes.iter().zip(&results) {
        let e2 = l2_error(space, phi, &ref_space, &ref_phi)?;
        let r2 = rows.last().map(|prev| rate(prev.e2, e2, 1.0 / prev.n as f64, 1.0 / n as f64));
        rows.push(ConvergenceRow { n, e2, r2 });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_fields() {
        let mesh = StructuredMesh::grid(3, 4).unwrap();
        let space = FeSpace::new(&mesh);
        let tr = Truncation::new(1e-3).unwrap();
        let half = NodalField::constant(&mesh, 0.5);
        let g = singular_integral(&space, &half, &tr, Singular::G);
        let j = singular_integral(&space, &half, &tr, Singular::J);
        assert!((g - (1.0 - 2f64.ln())).abs() < 1e-14);
        assert!((j - (0.5 + std::f64::consts::FRAC_PI_4)).abs() < 1e-14);
        let eps = 1e-3;
        let knot = NodalField::constant(&mesh, eps);
        let want = eps * eps.ln() + (1.0 - eps) * (1.0 - eps).ln() + 1.0;
        assert!((singular_integral(&space, &knot, &tr, Singular::G) - want).abs() < 1e-13);
        assert_eq!(overshoot_norms(&space, &half), (0.0, 0.0));
        let neg = NodalField::constant(&mesh, -0.1);
        let (a, b) = overshoot_norms(&space, &neg);
        assert!((a - 0.01).abs() < 1e-15);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn overshoot_of_mixed_sign_field_by_hand() {
        // nodes 0, .25, .5, .75, 1 with values 0, -1, 0, 2, 1
        let mesh = StructuredMesh::interval(4).unwrap();
        let space = FeSpace::new(&mesh);
        let phi = NodalField::new(&mesh, vec![0.0, -1.0, 0.0, 2.0, 1.0]).unwrap();
        let (neg, over) = overshoot_norms(&space, &phi);
        // hat of height 1 on two cells of width h: 2 h / 3
        assert!((neg - 2.0 * 0.25 / 3.0).abs() < 1e-15);
        assert!((over - 2.0 * 0.25 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rate_of_exact_powers() {
        assert!((rate(4e-4, 1e-4, 0.02, 0.01) - 2.0).abs() < 1e-12);
        let r = rate(1.3314e-5, 5.9e-6, 1.0 / 2000.0, 1.0 / 3000.0);
        assert!(r > 1.9 && r < 2.1);
    }

    #[test]
    fn study_validation() {
        let mut setup = ConvergenceSetup {
            params: SchemeParams::default(),
            reference_scheme: Scheme::Geps,
            sizes: vec![20, 30],
            reference_size: 120,
            steps: 2,
        };
        assert!(setup.validate().is_ok());
        setup.sizes.push(50);
        assert!(matches!(setup.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn reference_against_itself_is_exact() {
        let setup = ConvergenceSetup {
            params: SchemeParams {
                eta: 0.05,
                dt: 1e-6,
                ..Default::default()
            },
            reference_scheme: Scheme::Geps,
            sizes: vec![30],
            reference_size: 30,
            steps: 3,
        };
        let rows = convergence_study(&setup, |m| {
            Ok(NodalField::from_fn(m, |c| 0.5 + 0.3 * (6.0 * c[0]).cos()))
        })
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].e2, 0.0);
        assert!(rows[0].r2.is_none());
    }

    #[test]
    fn csv_row_has_header_arity() {
        let mesh = StructuredMesh::interval(4).unwrap();
        let space = FeSpace::new(&mesh);
        let phi = NodalField::constant(&mesh, 0.3);
        let r = SeriesRecord::compute(
            &space,
            Scheme::Jeps,
            &Potential::new(0.1),
            &Truncation::new(0.01).unwrap(),
            0,
            0.0,
            &phi,
            0,
        );
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), SeriesRecord::CSV_HEADER.split(',').count());
        for tok in row.split(',') {
            assert!(tok.parse::<f64>().unwrap().is_finite());
        }
        assert_eq!(fmt17(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
