//! File-producing entry points behind the command-line subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::config::RunConfig;
use crate::diagnostics::{convergence_study, fmt17, ConvergenceRow, SeriesRecord};
use crate::error::{Error, Result};
use crate::fespace::{FeSpace, NodalField};
use crate::mesh::StructuredMesh;
use crate::par;
use crate::schemes::Scheme;
use crate::simulation::{run_simulation, RunOutcome, RunStatus};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const PICARD: i32 = 3;
    pub const IO: i32 = 4;
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse { .. } | Error::InvalidMesh(_) | Error::Unsupported(_) => exit::CONFIG,
            Error::Io { .. } => exit::IO,
            _ => exit::OTHER,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub scheme: Scheme,
    pub status: RunStatus,
    pub failed_steps: Vec<usize>,
    pub records: usize,
    pub output_dir: PathBuf,
}

impl RunSummary {
    /// `0` on success, `3` if any step failed to converge.
    pub fn exit_code(&self) -> i32 {
        if self.status == RunStatus::Completed && self.failed_steps.is_empty() {
            exit::SUCCESS
        } else {
            exit::PICARD
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn series_csv(series: &[SeriesRecord]) -> String {
    let mut s = String::with_capacity(200 * (series.len() + 1));
    s.push_str(SeriesRecord::CSV_HEADER);
    s.push('\n');
    for r in series {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

pub fn snapshot_csv(mesh: &StructuredMesh, phi: &NodalField, mu: &NodalField) -> String {
    let mut s = String::new();
    s.push_str(if mesh.dim() == 1 { "x,phi,mu\n" } else { "x,y,phi,mu\n" });
    for (i, c) in mesh.coords().iter().enumerate() {
        let (p, m) = (fmt17(phi.values()[i]), fmt17(mu.values()[i]));
        let line = if mesh.dim() == 1 {
            format!("{},{p},{m}", fmt17(c[0]))
        } else {
            format!("{},{},{p},{m}", fmt17(c[0]), fmt17(c[1]))
        };
        s.push_str(&line);
        s.push('\n');
    }
    s
}

fn simulate(cfg: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let mesh = Arc::new(cfg.mesh()?);
    let space = Arc::new(FeSpace::from_arc(mesh.clone()));
    let phi0 = cfg.initial_spec().build(&mesh)?;
    create_dir(dir)?;
    write(&dir.join("manifest.txt"), &cfg.to_manifest())?;
    let outcome = run_simulation(space, cfg.scheme_params(), phi0, &cfg.run_options()?, |step, phi, mu| {
        write(&dir.join(format!("phi_{step}.csv")), &snapshot_csv(&mesh, phi, mu))
    })?;
    write(&dir.join("series.csv"), &series_csv(&outcome.series))?;
    Ok(outcome)
}

/// Single run: `series.csv`, `phi_<step>.csv` snapshots and `manifest.txt`
/// in the configured output directory.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    let out = simulate(cfg, &cfg.output_dir)?;
    Ok(RunSummary {
        scheme: cfg.scheme,
        status: out.status,
        failed_steps: out.failed_steps,
        records: out.series.len(),
        output_dir: cfg.output_dir.clone(),
    })
}

/// Convergence table `convergence.csv` with columns `scheme,N,e2,r2`.
pub fn cmd_converge(cfg: &RunConfig) -> Result<Vec<ConvergenceRow>> {
    cfg.validate()?;
    let setup = cfg.convergence_setup()?;
    let initial = cfg.initial_spec();
    let rows = convergence_study(&setup, |mesh| initial.build(mesh))?;
    create_dir(&cfg.output_dir)?;
    write(&cfg.output_dir.join("manifest.txt"), &cfg.to_manifest())?;
    let mut s = String::from("scheme,N,e2,r2\n");
    for r in &rows {
        let rate = r.r2.map(fmt17).unwrap_or_default();
        writeln!(s, "{},{},{},{}", cfg.scheme, r.n, fmt17(r.e2), rate).expect("writing to a String");
    }
    write(&cfg.output_dir.join("convergence.csv"), &s)?;
    Ok(rows)
}

/// Runs each scheme of `cfg.schemes` (concurrently) into
/// `<output_dir>/<scheme>/` and writes `compare.csv`: the per-scheme
/// `min_phi`/`max_phi` columns merged on the step index.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    let jobs: Vec<Scheme> = cfg.schemes.clone();
    let results = par::map_jobs(jobs, |scheme| -> Result<(RunSummary, Vec<SeriesRecord>)> {
        let sub = RunConfig {
            scheme,
            output_dir: cfg.output_dir.join(scheme.name()),
            ..cfg.clone()
        };
        let out = simulate(&sub, &sub.output_dir)?;
        let summary = RunSummary {
            scheme,
            status: out.status,
            failed_steps: out.failed_steps,
            records: out.series.len(),
            output_dir: sub.output_dir,
        };
        Ok((summary, out.series))
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut steps: Vec<(usize, f64)> = results
        .iter()
        .flat_map(|(_, series)| series.iter().map(|r| (r.step, r.time)))
        .collect();
    steps.sort_by_key(|&(s, _)| s);
    steps.dedup_by_key(|&mut (s, _)| s);
    let mut s = String::from("step,time");
    for (summary, _) in &results {
        write!(s, ",min_phi_{0},max_phi_{0}", summary.scheme).expect("writing to a String");
    }
    s.push('\n');
    for (step, time) in steps {
        write!(s, "{step},{}", fmt17(time)).expect("writing to a String");
        for (_, series) in &results {
            match series.iter().find(|r| r.step == step) {
                Some(r) => write!(s, ",{},{}", fmt17(r.min_phi), fmt17(r.max_phi)),
                None => write!(s, ",,"),
            }
            .expect("writing to a String");
        }
        s.push('\n');
    }
    create_dir(&cfg.output_dir)?;
    write(&cfg.output_dir.join("compare.csv"), &s)?;
    Ok(results.into_iter().map(|(summary, _)| summary).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> RunConfig {
        RunConfig {
            eta: 0.05,
            nx: 40,
            dt: 1e-6,
            t_end: 1e-5,
            output_dir: dir.to_path_buf(),
            ..RunConfig::default()
        }
    }

    #[test]
    fn run_writes_series_snapshots_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            snapshot_every: 5,
            ..small(dir.path())
        };
        let summary = cmd_run(&cfg).unwrap();
        assert_eq!(summary.exit_code(), 0);
        let series = fs::read_to_string(dir.path().join("series.csv")).unwrap();
        let mut lines = series.lines();
        assert_eq!(lines.next().unwrap(), SeriesRecord::CSV_HEADER);
        assert_eq!(lines.count(), 11);
        for step in [0, 5, 10] {
            let snap = fs::read_to_string(dir.path().join(format!("phi_{step}.csv"))).unwrap();
            assert!(snap.starts_with("x,phi,mu\n"));
            assert_eq!(snap.lines().count(), 42);
        }
        let manifest = RunConfig::load(&dir.path().join("manifest.txt"), None).unwrap();
        assert_eq!(manifest.nx, 40);
    }

    #[test]
    fn rerun_from_manifest_is_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            initial: crate::config::InitialKind::Spinodal,
            seed: 99,
            amplitude: 0.05,
            ..small(&dir.path().join("a"))
        };
        cmd_run(&cfg).unwrap();
        let mut again = RunConfig::load(&dir.path().join("a/manifest.txt"), None).unwrap();
        again.output_dir = dir.path().join("b");
        cmd_run(&again).unwrap();
        let a = fs::read(dir.path().join("a/series.csv")).unwrap();
        let b = fs::read(dir.path().join("b/series.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn compare_merges_min_max_columns() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            schemes: vec![Scheme::Geps, Scheme::Jeps, Scheme::M0],
            ..small(dir.path())
        };
        let summaries = cmd_compare(&cfg).unwrap();
        assert_eq!(summaries.len(), 3);
        let text = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "step,time,min_phi_GEPS,max_phi_GEPS,min_phi_JEPS,max_phi_JEPS,min_phi_M0,max_phi_M0"
        );
        assert_eq!(text.lines().count(), 12);
        assert!(dir.path().join("JEPS/series.csv").exists());
    }

    #[test]
    fn converge_rejects_non_nested_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            sizes: vec![20, 30, 70],
            reference_size: 120,
            ..small(dir.path())
        };
        let err = cmd_converge(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), exit::CONFIG);
    }

    #[test]
    fn converge_single_size_leaves_rate_blank() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            sizes: vec![20],
            reference_size: 60,
            t_end: 3e-6,
            ..small(dir.path())
        };
        let rows = cmd_converge(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let text = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert!(line.starts_with("GEPS,20,") && line.ends_with(','), "{line}");
    }
}
