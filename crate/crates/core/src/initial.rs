//! Initial phase fields.
//!
//! Spinodal perturbations use `ChaCha8Rng::seed_from_u64(seed)` and draw one
//! uniform sample on `[-amplitude, amplitude]` per node, in node order. The
//! stream is stable across platforms and `rand_chacha` releases within 0.9.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::fmt17;
use crate::error::{Error, Result};
use crate::fespace::NodalField;
use crate::mesh::StructuredMesh;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    TwoBalls { eta: f64 },
    Spinodal { amplitude: f64, seed: u64 },
    File { path: PathBuf },
}

impl InitialSpec {
    pub fn build(&self, mesh: &StructuredMesh) -> Result<NodalField> {
        match self {
            InitialSpec::TwoBalls { eta } => two_balls(mesh, *eta),
            InitialSpec::Spinodal { amplitude, seed } => spinodal(mesh, *amplitude, *seed),
            InitialSpec::File { path } => load_field(path, mesh),
        }
    }
}

/// Two tanh-profile "balls" on the unit interval:
/// `1 - (tanh((x - 0.38) / (sqrt 2 eta)) - tanh((x - 0.87) / (sqrt 2 eta))) / 2`,
/// i.e. `phi = 1` on `[0, 0.38)` and `(0.87, 1]`, `phi = 0` in between.
pub fn two_balls(mesh: &StructuredMesh, eta: f64) -> Result<NodalField> {
    if mesh.dim() != 1 {
        return Err(Error::Unsupported("the two-ball profile is defined on 1D meshes only".into()));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::config("eta", format!("must be positive, got {eta}")));
    }
    let s = std::f64::consts::SQRT_2 * eta;
    Ok(NodalField::from_fn(mesh, |c| {
        let x = c[0];
        1.0 - 0.5 * (((x - 0.3) - 0.08) / s).tanh() + 0.5 * (((x - 0.72) - 0.15) / s).tanh()
    }))
}

/// `0.5 + u_i`, `u_i` uniform on `[-amplitude, amplitude]`.
pub fn spinodal(mesh: &StructuredMesh, amplitude: f64, seed: u64) -> Result<NodalField> {
    if !(0.0..0.5).contains(&amplitude) {
        return Err(Error::config("amplitude", format!("must lie in [0, 0.5), got {amplitude}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..mesh.num_nodes())
        .map(|_| {
            if amplitude == 0.0 {
                0.5
            } else {
                0.5 + rng.random_range(-amplitude..=amplitude)
            }
        })
        .collect();
    NodalField::new(mesh, values)
}

/// Reads one value per line in node order. Blank lines are skipped.
pub fn load_field(path: &Path, mesh: &StructuredMesh) -> Result<NodalField> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::with_capacity(mesh.num_nodes());
    for (i, line) in text.lines().enumerate() {
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        let v: f64 = tok.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: format!("not a number: `{tok}`"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("non-finite value `{tok}`"),
            });
        }
        values.push(v);
    }
    NodalField::new(mesh, values)
}

pub fn save_field(path: &Path, field: &NodalField) -> Result<()> {
    let mut out = String::with_capacity(24 * field.len());
    for &v in field.values() {
        writeln!(out, "{}", fmt17(v)).expect("writing to a String");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
