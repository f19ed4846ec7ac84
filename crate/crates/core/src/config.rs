//! Run configuration: flat `key = value` text, presets and validation.
//!
//! Lines are `key = value`; `#` starts a comment. Unknown keys are errors.
//! Lists (`sizes`, `schemes`) are comma separated.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::diagnostics::ConvergenceSetup;
use crate::error::{Error, Result};
use crate::initial::InitialSpec;
use crate::mesh::StructuredMesh;
use crate::schemes::{Scheme, SchemeParams};
use crate::simulation::RunOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    TwoBalls,
    Spinodal,
    File,
}

impl InitialKind {
    fn name(self) -> &'static str {
        match self {
            InitialKind::TwoBalls => "two_balls",
            InitialKind::Spinodal => "spinodal",
            InitialKind::File => "file",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub eta: f64,
    pub eps: f64,
    pub dim: usize,
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub linear_rtol: f64,
    pub abort_on_fail: bool,
    pub initial: InitialKind,
    pub amplitude: f64,
    pub seed: u64,
    pub initial_path: Option<PathBuf>,
    pub record_every: usize,
    pub snapshot_every: usize,
    pub output_dir: PathBuf,
    /// Convergence study sizes.
    pub sizes: Vec<usize>,
    pub reference_size: usize,
    pub reference_scheme: Scheme,
    /// Schemes run by `compare`.
    pub schemes: Vec<Scheme>,
}

const REQUIRED: [&str; 5] = ["scheme", "eta", "nx", "dt", "t_end"];

impl Default for RunConfig {
    fn default() -> Self {
        let p = SchemeParams::default();
        Self {
            scheme: p.scheme,
            eta: p.eta,
            eps: p.eps,
            dim: 1,
            nx: 1000,
            ny: 0,
            dt: p.dt,
            t_end: 0.0,
            picard_tol: p.picard_tol,
            picard_max_iter: p.picard_max_iter,
            linear_rtol: p.linear_rtol,
            abort_on_fail: false,
            initial: InitialKind::TwoBalls,
            amplitude: 0.01,
            seed: 0,
            initial_path: None,
            record_every: 1,
            snapshot_every: 0,
            output_dir: PathBuf::from("out"),
            sizes: vec![2000, 3000, 4000],
            reference_size: 12000,
            reference_scheme: Scheme::Geps,
            schemes: vec![Scheme::Geps, Scheme::Jeps, Scheme::M0],
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Named parameter sets of the four paper examples, at desk scale.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self::default();
        let cfg = match name {
            // Example I: boundedness of the two-ball configuration.
            "example1" => Self {
                scheme: Scheme::Geps,
                eta: 0.005,
                eps: 1e-20,
                nx: 1000,
                dt: 1e-10,
                t_end: 1e-7,
                initial: InitialKind::TwoBalls,
                ..base
            },
            // Example II: spatial convergence, same data as Example I.
            "example2" => Self {
                sizes: vec![2000, 3000, 4000],
                reference_size: 12000,
                reference_scheme: Scheme::Geps,
                record_every: 0,
                ..Self::preset("example1")?
            },
            // Example III: 1D spinodal decomposition.
            "example3" => Self {
                scheme: Scheme::Geps,
                eta: 0.005,
                eps: 1e-20,
                nx: 1000,
                dt: 1e-8,
                t_end: 1e-3,
                initial: InitialKind::Spinodal,
                amplitude: 0.01,
                record_every: 100,
                ..base
            },
            // Example IV: 2D spinodal decomposition, three mobilities.
            "example4" => Self {
                scheme: Scheme::Geps,
                eta: 0.01,
                eps: 1e-8,
                dim: 2,
                nx: 100,
                ny: 100,
                dt: 1e-9,
                t_end: 5e-5,
                initial: InitialKind::Spinodal,
                amplitude: 0.01,
                record_every: 100,
                schemes: vec![Scheme::Geps, Scheme::Jeps, Scheme::Const],
                ..base
            },
            other => {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset `{other}` (expected example1..example4)"),
                ))
            }
        };
        Ok(cfg)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "scheme" => self.scheme = value.parse()?,
            "eta" => self.eta = num(key, value)?,
            "eps" => self.eps = num(key, value)?,
            "dim" => self.dim = num(key, value)?,
            "nx" => self.nx = num(key, value)?,
            "ny" => self.ny = num(key, value)?,
            "dt" => self.dt = num(key, value)?,
            "t_end" => self.t_end = num(key, value)?,
            "picard_tol" => self.picard_tol = num(key, value)?,
            "picard_max_iter" => self.picard_max_iter = num(key, value)?,
            "linear_rtol" => self.linear_rtol = num(key, value)?,
            "abort_on_fail" => self.abort_on_fail = num(key, value)?,
            "initial" => {
                self.initial = match value {
                    "two_balls" => InitialKind::TwoBalls,
                    "spinodal" => InitialKind::Spinodal,
                    "file" => InitialKind::File,
                    _ => return Err(Error::config(key, format!("unknown initial condition `{value}`"))),
                }
            }
            "amplitude" => self.amplitude = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "initial_path" => self.initial_path = Some(PathBuf::from(value)),
            "record_every" => self.record_every = num(key, value)?,
            "snapshot_every" => self.snapshot_every = num(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "sizes" => self.sizes = list(key, value)?,
            "reference_size" => self.reference_size = num(key, value)?,
            "reference_scheme" => self.reference_scheme = value.parse()?,
            "schemes" => {
                self.schemes = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Parses `key = value` text on top of `base`. Without a base every
    /// required key must be present.
    pub fn parse_str(text: &str, base: Option<RunConfig>) -> Result<Self> {
        let need_required = base.is_none();
        let mut cfg = base.unwrap_or_default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", i + 1), format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            cfg.set(key, value)?;
            seen.push(key.to_string());
        }
        if need_required {
            if let Some(missing) = REQUIRED.iter().find(|k| !seen.iter().any(|s| s == *k)) {
                return Err(Error::config(*missing, "required key is missing"));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: Option<RunConfig>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text, base)
    }

    pub fn scheme_params(&self) -> SchemeParams {
        SchemeParams {
            scheme: self.scheme,
            eta: self.eta,
            eps: self.eps,
            dt: self.dt,
            picard_tol: self.picard_tol,
            picard_max_iter: self.picard_max_iter,
            linear_rtol: self.linear_rtol,
        }
    }

    /// `t_end / dt`, which must be a whole number within `1e-9` relative.
    pub fn steps(&self) -> Result<usize> {
        let ratio = self.t_end / self.dt;
        let steps = ratio.round();
        if !(ratio.is_finite() && ratio >= 0.0) || (ratio - steps).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::config(
                "t_end",
                format!("t_end / dt = {ratio} is not a whole number of steps"),
            ));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme_params().validate()?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("t_end", "must be non-negative"));
        }
        self.steps()?;
        match self.dim {
            1 => {}
            2 => {
                if self.initial == InitialKind::TwoBalls {
                    return Err(Error::config("initial", "two_balls is a 1D initial condition"));
                }
            }
            d => return Err(Error::config("dim", format!("must be 1 or 2, got {d}"))),
        }
        if self.nx < 2 {
            return Err(Error::config("nx", "must be at least 2"));
        }
        if self.dim == 2 && self.ny() < 2 {
            return Err(Error::config("ny", "must be at least 2"));
        }
        if !(0.0..0.5).contains(&self.amplitude) {
            return Err(Error::config("amplitude", "must lie in [0, 0.5)"));
        }
        if self.initial == InitialKind::File && self.initial_path.is_none() {
            return Err(Error::config("initial_path", "required for initial = file"));
        }
        if self.schemes.is_empty() {
            return Err(Error::config("schemes", "at least one scheme is required"));
        }
        Ok(())
    }

    /// `ny`, defaulting to `nx` when unset.
    pub fn ny(&self) -> usize {
        if self.ny == 0 {
            self.nx
        } else {
            self.ny
        }
    }

    pub fn mesh(&self) -> Result<StructuredMesh> {
        match self.dim {
            1 => StructuredMesh::interval(self.nx),
            _ => StructuredMesh::grid(self.nx, self.ny()),
        }
    }

    pub fn initial_spec(&self) -> InitialSpec {
        match self.initial {
            InitialKind::TwoBalls => InitialSpec::TwoBalls { eta: self.eta },
            InitialKind::Spinodal => InitialSpec::Spinodal {
                amplitude: self.amplitude,
                seed: self.seed,
            },
            InitialKind::File => InitialSpec::File {
                path: self.initial_path.clone().unwrap_or_default(),
            },
        }
    }

    pub fn run_options(&self) -> Result<RunOptions> {
        Ok(RunOptions {
            steps: self.steps()?,
            record_every: self.record_every,
            snapshot_every: self.snapshot_every,
            abort_on_fail: self.abort_on_fail,
        })
    }

    pub fn convergence_setup(&self) -> Result<ConvergenceSetup> {
        if self.dim != 1 {
            return Err(Error::config("dim", "convergence studies run on 1D meshes"));
        }
        let setup = ConvergenceSetup {
            params: self.scheme_params(),
            reference_scheme: self.reference_scheme,
            sizes: self.sizes.clone(),
            reference_size: self.reference_size,
            steps: self.steps()?,
        };
        setup.validate()?;
        Ok(setup)
    }

    /// Every key with its resolved value, in a form [`RunConfig::parse_str`]
    /// reads back to an identical configuration.
    pub fn to_manifest(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("writing to a String");
        kv("scheme", self.scheme.to_string());
        kv("eta", format!("{:e}", self.eta));
        kv("eps", format!("{:e}", self.eps));
        kv("dim", self.dim.to_string());
        kv("nx", self.nx.to_string());
        if self.dim == 2 {
            kv("ny", self.ny().to_string());
        }
        kv("dt", format!("{:e}", self.dt));
        kv("t_end", format!("{:e}", self.t_end));
        kv("picard_tol", format!("{:e}", self.picard_tol));
        kv("picard_max_iter", self.picard_max_iter.to_string());
        kv("linear_rtol", format!("{:e}", self.linear_rtol));
        kv("abort_on_fail", self.abort_on_fail.to_string());
        kv("initial", self.initial.name().to_string());
        kv("amplitude", format!("{:e}", self.amplitude));
        kv("seed", self.seed.to_string());
        if let Some(p) = &self.initial_path {
            kv("initial_path", p.display().to_string());
        }
        kv("record_every", self.record_every.to_string());
        kv("snapshot_every", self.snapshot_every.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("sizes", join(&self.sizes));
        kv("reference_size", self.reference_size.to_string());
        kv("reference_scheme", self.reference_scheme.to_string());
        kv("schemes", join(&self.schemes));
        s
    }
}
