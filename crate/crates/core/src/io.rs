//! Run configuration files, state files and trajectory/summary output.
//!
//! Every file error carries the offending path. Output is a pure function
//! of its input, so reruns with the same configuration are byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::catalog::{exact_configuration, Family, SteadyStateSpec};
use crate::dynamics::{
    FrequencyKind, ModelParams, SimulationOptions, TrajectoryRecord, DEFAULT_STEADY_TOL,
};
use crate::error::{Error, Result};
use crate::geometry::{random_unit_configuration, seeded_rng, Configuration};

/// The only accepted value of [`RunConfig::schema`].
pub const RUN_CONFIG_SCHEMA: &str = "sphere-sync/run/1";

/// Trajectory CSV columns before the optional node coordinates.
pub const TRAJECTORY_HEADER: &str = "t,r,V_pair,V_dbody,max_speed";

/// Random natural frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencySpec {
    pub kind: FrequencyKind,
    #[serde(default)]
    pub magnitude: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for FrequencySpec {
    fn default() -> Self {
        FrequencySpec {
            kind: FrequencyKind::None,
            magnitude: 0.0,
            seed: 0,
        }
    }
}

/// Where the initial configuration comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Independent uniform points on the sphere.
    Random { seed: u64 },
    /// The family member matching the couplings when there is one, else the
    /// family's canonical member.
    Catalog { family: Family },
    /// A fully specified cataloged state.
    Spec(SteadyStateSpec),
    /// Every node at the last basis vector.
    Colocated,
    /// A state file, resolved relative to the run configuration.
    File { path: PathBuf },
}

/// Gaussian noise added to the initial state before renormalizing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub magnitude: f64,
    pub seed: u64,
}

/// Output destinations, relative to the run configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub trajectory: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub final_state: Option<PathBuf>,
}

fn default_t_max() -> f64 {
    1000.0
}

fn default_steady_tol() -> f64 {
    DEFAULT_STEADY_TOL
}

fn default_sample_stride() -> usize {
    100
}

/// One simulation, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub d: usize,
    pub n: usize,
    #[serde(default)]
    pub kappa2: f64,
    pub kappa_d: f64,
    #[serde(default)]
    pub frequencies: FrequencySpec,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_steady_tol")]
    pub steady_tol: f64,
    #[serde(default = "default_sample_stride")]
    pub sample_stride: usize,
    #[serde(default)]
    pub checkpoint_stride: Option<usize>,
    #[serde(default)]
    pub verify_every: Option<usize>,
    pub initial: InitialState,
    #[serde(default)]
    pub perturbation: Option<Perturbation>,
    #[serde(default)]
    pub output: OutputPaths,
}

impl RunConfig {
    /// A configuration with defaults for everything but the model.
    pub fn new(d: usize, n: usize, kappa2: f64, kappa_d: f64, initial: InitialState) -> Self {
        RunConfig {
            schema: RUN_CONFIG_SCHEMA.into(),
            d,
            n,
            kappa2,
            kappa_d,
            frequencies: FrequencySpec::default(),
            dt: None,
            t_max: default_t_max(),
            steady_tol: default_steady_tol(),
            sample_stride: default_sample_stride(),
            checkpoint_stride: None,
            verify_every: None,
            initial,
            perturbation: None,
            output: OutputPaths::default(),
        }
    }

    /// Reads and validates a configuration; relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut config: RunConfig = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let InitialState::File { path } = &mut self.initial {
            fix(path);
        }
        for p in [
            &mut self.output.trajectory,
            &mut self.output.summary,
            &mut self.output.final_state,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidParameter(msg));
        if self.schema != RUN_CONFIG_SCHEMA {
            return invalid(format!(
                "schema must be \"{RUN_CONFIG_SCHEMA}\", got \"{}\"",
                self.schema
            ));
        }
        if self.d < 2 {
            return Err(Error::DimensionTooSmall(self.d));
        }
        if self.n < self.d {
            return Err(Error::TooFewNodes {
                d: self.d,
                n: self.n,
            });
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return invalid(format!("dt must be positive, got {dt}"));
            }
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return invalid(format!("t_max must be positive, got {}", self.t_max));
        }
        if !(self.steady_tol >= 0.0) {
            return invalid(format!(
                "steady_tol must be non-negative, got {}",
                self.steady_tol
            ));
        }
        if self.sample_stride == 0
            || self.checkpoint_stride == Some(0)
            || self.verify_every == Some(0)
        {
            return invalid("strides must be positive".into());
        }
        if let InitialState::Catalog { family } = self.initial {
            if family.dim().is_some_and(|fd| fd != self.d) {
                return invalid(format!(
                    "family {} does not exist for d = {}",
                    family.name(),
                    self.d
                ));
            }
        }
        if let Some(p) = self.perturbation {
            if !(p.magnitude.is_finite() && p.magnitude >= 0.0) {
                return invalid(format!(
                    "perturbation magnitude must be non-negative, got {}",
                    p.magnitude
                ));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelParams> {
        let params = ModelParams::new(self.d, self.n, self.kappa2, self.kappa_d)?;
        match self.frequencies.kind {
            FrequencyKind::None => Ok(params),
            kind => params.with_random_frequencies(
                kind,
                self.frequencies.magnitude,
                self.frequencies.seed,
            ),
        }
    }

    pub fn options(&self) -> SimulationOptions {
        SimulationOptions {
            dt: self.dt,
            t_max: self.t_max,
            steady_tol: self.steady_tol,
            sample_stride: self.sample_stride,
            checkpoint_stride: self.checkpoint_stride,
            verify_every: self.verify_every,
        }
    }

    /// The initial configuration, perturbed if requested.
    pub fn initial_configuration(&self) -> Result<Configuration> {
        let (d, n) = (self.d, self.n);
        let base = match &self.initial {
            InitialState::Random { seed } => random_unit_configuration(d, n, *seed)?,
            InitialState::Catalog { family } => exact_configuration(&self.catalog_spec(*family)?)?,
            InitialState::Spec(spec) => {
                if spec.d != d || spec.n != n {
                    return Err(Error::InvalidParameter(format!(
                        "initial spec has d = {}, N = {} but the run has d = {d}, N = {n}",
                        spec.d, spec.n
                    )));
                }
                exact_configuration(spec)?
            }
            InitialState::Colocated => {
                let mut e = vec![0.0; d];
                e[d - 1] = 1.0;
                Configuration::new(d, vec![e; n])?
            }
            InitialState::File { path } => {
                let c = read_state(path)?;
                if c.dim() != d || c.len() != n {
                    return Err(Error::InvalidParameter(format!(
                        "{}: state has d = {}, N = {} but the run has d = {d}, N = {n}",
                        path.display(),
                        c.dim(),
                        c.len()
                    )));
                }
                c
            }
        };
        match self.perturbation {
            Some(p) if p.magnitude > 0.0 => perturb(&base, p),
            _ => Ok(base),
        }
    }

    fn catalog_spec(&self, family: Family) -> Result<SteadyStateSpec> {
        let (d, n) = (self.d, self.n);
        if let Ok(spec) = SteadyStateSpec::for_couplings(d, n, self.kappa2, self.kappa_d) {
            if spec.family == family {
                return Ok(spec);
            }
        }
        Ok(match family {
            Family::D2Splay | Family::D2Combined => SteadyStateSpec::d2_splay(n, 0.0),
            Family::D3Ring | Family::D3Combined => SteadyStateSpec::d3_ring(n),
            Family::D4Torus | Family::D4Combined => SteadyStateSpec::d4_torus(n),
            Family::D5Ring | Family::D5Combined => SteadyStateSpec::d5_ring(n),
            Family::BasisNd => SteadyStateSpec::basis(d),
        })
    }
}

/// Adds independent `N(0, magnitude²)` noise to every coordinate.
pub fn perturb(config: &Configuration, p: Perturbation) -> Result<Configuration> {
    let mut rng = seeded_rng(p.seed);
    let coords: Vec<Vec<f64>> = config
        .nodes()
        .map(|x| {
            x.iter()
                .map(|&c| c + p.magnitude * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    Configuration::normalized(config.dim(), coords)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    d: usize,
    nodes: Vec<Vec<f64>>,
}

/// Reads `{"d": …, "nodes": [[…], …]}`, normalizing every node.
pub fn read_state(path: &Path) -> Result<Configuration> {
    let text = read_text(path)?;
    let state: StateFile = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    Configuration::normalized(state.d, state.nodes)
}

pub fn write_state(config: &Configuration, path: &Path) -> Result<()> {
    write_json(
        &StateFile {
            d: config.dim(),
            nodes: config.to_nested(),
        },
        path,
    )
}

/// Trajectory CSV: one row per sample, with `x{i}_{k}` node columns filled
/// on checkpoint rows and left empty elsewhere.
pub fn trajectory_csv(record: &TrajectoryRecord) -> String {
    let shape = record.checkpoints.first().map(|(_, c)| (c.len(), c.dim()));
    let mut out = String::from(TRAJECTORY_HEADER);
    if let Some((n, d)) = shape {
        for i in 0..n {
            for k in 0..d {
                let _ = write!(out, ",x{i}_{k}");
            }
        }
    }
    out.push('\n');
    let mut checkpoints = record.checkpoints.iter().peekable();
    for s in 0..record.len() {
        let _ = write!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            record.times[s], record.r[s], record.v_pair[s], record.v_dbody[s], record.max_speed[s]
        );
        match checkpoints.peek() {
            Some((idx, config)) if *idx == s => {
                for c in config.as_flat() {
                    let _ = write!(out, ",{c:.16e}");
                }
                checkpoints.next();
            }
            _ => {
                if let Some((n, d)) = shape {
                    out.push_str(&",".repeat(n * d));
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn emit_trajectory(record: &TrajectoryRecord, path: &Path) -> Result<()> {
    write_text(path, &trajectory_csv(record))
}

/// Writes any serializable report as pretty-printed JSON.
pub fn emit_summary<T: Serialize>(report: &T, path: &Path) -> Result<()> {
    write_json(report, path)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}
