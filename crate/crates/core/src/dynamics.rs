//! The combined flow on the sphere and its fixed-step integrator.
//!
//! ```text
//! ẋ_i = Ω_i x_i + κ₂ P_i(X_av) + κ_d P_i(Y_i),   P_i(y) = y − x_i (x_i · y)
//! ```
//!
//! With `Ω_i = 0` this is the gradient flow of
//! `L = κ₂ 𝔙₂ / (2N) + κ_d 𝔙_d / (d N^{d-1})`, so `L` never decreases.
//! For `d = 2` the d-body term reads `κ_a sin(θ_j − θ_i)` with `κ_a = −κ_d`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, seeded_rng, Configuration};
use crate::kernels::{dbody_drive_naive, pairwise_drive_into, DBodyKernel, DriveField};

const ANTISYMMETRY_TOLERANCE: f64 = 1e-12;

/// Default node-speed threshold for a static configuration.
pub const DEFAULT_STEADY_TOL: f64 = 1e-9;
/// Default cross-check period for the naive d-body evaluator.
pub const DEFAULT_VERIFY_EVERY: usize = 1000;
/// Allowed fast/naive relative deviation during cross-checks.
pub const KERNEL_TOLERANCE: f64 = 1e-10;

/// How random natural frequencies are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrequencyKind {
    None,
    /// `d = 2`: `ω_i` uniform on `[−m, m]`.
    D2Scalars,
    /// `d = 3`: entries of `ω_i` uniform on `[−1, 1]`, rescaled so the
    /// largest `|ω_i|` equals `m`.
    D3Vectors,
    /// Any `d`: upper-triangle entries uniform on `[−1, 1]`, rescaled so the
    /// largest `‖Ω_i‖_F / √2` equals `m`.
    GeneralMatrix,
}

/// Couplings and per-node frequency matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    d: usize,
    n: usize,
    pub kappa2: f64,
    pub kappa_d: f64,
    /// `N` row-major `d × d` antisymmetric blocks, or `None` for `Ω_i = 0`.
    frequencies: Option<Vec<f64>>,
}

impl ModelParams {
    pub fn new(d: usize, n: usize, kappa2: f64, kappa_d: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        if n < d {
            return Err(Error::TooFewNodes { d, n });
        }
        if !(kappa2.is_finite() && kappa_d.is_finite()) {
            return Err(Error::InvalidParameter("couplings must be finite".into()));
        }
        Ok(ModelParams {
            d,
            n,
            kappa2,
            kappa_d,
            frequencies: None,
        })
    }

    /// `d = 2` in oscillator form: `κ_s` multiplies `sin(θ_j − θ_i)` in the
    /// pairwise term and `κ_a` the d-body one.
    pub fn planar(n: usize, kappa_s: f64, kappa_a: f64) -> Result<Self> {
        Self::new(2, n, kappa_s, -kappa_a)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn has_frequencies(&self) -> bool {
        self.frequencies.is_some()
    }

    /// Sets `Ω_i` from explicit matrices.
    pub fn with_frequency_matrices(mut self, matrices: &[DMatrix<f64>]) -> Result<Self> {
        let d = self.d;
        if matrices.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: matrices.len(),
            });
        }
        let mut flat = Vec::with_capacity(self.n * d * d);
        for (i, m) in matrices.iter().enumerate() {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.nrows(),
                });
            }
            let defect = (m + m.transpose()).amax();
            if defect > ANTISYMMETRY_TOLERANCE {
                return Err(Error::InvalidParameter(format!(
                    "frequency matrix {i} is not antisymmetric (defect {defect:e})"
                )));
            }
            for a in 0..d {
                for b in 0..d {
                    flat.push(m[(a, b)]);
                }
            }
        }
        self.frequencies = Some(flat);
        Ok(self)
    }

    /// The same `Ω` on every node.
    pub fn with_uniform_frequency(self, omega: &DMatrix<f64>) -> Result<Self> {
        let all = vec![omega.clone(); self.n];
        self.with_frequency_matrices(&all)
    }

    /// `d = 2`: `θ̇_i = ω_i` from the frequency term.
    pub fn with_frequency_scalars(self, omegas: &[f64]) -> Result<Self> {
        if self.d != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: self.d,
            });
        }
        let m: Vec<_> = omegas.iter().map(|&w| scalar_generator(w)).collect();
        self.with_frequency_matrices(&m)
    }

    /// `d = 3`: `Ω_i x = ω_i × x`.
    pub fn with_frequency_vectors(self, omegas: &[[f64; 3]]) -> Result<Self> {
        if self.d != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                found: self.d,
            });
        }
        let m: Vec<_> = omegas.iter().map(cross_generator).collect();
        self.with_frequency_matrices(&m)
    }

    /// Seeded random frequencies of the given kind and magnitude.
    pub fn with_random_frequencies(
        self,
        kind: FrequencyKind,
        magnitude: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(magnitude.is_finite() && magnitude >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "frequency magnitude must be non-negative, got {magnitude}"
            )));
        }
        let mut rng = seeded_rng(seed);
        let (d, n) = (self.d, self.n);
        match kind {
            FrequencyKind::None => Ok(self),
            FrequencyKind::D2Scalars => {
                let w: Vec<f64> = (0..n)
                    .map(|_| rng.random_range(-1.0..=1.0) * magnitude)
                    .collect();
                self.with_frequency_scalars(&w)
            }
            FrequencyKind::D3Vectors => {
                let mut w: Vec<[f64; 3]> = (0..n)
                    .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..=1.0)))
                    .collect();
                let largest = w.iter().map(|v| norm(v)).fold(0.0, f64::max);
                let scale = if largest > 0.0 {
                    magnitude / largest
                } else {
                    0.0
                };
                w.iter_mut().flatten().for_each(|c| *c *= scale);
                self.with_frequency_vectors(&w)
            }
            FrequencyKind::GeneralMatrix => {
                let mut m: Vec<DMatrix<f64>> = (0..n)
                    .map(|_| {
                        let mut g = DMatrix::zeros(d, d);
                        for a in 0..d {
                            for b in a + 1..d {
                                let v: f64 = rng.random_range(-1.0..=1.0);
                                g[(a, b)] = v;
                                g[(b, a)] = -v;
                            }
                        }
                        g
                    })
                    .collect();
                let largest = m.iter().map(|g| g.norm() / 2f64.sqrt()).fold(0.0, f64::max);
                let scale = if largest > 0.0 {
                    magnitude / largest
                } else {
                    0.0
                };
                m.iter_mut().for_each(|g| *g *= scale);
                self.with_frequency_matrices(&m)
            }
        }
    }

    /// `Ω_i` as a matrix.
    pub fn frequency(&self, i: usize) -> DMatrix<f64> {
        let d = self.d;
        match &self.frequencies {
            Some(f) => DMatrix::from_row_slice(d, d, &f[i * d * d..(i + 1) * d * d]),
            None => DMatrix::zeros(d, d),
        }
    }

    /// `max_i ‖Ω_i‖_F / √2`, which is `|ω_i|` for `d = 2, 3`.
    pub fn frequency_scale(&self) -> f64 {
        let d = self.d;
        self.frequencies.as_ref().map_or(0.0, |f| {
            f.chunks_exact(d * d)
                .map(|b| norm(b) / 2f64.sqrt())
                .fold(0.0, f64::max)
        })
    }

    /// `0.01 / max(|κ₂|, |κ_d|, ‖Ω‖, 1)`.
    pub fn default_dt(&self) -> f64 {
        0.01 / self
            .kappa2
            .abs()
            .max(self.kappa_d.abs())
            .max(self.frequency_scale())
            .max(1.0)
    }

    fn check_config(&self, config: &Configuration) -> Result<()> {
        if config.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: config.dim(),
            });
        }
        if config.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: config.len(),
            });
        }
        Ok(())
    }
}

fn scalar_generator(w: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -w, w, 0.0])
}

fn cross_generator(w: &[f64; 3]) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0],
    )
}

/// Reusable right-hand side and RK4 workspace.
#[derive(Debug, Clone)]
pub struct Engine {
    params: ModelParams,
    kernel: DBodyKernel,
    pair: Vec<f64>,
    dbody: Vec<f64>,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Engine {
    pub fn new(params: ModelParams) -> Self {
        let len = params.d * params.n;
        Engine {
            kernel: DBodyKernel::new(params.d),
            pair: vec![0.0; len],
            dbody: vec![0.0; len],
            k: std::array::from_fn(|_| vec![0.0; len]),
            stage: vec![0.0; len],
            params,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Evaluates the right-hand side at `coords` into `out`.
    pub fn rhs_into(&mut self, coords: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let d = p.d;
        pairwise_drive_into(d, coords, &mut self.pair);
        if p.kappa_d != 0.0 {
            self.kernel.drive(coords, &mut self.dbody);
        } else {
            self.dbody.iter_mut().for_each(|c| *c = 0.0);
        }
        for (i, ((x, o), (yp, yd))) in coords
            .chunks_exact(d)
            .zip(out.chunks_exact_mut(d))
            .zip(self.pair.chunks_exact(d).zip(self.dbody.chunks_exact(d)))
            .enumerate()
        {
            let mut xy = 0.0;
            for a in 0..d {
                let y = p.kappa2 * yp[a] + p.kappa_d * yd[a];
                o[a] = y;
                xy += x[a] * y;
            }
            for a in 0..d {
                o[a] -= x[a] * xy;
            }
            if let Some(f) = &p.frequencies {
                let block = &f[i * d * d..(i + 1) * d * d];
                for a in 0..d {
                    o[a] += dot(&block[a * d..(a + 1) * d], x);
                }
            }
        }
    }

    /// Evaluates `k1` at `coords` and returns `max_i ‖rhs_i‖`.
    fn first_stage(&mut self, coords: &[f64]) -> f64 {
        let mut k1 = std::mem::take(&mut self.k[0]);
        self.rhs_into(coords, &mut k1);
        self.k[0] = k1;
        max_node_norm(self.params.d, &self.k[0])
    }

    /// Completes an RK4 step from the `k1` of [`Engine::first_stage`], then
    /// renormalizes. Returns the largest renormalization correction.
    fn finish_step(&mut self, coords: &mut [f64], dt: f64, t: f64) -> Result<f64> {
        let weights = [0.5, 0.5, 1.0];
        for s in 0..3 {
            let h = weights[s] * dt;
            for ((st, x), k) in self.stage.iter_mut().zip(coords.iter()).zip(&self.k[s]) {
                *st = x + h * k;
            }
            let stage = std::mem::take(&mut self.stage);
            let mut next = std::mem::take(&mut self.k[s + 1]);
            self.rhs_into(&stage, &mut next);
            self.stage = stage;
            self.k[s + 1] = next;
        }
        for (idx, x) in coords.iter_mut().enumerate() {
            *x += dt / 6.0
                * (self.k[0][idx] + 2.0 * self.k[1][idx] + 2.0 * self.k[2][idx] + self.k[3][idx]);
        }
        let d = self.params.d;
        let mut correction = 0.0_f64;
        for node in coords.chunks_exact_mut(d) {
            let len = norm(node);
            if !(len.is_finite() && len > 0.0) {
                return Err(Error::NonFinite { t: t + dt });
            }
            correction = correction.max((len - 1.0).abs());
            node.iter_mut().for_each(|c| *c /= len);
        }
        Ok(correction)
    }

    /// One RK4 step of size `dt` on `coords`, followed by renormalization.
    pub fn step_in_place(&mut self, coords: &mut [f64], dt: f64) -> Result<f64> {
        self.first_stage(coords);
        self.finish_step(coords, dt, 0.0)
    }

    /// `𝔙_d` at `coords`; refills the kernel tables.
    fn dbody_potential(&mut self, coords: &[f64]) -> f64 {
        let mut scratch = std::mem::take(&mut self.dbody);
        self.kernel.drive(coords, &mut scratch);
        self.dbody = scratch;
        self.kernel.last_potential(coords)
    }
}

fn max_node_norm(d: usize, v: &[f64]) -> f64 {
    v.chunks_exact(d).map(norm).fold(0.0, f64::max)
}

/// The right-hand side at `config`.
pub fn rhs(config: &Configuration, params: &ModelParams) -> Result<DriveField> {
    params.check_config(config)?;
    let mut engine = Engine::new(params.clone());
    let mut out = vec![0.0; config.as_flat().len()];
    engine.rhs_into(config.as_flat(), &mut out);
    Ok(DriveField::from_flat(config.dim(), out))
}

/// One classical RK4 step followed by renormalization of every node.
pub fn step(config: &Configuration, params: &ModelParams, dt: f64) -> Result<Configuration> {
    params.check_config(config)?;
    check_dt(dt)?;
    let mut engine = Engine::new(params.clone());
    let mut coords = config.as_flat().to_vec();
    engine.step_in_place(&mut coords, dt)?;
    Ok(Configuration::from_flat_unchecked(config.dim(), coords))
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    Ok(())
}

/// Integration controls for [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    /// Step size; `None` uses [`ModelParams::default_dt`].
    pub dt: Option<f64>,
    pub t_max: f64,
    /// Stop once `max_i ‖rhs_i‖` falls below this.
    pub steady_tol: f64,
    /// Steps between recorded samples.
    pub sample_stride: usize,
    /// Samples between stored configurations; `None` stores none.
    pub checkpoint_stride: Option<usize>,
    /// Steps between fast/naive d-body cross-checks; `None` disables them.
    pub verify_every: Option<usize>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            dt: None,
            t_max: 1000.0,
            steady_tol: DEFAULT_STEADY_TOL,
            sample_stride: 100,
            checkpoint_stride: None,
            verify_every: None,
        }
    }
}

impl SimulationOptions {
    pub fn with_t_max(t_max: f64) -> Self {
        SimulationOptions {
            t_max,
            ..Default::default()
        }
    }
}

/// Sampled observables of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Order parameter `‖X_av‖`.
    pub r: Vec<f64>,
    pub v_pair: Vec<f64>,
    pub v_dbody: Vec<f64>,
    pub max_speed: Vec<f64>,
    /// Stored configurations, with the index of their sample.
    pub checkpoints: Vec<(usize, Configuration)>,
    /// Largest per-step renormalization correction over the run.
    pub max_norm_correction: f64,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_r(&self) -> f64 {
        self.r.last().copied().unwrap_or(f64::NAN)
    }

    /// `max r − min r` over the samples with `t ≥ (1 − fraction) t_end`.
    pub fn trailing_band(&self, fraction: f64) -> f64 {
        let Some(&t_end) = self.times.last() else {
            return 0.0;
        };
        let start = t_end * (1.0 - fraction);
        let window = self
            .times
            .iter()
            .zip(&self.r)
            .filter(|(t, _)| **t >= start)
            .map(|(_, r)| *r);
        let (lo, hi) = window.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r), hi.max(r))
        });
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }
}

/// Result of [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    pub record: TrajectoryRecord,
    pub final_config: Configuration,
    /// The run stopped because the steady tolerance was met.
    pub converged: bool,
    pub steps: usize,
    pub final_time: f64,
    pub dt: f64,
}

/// Integrates from `initial` until the configuration is static or `t_max`
/// is reached.
pub fn simulate(
    initial: &Configuration,
    params: &ModelParams,
    options: &SimulationOptions,
) -> Result<SimulationOutcome> {
    params.check_config(initial)?;
    let dt = options.dt.unwrap_or_else(|| params.default_dt());
    check_dt(dt)?;
    if !(options.t_max.is_finite() && options.t_max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "t_max must be positive, got {}",
            options.t_max
        )));
    }
    let stride = options.sample_stride.max(1);
    let total_steps = (options.t_max / dt - 1e-9).ceil().max(1.0) as usize;
    let (d, n) = (params.d, params.n);

    let mut engine = Engine::new(params.clone());
    let mut coords = initial.as_flat().to_vec();
    let mut record = TrajectoryRecord::default();
    let converged;
    let mut step = 0usize;

    loop {
        let t = step as f64 * dt;
        let speed = engine.first_stage(&coords);
        if !speed.is_finite() {
            return Err(Error::NonFinite { t });
        }
        let steady = speed < options.steady_tol;
        let last = steady || step >= total_steps;
        if step.is_multiple_of(stride) || last {
            let avg_norm = norm(&crate::geometry::average_position(d, &coords));
            let v_dbody = engine.dbody_potential(&coords);
            let sample = record.times.len();
            record.times.push(t);
            record.r.push(avg_norm);
            record.v_pair.push((n * n) as f64 * avg_norm * avg_norm);
            record.v_dbody.push(v_dbody);
            record.max_speed.push(speed);
            if let Some(every) = options.checkpoint_stride {
                if sample % every.max(1) == 0 || last {
                    record.checkpoints.push((
                        sample,
                        Configuration::from_flat_unchecked(d, coords.clone()),
                    ));
                }
            }
        }
        if last {
            converged = steady;
            break;
        }
        let correction = engine.finish_step(&mut coords, dt, t)?;
        record.max_norm_correction = record.max_norm_correction.max(correction);
        step += 1;
        if let Some(every) = options.verify_every {
            if params.kappa_d != 0.0 && step.is_multiple_of(every.max(1)) {
                cross_check(&mut engine, &coords, step)?;
            }
        }
    }

    Ok(SimulationOutcome {
        record,
        final_config: Configuration::from_flat_unchecked(d, coords),
        converged,
        steps: step,
        final_time: step as f64 * dt,
        dt,
    })
}

fn cross_check(engine: &mut Engine, coords: &[f64], step: usize) -> Result<()> {
    let d = engine.params.d;
    let config = Configuration::from_flat_unchecked(d, coords.to_vec());
    let naive = dbody_drive_naive(&config)?;
    let mut fast = vec![0.0; coords.len()];
    engine.kernel.drive(coords, &mut fast);
    let deviation = DriveField::from_flat(d, fast).relative_deviation(&naive);
    if deviation > KERNEL_TOLERANCE {
        return Err(Error::KernelMismatch { step, deviation });
    }
    Ok(())
}

/// Outcome of [`monotonicity_audit`].
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    /// `κ₂ 𝔙₂ / (2N) + κ_d 𝔙_d / (d N^{d-1})` at every sample.
    pub lyapunov: Vec<f64>,
    /// Largest decrease between consecutive samples (zero if none).
    pub worst_dip: f64,
    pub monotone: bool,
}

/// Largest tolerated decrease of the Lyapunov function between samples.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-8;

/// Checks that the combined potential never decreases along a run with
/// `Ω_i = 0`.
pub fn monotonicity_audit(record: &TrajectoryRecord, params: &ModelParams) -> MonotonicityReport {
    let (d, n) = (params.d as f64, params.n as f64);
    let dbody_norm = d * n.powf(d - 1.0);
    let lyapunov: Vec<f64> = record
        .v_pair
        .iter()
        .zip(&record.v_dbody)
        .map(|(vp, vd)| params.kappa2 * vp / (2.0 * n) + params.kappa_d * vd / dbody_norm)
        .collect();
    let worst_dip = lyapunov.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    MonotonicityReport {
        monotone: worst_dip < MONOTONICITY_TOLERANCE,
        worst_dip,
        lyapunov,
    }
}

/// Bisects for the coupling at which `synchronized` switches from false to
/// true, given `synchronized(lo) == false` and `synchronized(hi) == true`.
/// Returns the final bracket.
pub fn bisect_transition(
    mut lo: f64,
    mut hi: f64,
    tolerance: f64,
    mut synchronized: impl FnMut(f64) -> Result<bool>,
) -> Result<(f64, f64)> {
    if synchronized(lo)? || !synchronized(hi)? {
        return Err(Error::InvalidParameter(format!(
            "[{lo}, {hi}] does not bracket a transition"
        )));
    }
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if synchronized(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}
