//! The three-node, pure three-body system on S² in rotation invariants.
//!
//! With `κ₃/N² = 1`, the pair products obey `ẋ_ij = −4 x_ij x₁₂₃`, so
//! `c₁ = x₂₃/x₁₂` and `c₂ = x₁₃/x₁₂` are constants of motion. Writing
//! `u = x₁₂`, the Gram identity gives `x₁₂₃² = p(u)` with
//!
//! ```text
//! p(u) = 1 − (1 + c₁² + c₂²) u² + 2 c₁ c₂ u³,
//! u̇ = −4 u x₁₂₃,    ẋ₁₂₃ = −2 u p′(u).
//! ```
//!
//! `u` is trapped between the roots `r₋ ∈ [−1, 0)` and `r₊ ∈ (0, 1]` of `p`
//! and decays to zero while `x₁₂₃ → ±1`.

use nalgebra::Matrix3;
use serde::Serialize;

use crate::dynamics::{simulate, ModelParams, SimulationOptions};
use crate::error::{Error, Result};
use crate::geometry::{det_columns, dot, Configuration};

/// Below this `|x₁₂|` the reduction coordinates are unusable.
const DEGENERATE_PAIR: f64 = 1e-14;
/// Allowed `|x₁₂₃² − p(u)|` for an initial reduced state.
const CONSISTENCY_TOLERANCE: f64 = 1e-10;

/// The three-body coupling that makes `κ₃/N² = 1` for three nodes.
pub const FULL_KAPPA3: f64 = 9.0;

/// `(u, x₁₂₃)` together with the constants `c₁`, `c₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedState {
    pub u: f64,
    pub x123: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ReducedState {
    /// Starts at `u0` with `x₁₂₃ = ±√p(u0)`, sign taken from `orientation`.
    pub fn on_shell(u0: f64, c1: f64, c2: f64, orientation: f64) -> Result<Self> {
        let p = cubic_p(u0, c1, c2);
        if p < 0.0 {
            return Err(Error::InconsistentReducedState(-p));
        }
        Ok(ReducedState {
            u: u0,
            x123: p.sqrt().copysign(orientation),
            c1,
            c2,
        })
    }

    /// `x₁₂₃² − p(u)`.
    pub fn shell_defect(&self) -> f64 {
        self.x123 * self.x123 - cubic_p(self.u, self.c1, self.c2)
    }
}

/// Reads `(c₁, c₂, u₀, x₁₂₃⁰)` off an initial triple.
pub fn constants_from_initial(x1: &[f64], x2: &[f64], x3: &[f64]) -> Result<ReducedState> {
    for x in [x1, x2, x3] {
        if x.len() != 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                found: x.len(),
            });
        }
    }
    let (x12, x13, x23) = (dot(x1, x2), dot(x1, x3), dot(x2, x3));
    if x12.abs() < DEGENERATE_PAIR {
        return Err(Error::DegenerateReduction {
            already_synchronized: x13.abs() < DEGENERATE_PAIR && x23.abs() < DEGENERATE_PAIR,
        });
    }
    Ok(ReducedState {
        u: x12,
        x123: det_columns(3, &[x1, x2, x3]),
        c1: x23 / x12,
        c2: x13 / x12,
    })
}

/// `p(u) = 1 − (1 + c₁² + c₂²) u² + 2 c₁ c₂ u³`.
pub fn cubic_p(u: f64, c1: f64, c2: f64) -> f64 {
    1.0 - (1.0 + c1 * c1 + c2 * c2) * u * u + 2.0 * c1 * c2 * u * u * u
}

/// `p′(u)`.
pub fn cubic_p_prime(u: f64, c1: f64, c2: f64) -> f64 {
    -2.0 * (1.0 + c1 * c1 + c2 * c2) * u + 6.0 * c1 * c2 * u * u
}

/// `V(u) = 8 u² p(u)`, so that `u̇² = 2V(u)`.
pub fn potential_v(u: f64, c1: f64, c2: f64) -> f64 {
    8.0 * u * u * cubic_p(u, c1, c2)
}

/// Roots of `p`: the barriers `r₋ ≤ u ≤ r₊` and the outer root `r₃`
/// (`None` when `c₁c₂ = 0` and `p` is quadratic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CubicRoots {
    pub r_minus: f64,
    pub r_plus: f64,
    pub r3: Option<f64>,
}

/// Finds the roots of `p` nearest to zero on each side by bracketed
/// bisection, then `r₃ = −1/(2 c₁ c₂ r₋ r₊)`.
pub fn cubic_roots(c1: f64, c2: f64) -> CubicRoots {
    let p = |u: f64| cubic_p(u, c1, c2);
    let first_root = |direction: f64| {
        // p(0) = 1 and p(±1) ≤ 0, so a sign change exists within the unit step
        const SCAN: usize = 4096;
        let mut lo = 0.0;
        let mut hi = direction;
        for k in 1..=SCAN {
            let u = direction * k as f64 / SCAN as f64;
            if p(u) <= 0.0 {
                hi = u;
                break;
            }
            lo = u;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if p(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let r_minus = first_root(-1.0);
    let r_plus = first_root(1.0);
    let r3 = if c1 * c2 == 0.0 {
        None
    } else {
        Some(-1.0 / (2.0 * c1 * c2 * r_minus * r_plus))
    };
    CubicRoots {
        r_minus,
        r_plus,
        r3,
    }
}

/// Sampled reduced trajectory.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ReducedTrajectory {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub x123: Vec<f64>,
}

fn reduced_rhs(u: f64, x: f64, c1: f64, c2: f64) -> (f64, f64) {
    (-4.0 * u * x, -2.0 * u * cubic_p_prime(u, c1, c2))
}

/// Integrates `(u, x₁₂₃)` with fixed-step RK4, recording every
/// `sample_stride` steps and the final state.
pub fn evolve_reduced(
    initial: &ReducedState,
    dt: f64,
    t_max: f64,
    sample_stride: usize,
) -> Result<ReducedTrajectory> {
    if !(dt > 0.0 && t_max > 0.0) {
        return Err(Error::InvalidParameter(
            "dt and t_max must be positive".into(),
        ));
    }
    let defect = initial.shell_defect();
    if defect.abs() > CONSISTENCY_TOLERANCE {
        return Err(Error::InconsistentReducedState(defect));
    }
    let (c1, c2) = (initial.c1, initial.c2);
    let steps = (t_max / dt - 1e-9).ceil() as usize;
    let stride = sample_stride.max(1);
    let (mut u, mut x) = (initial.u, initial.x123);
    let mut out = ReducedTrajectory::default();
    for step in 0..=steps {
        if step % stride == 0 || step == steps {
            out.t.push(step as f64 * dt);
            out.u.push(u);
            out.x123.push(x);
        }
        if step == steps {
            break;
        }
        let k1 = reduced_rhs(u, x, c1, c2);
        let k2 = reduced_rhs(u + 0.5 * dt * k1.0, x + 0.5 * dt * k1.1, c1, c2);
        let k3 = reduced_rhs(u + 0.5 * dt * k2.0, x + 0.5 * dt * k2.1, c1, c2);
        let k4 = reduced_rhs(u + dt * k3.0, x + dt * k3.1, c1, c2);
        u += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        x += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        if !(u.is_finite() && x.is_finite()) {
            return Err(Error::NonFinite {
                t: (step + 1) as f64 * dt,
            });
        }
    }
    Ok(out)
}

/// A triple of unit vectors with `x₁₂ = u`, `x₂₃ = c₁u`, `x₁₃ = c₂u`, and
/// `x₁₂₃` of the sign of `orientation`.
pub fn triple_from_invariants(u: f64, c1: f64, c2: f64, orientation: f64) -> Result<Configuration> {
    let gram = Matrix3::new(1.0, u, c2 * u, u, 1.0, c1 * u, c2 * u, c1 * u, 1.0);
    let chol = gram.cholesky().ok_or_else(|| {
        Error::InvalidParameter(format!(
            "invariants (u = {u}, c1 = {c1}, c2 = {c2}) admit no non-degenerate triple"
        ))
    })?;
    let l = chol.l();
    let flip = if orientation < 0.0 { -1.0 } else { 1.0 };
    let nodes = (0..3)
        .map(|i| vec![l[(i, 0)], l[(i, 1)], flip * l[(i, 2)]])
        .collect();
    Configuration::normalized(3, nodes)
}

/// One row of a reduced-versus-full comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonSample {
    pub t: f64,
    pub u_reduced: f64,
    pub x123_reduced: f64,
    pub u_full: f64,
    pub x123_full: f64,
}

/// Outcome of [`compare_with_full`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionComparison {
    pub samples: Vec<ComparisonSample>,
    pub max_u_deviation: f64,
    pub max_x123_deviation: f64,
    /// Largest drift of `c₁`, `c₂` along the full flow.
    pub max_constant_drift: f64,
    /// `max |x_ij − δ_ij|` of the final full configuration.
    pub final_gram_deviation: f64,
    pub roots: CubicRoots,
    pub initial: ReducedState,
}

/// Runs the full nine-dimensional flow and the reduced flow side by side.
pub fn compare_with_full(
    initial: &Configuration,
    dt: f64,
    t_max: f64,
    sample_stride: usize,
) -> Result<ReductionComparison> {
    if initial.dim() != 3 || initial.len() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: initial.len(),
        });
    }
    let start = constants_from_initial(initial.node(0), initial.node(1), initial.node(2))?;
    let reduced = evolve_reduced(&start, dt, t_max, sample_stride)?;

    let params = ModelParams::new(3, 3, 0.0, FULL_KAPPA3)?;
    let options = SimulationOptions {
        dt: Some(dt),
        t_max,
        steady_tol: 0.0,
        sample_stride,
        checkpoint_stride: Some(1),
        verify_every: None,
    };
    let full = simulate(initial, &params, &options)?;

    let mut samples = Vec::with_capacity(reduced.t.len());
    let (mut du, mut dx, mut dc) = (0.0_f64, 0.0_f64, 0.0_f64);
    // both integrators sample on the same step grid
    for (((t, u_red), x_red), (idx, cfg)) in reduced
        .t
        .iter()
        .zip(&reduced.u)
        .zip(&reduced.x123)
        .zip(&full.record.checkpoints)
    {
        debug_assert!((full.record.times[*idx] - t).abs() < 0.5 * dt);
        let (x1, x2, x3) = (cfg.node(0), cfg.node(1), cfg.node(2));
        let u_full = dot(x1, x2);
        let x123_full = det_columns(3, &[x1, x2, x3]);
        du = du.max((u_full - u_red).abs());
        dx = dx.max((x123_full - x_red).abs());
        // compare c·u against the measured pair products; well conditioned even as u → 0
        dc = dc
            .max((dot(x2, x3) - start.c1 * u_full).abs())
            .max((dot(x1, x3) - start.c2 * u_full).abs());
        samples.push(ComparisonSample {
            t: *t,
            u_reduced: *u_red,
            x123_reduced: *x_red,
            u_full,
            x123_full,
        });
    }
    let last = &full.final_config;
    let mut gram_dev = 0.0_f64;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            gram_dev = gram_dev.max((dot(last.node(i), last.node(j)) - target).abs());
        }
    }
    Ok(ReductionComparison {
        samples,
        max_u_deviation: du,
        max_x123_deviation: dx,
        max_constant_drift: dc,
        final_gram_deviation: gram_dev,
        roots: cubic_roots(start.c1, start.c2),
        initial: start,
    })
}
