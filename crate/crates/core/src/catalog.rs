//! Exact steady states, their order parameters and coupling thresholds.
//!
//! Nodes are labelled `i = 1, …, N` in the formulas below and stored at
//! zero-based position `i − 1`. Every family is emitted with its normal
//! along the last axis and node `N` in the plane of the first axis.
//!
//! | family        | node `i`                                                        |
//! |---------------|-----------------------------------------------------------------|
//! | `d2_combined` | `θ_i = θ₀ + iαπ/N` (`d2_splay`: `α = 1`)                        |
//! | `d3_combined` | `r (α cos 2πi/N, α sin 2πi/N, 1)` (`d3_ring`: `α = √2`)         |
//! | `d4_combined` | `(cθ cos απi/N, cθ sin απi/N, sθ cos 3βπi/N, sθ sin 3βπi/N)`    |
//! | `d5_combined` | `r (α/√2 (cos 2πi/N, sin 2πi/N, cos 4πi/N, sin 4πi/N), 1)`      |
//! | `basis_nd`    | `e_i`, with `N = d`                                             |
//!
//! `d4_torus` is `d4_combined` at `θ = π/4`, `α = β = 1`; `d5_ring` is
//! `d5_combined` at `r = 1/√5`. States for `κ_d < 0` are reflections of
//! these (all coordinates for odd `d`, the first one for even `d`).

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, gram_invariants, Configuration};
use crate::kernels::dbody_drive_fast;

/// Tolerance for `r²(1 + α²) = 1`.
const PARAMETER_TOLERANCE: f64 = 1e-12;

fn cot(x: f64) -> f64 {
    x.cos() / x.sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    D2Splay,
    D2Combined,
    D3Ring,
    D3Combined,
    D4Torus,
    D4Combined,
    D5Ring,
    D5Combined,
    #[serde(rename = "basis_nd")]
    BasisNd,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::D2Splay,
        Family::D2Combined,
        Family::D3Ring,
        Family::D3Combined,
        Family::D4Torus,
        Family::D4Combined,
        Family::D5Ring,
        Family::D5Combined,
        Family::BasisNd,
    ];

    /// The dimension the family lives in; `None` for `basis_nd`.
    pub fn dim(self) -> Option<usize> {
        match self {
            Family::D2Splay | Family::D2Combined => Some(2),
            Family::D3Ring | Family::D3Combined => Some(3),
            Family::D4Torus | Family::D4Combined => Some(4),
            Family::D5Ring | Family::D5Combined => Some(5),
            Family::BasisNd => None,
        }
    }

    /// `x_0 = x_N` (closed) rather than `x_0 = −x_N` (anti-closed).
    pub fn is_closed(self) -> bool {
        matches!(
            self,
            Family::D3Ring | Family::D3Combined | Family::D5Ring | Family::D5Combined
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::D2Splay => "d2_splay",
            Family::D2Combined => "d2_combined",
            Family::D3Ring => "d3_ring",
            Family::D3Combined => "d3_combined",
            Family::D4Torus => "d4_torus",
            Family::D4Combined => "d4_combined",
            Family::D5Ring => "d5_ring",
            Family::D5Combined => "d5_combined",
            Family::BasisNd => "basis_nd",
        }
    }
}

/// Parameters of one cataloged steady state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyStateSpec {
    pub family: Family,
    pub d: usize,
    pub n: usize,
    /// Order parameter `‖X_av‖` of the state.
    pub r_inf: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub phase0: f64,
    /// Emit the reflected state, which is the stable one for `κ_d < 0`.
    #[serde(default)]
    pub reflected: bool,
}

impl SteadyStateSpec {
    fn base(family: Family, d: usize, n: usize) -> Self {
        SteadyStateSpec {
            family,
            d,
            n,
            r_inf: 0.0,
            alpha: 0.0,
            beta: 0.0,
            theta: 0.0,
            phase0: 0.0,
            reflected: false,
        }
    }

    pub fn d2_splay(n: usize, phase0: f64) -> Self {
        SteadyStateSpec {
            alpha: 1.0,
            phase0,
            r_inf: d2_order_parameter(n, 1.0),
            ..Self::base(Family::D2Splay, 2, n)
        }
    }

    pub fn d2_combined(n: usize, alpha: f64, phase0: f64) -> Self {
        SteadyStateSpec {
            alpha,
            phase0,
            r_inf: d2_order_parameter(n, alpha),
            ..Self::base(Family::D2Combined, 2, n)
        }
    }

    pub fn d3_ring(n: usize) -> Self {
        SteadyStateSpec {
            r_inf: 1.0 / 3f64.sqrt(),
            alpha: 2f64.sqrt(),
            ..Self::base(Family::D3Ring, 3, n)
        }
    }

    /// `r_inf ∈ (0, 1]`; `α = √(1 − r²)/r`.
    pub fn d3_combined(n: usize, r_inf: f64) -> Self {
        SteadyStateSpec {
            r_inf,
            alpha: (1.0 - r_inf * r_inf).max(0.0).sqrt() / r_inf,
            ..Self::base(Family::D3Combined, 3, n)
        }
    }

    pub fn d4_torus(n: usize) -> Self {
        SteadyStateSpec {
            alpha: 1.0,
            beta: 1.0,
            theta: FRAC_PI_4,
            r_inf: d4_order_parameter(n, 1.0, 1.0, FRAC_PI_4),
            ..Self::base(Family::D4Torus, 4, n)
        }
    }

    pub fn d4_combined(n: usize, alpha: f64, beta: f64, theta: f64) -> Self {
        SteadyStateSpec {
            alpha,
            beta,
            theta,
            r_inf: d4_order_parameter(n, alpha, beta, theta),
            ..Self::base(Family::D4Combined, 4, n)
        }
    }

    pub fn d5_ring(n: usize) -> Self {
        SteadyStateSpec {
            r_inf: 1.0 / 5f64.sqrt(),
            alpha: 2.0,
            ..Self::base(Family::D5Ring, 5, n)
        }
    }

    /// `r_inf ∈ (0, 1]`; `α = √(1 − r²)/r`.
    pub fn d5_combined(n: usize, r_inf: f64) -> Self {
        SteadyStateSpec {
            r_inf,
            alpha: (1.0 - r_inf * r_inf).max(0.0).sqrt() / r_inf,
            ..Self::base(Family::D5Combined, 5, n)
        }
    }

    pub fn basis(d: usize) -> Self {
        SteadyStateSpec {
            r_inf: 1.0 / (d as f64).sqrt(),
            ..Self::base(Family::BasisNd, d, d)
        }
    }

    pub fn with_reflection(mut self, reflected: bool) -> Self {
        self.reflected = reflected;
        self
    }

    /// The stable cataloged state for the couplings `(κ₂, κ_d)`.
    ///
    /// Covers `d = 2, 3, 5` for any ratio that admits an equispaced state,
    /// `d = 4` only at `κ₂ = 0`, and `N = d` with `κ₂ = 0` in any dimension.
    pub fn for_couplings(d: usize, n: usize, kappa2: f64, kappa_d: f64) -> Result<Self> {
        if kappa_d == 0.0 {
            return Err(Error::InvalidParameter(
                "no equispaced family without d-body coupling".into(),
            ));
        }
        let reflected = kappa_d < 0.0;
        let spec = match d {
            2 => {
                let alpha = d2_alpha(kappa2, -kappa_d)?;
                return Ok(if alpha == 1.0 && kappa2 == 0.0 {
                    Self::d2_splay(n, 0.0)
                } else {
                    Self::d2_combined(n, alpha, 0.0)
                });
            }
            3 if kappa2 == 0.0 => Self::d3_ring(n),
            3 => Self::d3_combined(n, r_infinity(3, n, kappa2, kappa_d)?),
            4 if kappa2 == 0.0 => Self::d4_torus(n),
            5 if kappa2 == 0.0 => Self::d5_ring(n),
            5 => Self::d5_combined(n, r_infinity(5, n, kappa2, kappa_d)?),
            _ if kappa2 == 0.0 && n == d => Self::basis(d),
            _ => {
                return Err(Error::Unsupported(format!(
                    "no closed-form steady state for d = {d}, N = {n}, kappa2 = {kappa2}"
                )))
            }
        };
        Ok(spec.with_reflection(reflected))
    }

    fn validate(&self) -> Result<()> {
        let expected_dim = self.family.dim().unwrap_or(self.d);
        if self.d != expected_dim {
            return Err(Error::DimensionMismatch {
                expected: expected_dim,
                found: self.d,
            });
        }
        if self.n < self.d {
            return Err(Error::TooFewNodes {
                d: self.d,
                n: self.n,
            });
        }
        let inconsistent = |what: &str| {
            Err(Error::InvalidParameter(format!(
                "{}: {what}",
                self.family.name()
            )))
        };
        match self.family {
            Family::D3Combined | Family::D5Combined | Family::D3Ring | Family::D5Ring => {
                let r = self.r_inf;
                if !(r > 0.0 && r <= 1.0) {
                    return inconsistent("r_inf must lie in (0, 1]");
                }
                if (r * r * (1.0 + self.alpha * self.alpha) - 1.0).abs() > PARAMETER_TOLERANCE {
                    return inconsistent("r_inf^2 (1 + alpha^2) must equal 1");
                }
                let fixed = match self.family {
                    Family::D3Ring => Some(1.0 / 3f64.sqrt()),
                    Family::D5Ring => Some(1.0 / 5f64.sqrt()),
                    _ => None,
                };
                if let Some(r0) = fixed {
                    if (r - r0).abs() > PARAMETER_TOLERANCE {
                        return inconsistent("ring states have a fixed r_inf");
                    }
                }
            }
            Family::D4Torus => {
                if (self.alpha - 1.0).abs() > PARAMETER_TOLERANCE
                    || (self.beta - 1.0).abs() > PARAMETER_TOLERANCE
                    || (self.theta - FRAC_PI_4).abs() > PARAMETER_TOLERANCE
                {
                    return inconsistent("the torus has alpha = beta = 1, theta = pi/4");
                }
            }
            Family::D2Splay => {
                if (self.alpha - 1.0).abs() > PARAMETER_TOLERANCE {
                    return inconsistent("the splay state has alpha = 1");
                }
            }
            Family::BasisNd => {
                if self.n != self.d {
                    return inconsistent("needs N = d");
                }
            }
            Family::D2Combined | Family::D4Combined => {}
        }
        Ok(())
    }
}

/// Builds the configuration described by `spec`.
pub fn exact_configuration(spec: &SteadyStateSpec) -> Result<Configuration> {
    spec.validate()?;
    let n = spec.n;
    let nf = n as f64;
    let (r, a) = (spec.r_inf, spec.alpha);
    let nodes: Vec<Vec<f64>> = (1..=n)
        .map(|i| {
            let t = i as f64 * PI / nf;
            match spec.family {
                Family::D2Splay | Family::D2Combined => {
                    let th = spec.phase0 + a * t;
                    vec![th.cos(), th.sin()]
                }
                Family::D3Ring | Family::D3Combined => {
                    vec![r * a * (2.0 * t).cos(), r * a * (2.0 * t).sin(), r]
                }
                Family::D4Torus | Family::D4Combined => {
                    let (s, c) = spec.theta.sin_cos();
                    let (p, q) = (a * t, 3.0 * spec.beta * t);
                    vec![c * p.cos(), c * p.sin(), s * q.cos(), s * q.sin()]
                }
                Family::D5Ring | Family::D5Combined => {
                    let h = r * a / 2f64.sqrt();
                    vec![
                        h * (2.0 * t).cos(),
                        h * (2.0 * t).sin(),
                        h * (4.0 * t).cos(),
                        h * (4.0 * t).sin(),
                        r,
                    ]
                }
                Family::BasisNd => {
                    let mut e = vec![0.0; spec.d];
                    e[i - 1] = 1.0;
                    e
                }
            }
        })
        .collect();
    let config = Configuration::new(spec.d, nodes)?;
    Ok(if !spec.reflected {
        config
    } else if spec.d % 2 == 1 {
        config.negated()
    } else {
        config.reflected(0)
    })
}

/// The closed-form inner product `x_i · x_j` of the family; depends on
/// `i − j` only.
pub fn gram_closed_form(spec: &SteadyStateSpec, i: usize, j: usize) -> f64 {
    let k = i as f64 - j as f64;
    let t = k * PI / spec.n as f64;
    let (r2, a2) = (spec.r_inf * spec.r_inf, spec.alpha * spec.alpha);
    match spec.family {
        Family::D2Splay | Family::D2Combined => (spec.alpha * t).cos(),
        Family::D3Ring | Family::D3Combined => r2 * (1.0 + a2 * (2.0 * t).cos()),
        Family::D4Torus | Family::D4Combined => {
            let (s, c) = spec.theta.sin_cos();
            c * c * (spec.alpha * t).cos() + s * s * (3.0 * spec.beta * t).cos()
        }
        Family::D5Ring | Family::D5Combined => {
            r2 * (1.0 + 0.5 * a2 * (2.0 * t).cos() + 0.5 * a2 * (4.0 * t).cos())
        }
        Family::BasisNd => f64::from(u8::from(i == j)),
    }
}

/// Largest deviation of the measured Gram matrix from [`gram_closed_form`].
pub fn gram_deviation(spec: &SteadyStateSpec, config: &Configuration) -> f64 {
    gram_invariants(config).max_deviation_from(|i, j| gram_closed_form(spec, i, j))
}

/// `|sin(απ/2)| / (N |sin(απ/2N)|)`, with the limit 1 at `α = 0`.
pub fn d2_order_parameter(n: usize, alpha: f64) -> f64 {
    let nf = n as f64;
    let den = nf * (alpha * PI / (2.0 * nf)).sin().abs();
    if den < 1e-300 {
        return 1.0;
    }
    (alpha * PI / 2.0).sin().abs() / den
}

/// `sin²(πγ/2) / (N² sin²(πγ/2N))`, tending to 1 as `γ → 0`.
fn dirichlet_sq(n: f64, gamma: f64) -> f64 {
    let den = (n * (PI * gamma / (2.0 * n)).sin()).powi(2);
    if den < 1e-300 {
        return 1.0;
    }
    (PI * gamma / 2.0).sin().powi(2) / den
}

/// `r∞` of the `d4_combined` state.
pub fn d4_order_parameter(n: usize, alpha: f64, beta: f64, theta: f64) -> f64 {
    let nf = n as f64;
    let (s, c) = theta.sin_cos();
    (c * c * dirichlet_sq(nf, alpha) + s * s * dirichlet_sq(nf, 3.0 * beta)).sqrt()
}

/// `f(x) = (1 − x²)(5x² − 1)/x`.
pub fn d5_shape(x: f64) -> f64 {
    (1.0 - x * x) * (5.0 * x * x - 1.0) / x
}

/// Location of the maximum of [`d5_shape`] on `(0, 1)`: `x² = (3 + 2√6)/15`.
pub fn d5_shape_argmax() -> f64 {
    ((3.0 + 2.0 * 6f64.sqrt()) / 15.0).sqrt()
}

/// `3 cos(2π/N) / (4 N² sin²(π/N))`.
pub fn d5_geometric_factor(n: usize) -> f64 {
    let nf = n as f64;
    3.0 * (2.0 * PI / nf).cos() / (4.0 * nf * nf * (PI / nf).sin().powi(2))
}

/// The largest `κ₂/|κ_d|` admitting an equispaced steady state.
///
/// `d = 3`: `(2/N) cot(π/N)`. `d = 5`: `max f · 3 cos(2π/N)/(4N² sin²(π/N))`.
pub fn critical_ratio(d: usize, n: usize) -> Result<f64> {
    let nf = n as f64;
    match d {
        3 if n >= 3 => Ok(2.0 / nf * cot(PI / nf)),
        5 if n >= 5 => Ok(d5_shape(d5_shape_argmax()) * d5_geometric_factor(n)),
        3 | 5 => Err(Error::TooFewNodes { d, n }),
        4 => Err(Error::Unsupported(
            "the d = 4 transition has no closed form; locate it by sweeping".into(),
        )),
        _ => Err(Error::Unsupported(format!("no critical ratio for d = {d}"))),
    }
}

/// Solves `f(r) · 3cos(2π/N)/(4N² sin²(π/N)) = ratio` on the branch through
/// `r = 1/√5`. `None` above the critical ratio.
pub fn solve_d5_rinf(n: usize, ratio: f64) -> Option<f64> {
    if n < 5 || !ratio.is_finite() {
        return None;
    }
    let target = ratio / d5_geometric_factor(n);
    let x_max = d5_shape_argmax();
    if target > d5_shape(x_max) {
        return None;
    }
    // f increases from −∞ at 0⁺ to its maximum at x_max
    let mut lo = x_max;
    while d5_shape(lo) > target {
        lo *= 0.5;
        if lo < 1e-300 {
            return None;
        }
    }
    let mut hi = x_max;
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if d5_shape(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// The spacing parameter `α` of the `d = 2` combined state, with the stable
/// branch chosen from the signs of `κ_s` and `κ_a`.
pub fn d2_alpha(kappa_s: f64, kappa_a: f64) -> Result<f64> {
    let atan = |x: f64| 2.0 / PI * x.atan();
    if kappa_s > 0.0 {
        Ok(-atan(kappa_a / kappa_s))
    } else if kappa_s < 0.0 {
        if kappa_a > 0.0 {
            Ok(-2.0 - atan(kappa_a / kappa_s))
        } else if kappa_a < 0.0 {
            Ok(2.0 - atan(kappa_a / kappa_s))
        } else {
            Err(Error::InvalidParameter(
                "kappa_a = 0 with kappa_s < 0 leads to a balanced state, not an arc".into(),
            ))
        }
    } else if kappa_a > 0.0 {
        Ok(-1.0)
    } else if kappa_a < 0.0 {
        Ok(1.0)
    } else {
        Err(Error::InvalidParameter("both couplings vanish".into()))
    }
}

/// `r∞` of the stable cataloged state for `(κ₂, κ_d)`.
///
/// `d = 2`: from [`d2_alpha`] with `κ_s = κ₂`, `κ_a = −κ_d`.
/// `d = 3`: `r = q/6 + √(q² + 12)/6`, `q = κ₂ N tan(π/N)/|κ₃|`.
/// `d = 4`: only `κ₂ = 0`. `d = 5`: [`solve_d5_rinf`].
/// `N = d`, `κ₂ = 0`: `1/√d`.
pub fn r_infinity(d: usize, n: usize, kappa2: f64, kappa_d: f64) -> Result<f64> {
    if d >= 3 && kappa_d == 0.0 {
        return Err(Error::InvalidParameter(
            "no equispaced family without d-body coupling".into(),
        ));
    }
    let nf = n as f64;
    match d {
        2 => Ok(d2_order_parameter(n, d2_alpha(kappa2, -kappa_d)?)),
        3 => {
            let ratio = kappa2 / kappa_d.abs();
            let critical = critical_ratio(3, n)?;
            if ratio > critical {
                return Err(Error::NoRingState { ratio, critical });
            }
            let q = ratio * nf * (PI / nf).tan();
            Ok((q + (q * q + 12.0).sqrt()) / 6.0)
        }
        4 if kappa2 == 0.0 => Ok(d4_order_parameter(n, 1.0, 1.0, FRAC_PI_4)),
        4 => Err(Error::Unsupported(
            "r_inf for combined d = 4 coupling is only available by simulation".into(),
        )),
        5 => {
            let ratio = kappa2 / kappa_d.abs();
            solve_d5_rinf(n, ratio).ok_or_else(|| Error::NoRingState {
                ratio,
                critical: critical_ratio(5, n).unwrap_or(f64::NAN),
            })
        }
        _ if kappa2 == 0.0 && n == d => Ok(1.0 / nf.sqrt()),
        _ => Err(Error::Unsupported(format!(
            "no r_inf formula for d = {d}, N = {n}"
        ))),
    }
}

/// `λ₁`, `λ₂` in `Σ ε v = λ₁ x_i − λ₂ X_av`, and the fit's relative misfit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPair {
    pub lambda1: f64,
    pub lambda2: f64,
    /// `‖misfit‖ / max(‖Σ ε v‖, 1)` over all nodes.
    pub residual: f64,
}

impl LambdaPair {
    /// Relative deviation of `λ₂` from `κ₂ N^{d−1} / κ_d`, the value that
    /// makes the state static.
    pub fn consistency(&self, d: usize, n: usize, kappa2: f64, kappa_d: f64) -> f64 {
        let expected = kappa2 * (n as f64).powi(d as i32 - 1) / kappa_d;
        (self.lambda2 - expected).abs() / expected.abs().max(1.0)
    }
}

/// Least-squares fit of `Σ_{i_2…i_d} ε_{i i_2 … i_d} v_{i_2 … i_d} = λ₁ x_i − λ₂ X_av`
/// over all nodes.
pub fn verify_lambda_relation(config: &Configuration) -> Result<LambdaPair> {
    let (d, n) = (config.dim(), config.len());
    let scale = (n as f64).powi(d as i32 - 1);
    let drive = dbody_drive_fast(config)?;
    let sums: Vec<f64> = drive.as_flat().iter().map(|y| y * scale).collect();
    let avg = config.average();
    let avg_sq = dot(&avg, &avg);

    let (mut xx, mut xa, mut sx, mut sa, mut ss) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, s) in config.nodes().zip(sums.chunks_exact(d)) {
        xx += dot(x, x);
        xa += dot(x, &avg);
        sx += dot(s, x);
        sa += dot(s, &avg);
        ss += dot(s, s);
    }
    let aa = n as f64 * avg_sq;
    // unknowns (λ₁, λ₂) with columns x_i and −X_av
    let (lambda1, lambda2) = if avg_sq.sqrt() < 1e-12 {
        (sx / xx, 0.0)
    } else {
        let det = xx * aa - xa * xa;
        if det.abs() <= 1e-12 * xx * aa {
            return Err(Error::Degenerate(
                "every node is parallel to the average position".into(),
            ));
        }
        let l1 = (aa * sx - xa * sa) / det;
        let l2 = (xa * sx - xx * sa) / det;
        (l1, l2)
    };
    let mut misfit = 0.0;
    for (x, s) in config.nodes().zip(sums.chunks_exact(d)) {
        for a in 0..d {
            misfit += (s[a] - lambda1 * x[a] + lambda2 * avg[a]).powi(2);
        }
    }
    Ok(LambdaPair {
        lambda1,
        lambda2,
        residual: misfit.sqrt() / ss.sqrt().max(1.0),
    })
}

/// `(λ₁, λ₂)` of a cataloged state in closed form, where one exists.
pub fn lambda_closed_form(spec: &SteadyStateSpec) -> Option<(f64, f64)> {
    let nf = spec.n as f64;
    let r = spec.r_inf;
    let (l1, l2) = match spec.family {
        Family::D2Splay | Family::D2Combined => {
            let a = spec.alpha;
            (cot(a * PI / (2.0 * nf)), nf * cot(a * PI / 2.0))
        }
        Family::D3Ring | Family::D3Combined => {
            let c = cot(PI / nf);
            (2.0 * nf * r * c, -nf * c * (1.0 - 3.0 * r * r) / r)
        }
        Family::D4Torus => (1.5 * nf * cot(1.5 * PI / nf) * cot(PI / (2.0 * nf)), 0.0),
        Family::D4Combined => return None,
        Family::D5Ring | Family::D5Combined => {
            let g = 3.0 * nf * nf * (2.0 * PI / nf).cos() / (PI / nf).sin().powi(2);
            (
                r * (1.0 - r * r) * g,
                (1.0 - r * r) * (5.0 * r * r - 1.0) / r * g / 4.0,
            )
        }
        Family::BasisNd => ((1..spec.d).map(|k| k as f64).product(), 0.0),
    };
    Some(if spec.reflected { (-l1, -l2) } else { (l1, l2) })
}

/// Result of [`fit_d4_parameters`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct D4Fit {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    /// RMS misfit over all pairs `i < j`.
    pub residual: f64,
    /// `r∞` implied by the fitted parameters.
    pub r_inf_predicted: f64,
    pub converged: bool,
    pub iterations: usize,
    /// The Gram matrix is all ones, so the parameters are undetermined.
    pub degenerate: bool,
}

/// Fits `x_i · x_j = cos²θ cos(απ(i−j)/N) + sin²θ cos(3βπ(i−j)/N)` to a
/// `d = 4` configuration.
///
/// Reported in the canonical form `α, β ≥ 0`, `θ ∈ [0, π/2]`, `α ≤ 3β`
/// (the model is invariant under `(θ, α, β) → (π/2 − θ, 3β, α/3)`).
pub fn fit_d4_parameters(config: &Configuration) -> Result<D4Fit> {
    if config.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: config.dim(),
        });
    }
    let n = config.len();
    let nf = n as f64;
    let gram = gram_invariants(config);
    // mean inner product at each label offset k = 1..N−1
    let profile: Vec<f64> = (1..n)
        .map(|k| (0..n - k).map(|i| gram.get(i, i + k)).sum::<f64>() / (n - k) as f64)
        .collect();
    let weights: Vec<f64> = (1..n).map(|k| (n - k) as f64).collect();
    let model = |p: &[f64; 3], k: f64| {
        let (s, c) = p[2].sin_cos();
        c * c * (p[0] * PI * k / nf).cos() + s * s * (3.0 * p[1] * PI * k / nf).cos()
    };
    let rms = |p: &[f64; 3]| {
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                total += (gram.get(i, j) - model(p, (j - i) as f64)).powi(2);
            }
        }
        (total / (n * (n - 1) / 2) as f64).sqrt()
    };

    if profile.iter().all(|&g| g > 1.0 - 1e-9) {
        return Ok(D4Fit {
            alpha: 0.0,
            beta: 0.0,
            theta: FRAC_PI_4,
            residual: rms(&[0.0, 0.0, FRAC_PI_4]),
            r_inf_predicted: 1.0,
            converged: false,
            iterations: 0,
            degenerate: true,
        });
    }

    let cost = |p: &[f64; 3]| -> f64 {
        profile
            .iter()
            .zip(&weights)
            .enumerate()
            .map(|(k, (g, w))| w * (g - model(p, (k + 1) as f64)).powi(2))
            .sum()
    };

    // coarse grid for the starting point
    let mut best = [1.0, 1.0, FRAC_PI_4];
    let mut best_cost = cost(&best);
    for ia in 0..=40 {
        for ib in 0..=40 {
            for it in 1..18 {
                let p = [ia as f64 * 0.05, ib as f64 * 0.025, it as f64 * PI / 36.0];
                let c = cost(&p);
                if c < best_cost {
                    best = p;
                    best_cost = c;
                }
            }
        }
    }

    // Levenberg–Marquardt on the weighted profile
    let mut p = best;
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..500 {
        iterations = iter + 1;
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        let (s, c) = p[2].sin_cos();
        for (idx, (g, w)) in profile.iter().zip(&weights).enumerate() {
            let k = (idx + 1) as f64;
            let (u, v) = (p[0] * PI * k / nf, 3.0 * p[1] * PI * k / nf);
            let jac = Vector3::new(
                -c * c * u.sin() * PI * k / nf,
                -s * s * v.sin() * 3.0 * PI * k / nf,
                2.0 * s * c * (v.cos() - u.cos()),
            );
            let res = g - model(&p, k);
            jtj += jac * jac.transpose() * *w;
            jtr += jac * (w * res);
        }
        let current = cost(&p);
        let mut damped = jtj;
        for a in 0..3 {
            damped[(a, a)] += mu * jtj[(a, a)].max(1e-12);
        }
        let Some(step) = damped.lu().solve(&jtr) else {
            break;
        };
        let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
        if cost(&trial) <= current {
            p = trial;
            mu = (mu * 0.3).max(1e-15);
            if step.norm() < 1e-10 {
                converged = true;
                break;
            }
        } else {
            mu *= 10.0;
            if mu > 1e12 {
                converged = step.norm() < 1e-8;
                break;
            }
        }
    }

    let (mut alpha, mut beta, mut theta) = (p[0].abs(), p[1].abs(), p[2].rem_euclid(PI));
    if theta > FRAC_PI_2 {
        theta = PI - theta;
    }
    if alpha > 3.0 * beta {
        (alpha, beta, theta) = (3.0 * beta, alpha / 3.0, FRAC_PI_2 - theta);
    }
    let fitted = [alpha, beta, theta];
    Ok(D4Fit {
        alpha,
        beta,
        theta,
        residual: rms(&fitted),
        r_inf_predicted: d4_order_parameter(n, alpha, beta, theta),
        converged,
        iterations,
        degenerate: false,
    })
}
