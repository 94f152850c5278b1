//! Order parameter, final-state classification and the summation oracles.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::catalog::{
    fit_d4_parameters, gram_deviation, r_infinity, verify_lambda_relation, D4Fit, LambdaPair,
    SteadyStateSpec,
};
use crate::dynamics::{ModelParams, TrajectoryRecord};
use crate::geometry::{dot, gram_invariants, norm, Configuration};

/// A run whose last sampled node speed is below this is static.
pub const STATIC_SPEED: f64 = 1e-6;
/// `r` above this counts as complete synchronization.
pub const COMPLETE_THRESHOLD: f64 = 1.0 - 1e-4;
/// `r` below this counts as a balanced configuration.
pub const BALANCED_THRESHOLD: f64 = 1e-4;
/// Allowed deviation of adjacent-node distances from their median.
pub const SPACING_TOLERANCE: f64 = 1e-5;
/// Operational width of the practical-synchronization band in `r`.
pub const PRACTICAL_BAND: f64 = 0.05;
/// Fraction of the run, counted from the end, over which the band is taken.
pub const PRACTICAL_WINDOW: f64 = 0.1;
/// Residual bound for every oracle.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

/// `r = ‖X_av‖`.
pub fn order_parameter(config: &Configuration) -> f64 {
    norm(&config.average())
}

/// Outcome label of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Complete,
    RingEquispaced,
    Balanced,
    Practical,
    Asynchronous,
    /// Static on a collinear fixed point under pure d-body coupling, which
    /// the run never left.
    UnstableStart,
}

impl Classification {
    pub fn name(self) -> &'static str {
        match self {
            Classification::Complete => "complete",
            Classification::RingEquispaced => "ring_equispaced",
            Classification::Balanced => "balanced",
            Classification::Practical => "practical",
            Classification::Asynchronous => "asynchronous",
            Classification::UnstableStart => "unstable_start",
        }
    }
}

/// Adjacent-node distances along the index order and their spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub median: f64,
    /// `max_i |‖x_i − x_{i+1}‖ − median|` over `i < N`.
    pub max_deviation: f64,
    /// `x_1 · x_N / x_1 · x_2`: `+1` for a ring that closes on itself,
    /// `−1` for one that closes with a reflection (`d = 2, 4` families).
    pub closure_ratio: f64,
}

impl Spacing {
    pub fn is_equispaced(&self) -> bool {
        self.max_deviation < SPACING_TOLERANCE
    }
}

/// Distances are rotation invariant, so no alignment is needed first.
pub fn spacing(config: &Configuration) -> Spacing {
    let n = config.len();
    let mut gaps: Vec<f64> = (0..n - 1)
        .map(|i| {
            let (a, b) = (config.node(i), config.node(i + 1));
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let max_dev_from = |m: f64, g: &[f64]| g.iter().map(|x| (x - m).abs()).fold(0.0, f64::max);
    let raw = gaps.clone();
    gaps.sort_by(f64::total_cmp);
    let k = gaps.len();
    let median = if k % 2 == 1 {
        gaps[k / 2]
    } else {
        0.5 * (gaps[k / 2 - 1] + gaps[k / 2])
    };
    let g1 = dot(config.node(0), config.node(1));
    let closure = dot(config.node(0), config.node(n - 1));
    Spacing {
        median,
        max_deviation: max_dev_from(median, &raw),
        closure_ratio: if g1.abs() > 1e-12 {
            closure / g1
        } else {
            f64::NAN
        },
    }
}

/// Parameters of the equispaced family matched to a final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFit {
    pub spec: Option<SteadyStateSpec>,
    /// Largest `|x_i · x_j − g(i, j)|` against `spec`.
    pub gram_deviation: Option<f64>,
    pub d4: Option<D4Fit>,
}

/// Consistency checks of a static final state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityChecks {
    /// `r∞` predicted from the couplings, when a formula exists.
    pub r_inf_predicted: Option<f64>,
    pub r_inf_deviation: Option<f64>,
    /// `|λ₂ − κ₂ N^{d−1} / κ_d|`.
    pub lambda_consistency: Option<f64>,
}

/// Everything [`classify_final`] determined about a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub classification: Classification,
    pub d: usize,
    pub n: usize,
    pub kappa2: f64,
    pub kappa_d: f64,
    pub final_time: f64,
    pub is_static: bool,
    pub final_max_speed: f64,
    pub r_inf_measured: f64,
    /// `max r − min r` over the trailing window.
    pub r_band: f64,
    /// The band threshold used; an operational choice, not a derived one.
    pub practical_band_threshold: f64,
    pub spacing: Spacing,
    pub lambda: Option<LambdaPair>,
    pub fit: Option<FamilyFit>,
    pub identities: IdentityChecks,
}

fn is_collinear(config: &Configuration) -> bool {
    let x0 = config.node(0);
    config.nodes().all(|x| dot(x0, x).abs() > 1.0 - 1e-9)
}

/// `d = 2` signed mean angle step times `N/π`; the `α` of `d2_combined`.
fn d2_alpha_from(config: &Configuration) -> f64 {
    let n = config.len();
    let total: f64 = (0..n - 1)
        .map(|i| {
            let (a, b) = (config.node(i), config.node(i + 1));
            (a[0] * b[1] - a[1] * b[0]).atan2(dot(a, b))
        })
        .sum();
    total / (n - 1) as f64 * n as f64 / PI
}

fn fit_family(config: &Configuration, r: f64) -> FamilyFit {
    let (d, n) = (config.dim(), config.len());
    let spec = match d {
        2 => {
            let x = config.node(n - 1);
            let alpha = d2_alpha_from(config);
            let phase0 = x[1].atan2(x[0]) - alpha * PI;
            Some(SteadyStateSpec::d2_combined(n, alpha, phase0))
        }
        3 => Some(SteadyStateSpec::d3_combined(n, r)),
        5 => Some(SteadyStateSpec::d5_combined(n, r)),
        _ => None,
    };
    let d4 = if d == 4 {
        fit_d4_parameters(config).ok().filter(|f| !f.degenerate)
    } else {
        None
    };
    let spec =
        spec.or_else(|| d4.map(|f| SteadyStateSpec::d4_combined(n, f.alpha, f.beta, f.theta)));
    let gram = spec.as_ref().map(|s| gram_deviation(s, config));
    FamilyFit {
        spec,
        gram_deviation: gram,
        d4,
    }
}

/// Applies the decision rules to a finished run.
///
/// Static runs are `complete`, `balanced` or `ring_equispaced` in that
/// order of precedence; static states matching none of these have a
/// constant `r` and are reported as `practical`. Moving runs are
/// `practical` when the trailing `r` band is narrower than
/// [`PRACTICAL_BAND`], else `asynchronous`.
pub fn classify_final(
    record: &TrajectoryRecord,
    final_config: &Configuration,
    params: &ModelParams,
) -> SummaryReport {
    let (d, n) = (params.dim(), params.nodes());
    let r = order_parameter(final_config);
    let final_max_speed = record.max_speed.last().copied().unwrap_or(f64::NAN);
    let is_static = final_max_speed < STATIC_SPEED;
    let never_moved = record.max_speed.first().is_some_and(|&s| s < STATIC_SPEED);
    let r_band = record.trailing_band(PRACTICAL_WINDOW);
    let spacing = spacing(final_config);

    let classification = if is_static {
        if never_moved
            && is_collinear(final_config)
            && params.kappa_d != 0.0
            && params.kappa2 == 0.0
        {
            Classification::UnstableStart
        } else if r > COMPLETE_THRESHOLD {
            Classification::Complete
        } else if r < BALANCED_THRESHOLD {
            Classification::Balanced
        } else if spacing.is_equispaced() {
            Classification::RingEquispaced
        } else {
            Classification::Practical
        }
    } else if r_band < PRACTICAL_BAND {
        Classification::Practical
    } else {
        Classification::Asynchronous
    };

    let lambda = if is_static && !matches!(classification, Classification::UnstableStart) {
        verify_lambda_relation(final_config).ok()
    } else {
        None
    };
    let fit =
        (classification == Classification::RingEquispaced).then(|| fit_family(final_config, r));
    let r_inf_predicted = if params.has_frequencies() {
        None
    } else {
        r_infinity(d, n, params.kappa2, params.kappa_d).ok()
    };
    let identities = IdentityChecks {
        r_inf_predicted,
        r_inf_deviation: r_inf_predicted.filter(|_| is_static).map(|p| (p - r).abs()),
        lambda_consistency: lambda
            .filter(|_| params.kappa_d != 0.0 && !params.has_frequencies())
            .map(|l| l.consistency(d, n, params.kappa2, params.kappa_d)),
    };

    SummaryReport {
        classification,
        d,
        n,
        kappa2: params.kappa2,
        kappa_d: params.kappa_d,
        final_time: record.times.last().copied().unwrap_or(0.0),
        is_static,
        final_max_speed,
        r_inf_measured: r,
        r_band,
        practical_band_threshold: PRACTICAL_BAND,
        spacing,
        lambda,
        fit,
        identities,
    }
}

/// Common rotation rate of a `d = 2` state between two snapshots `dt` apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseLock {
    /// Mean of the per-node phase velocities.
    pub frequency: f64,
    /// Largest deviation of a node's phase velocity from the mean.
    pub spread: f64,
}

/// Phase velocities from the angle each node turns through, which must stay
/// below `π` over `dt`.
pub fn phase_lock(before: &Configuration, after: &Configuration, dt: f64) -> PhaseLock {
    let rates: Vec<f64> = before
        .nodes()
        .zip(after.nodes())
        .map(|(a, b)| (a[0] * b[1] - a[1] * b[0]).atan2(dot(a, b)) / dt)
        .collect();
    let frequency = rates.iter().sum::<f64>() / rates.len() as f64;
    let spread = rates
        .iter()
        .map(|w| (w - frequency).abs())
        .fold(0.0, f64::max);
    PhaseLock { frequency, spread }
}

/// Mean natural frequency `(1/N) Σ ω_i` of a `d = 2` model.
pub fn mean_natural_frequency(params: &ModelParams) -> f64 {
    let n = params.nodes();
    (0..n).map(|i| params.frequency(i)[(1, 0)]).sum::<f64>() / n as f64
}

/// Gram matrix rows as plain vectors, for reports.
pub fn gram_rows(config: &Configuration) -> Vec<Vec<f64>> {
    let g = gram_invariants(config);
    (0..g.len())
        .map(|i| (0..g.len()).map(|j| g.get(i, j)).collect())
        .collect()
}

/// One identity checked over a range of `N` and parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub name: &'static str,
    pub cases: usize,
    /// Largest `|lhs − rhs| / max(1, |rhs|)`.
    pub max_residual: f64,
    pub passed: bool,
}

/// Results of [`trig_oracles`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleTable {
    pub rows: Vec<OracleRow>,
}

impl OracleTable {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

/// Sign of the permutation taking the sorted values to `idx`, or `0` on a
/// repeated value.
fn signature(idx: &[usize]) -> f64 {
    let mut sign = 1.0;
    for a in 0..idx.len() {
        for b in a + 1..idx.len() {
            match idx[a].cmp(&idx[b]) {
                std::cmp::Ordering::Equal => return 0.0,
                std::cmp::Ordering::Greater => sign = -sign,
                std::cmp::Ordering::Less => {}
            }
        }
    }
    sign
}

/// `ζ^p` with `ζ = e^{iπ/N}`.
fn zeta(n: usize, p: f64) -> Complex64 {
    Complex64::from_polar(1.0, p * PI / n as f64)
}

fn cot(x: f64) -> f64 {
    x.cos() / x.sin()
}

#[derive(Default)]
struct Tally {
    cases: usize,
    worst: f64,
}

impl Tally {
    fn real(&mut self, lhs: f64, rhs: f64) {
        self.cases += 1;
        self.worst = self.worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }

    fn complex(&mut self, lhs: Complex64, rhs: Complex64) {
        self.cases += 1;
        self.worst = self.worst.max((lhs - rhs).norm() / rhs.norm().max(1.0));
    }

    fn row(self, name: &'static str) -> OracleRow {
        OracleRow {
            name,
            cases: self.cases,
            max_residual: self.worst,
            passed: self.cases > 0 && self.worst < ORACLE_TOLERANCE,
        }
    }
}

const ALPHAS: [f64; 8] = [0.3, 0.5, 1.0, 1.5, 2.5, 3.0, -1.7, -3.0];

fn check_geometric(sizes: &[usize]) -> [OracleRow; 6] {
    let (mut a1, mut aa2, mut aa3, mut a2, mut a3, mut a4) = (
        Tally::default(),
        Tally::default(),
        Tally::default(),
        Tally::default(),
        Tally::default(),
        Tally::default(),
    );
    for &n in sizes {
        let nf = n as f64;
        for &alpha in &ALPHAS {
            let sum: Complex64 = (1..=n).map(|j| zeta(n, alpha * j as f64)).sum();
            let z = zeta(n, alpha);
            let closed = z * (1.0 - Complex64::from_polar(1.0, alpha * PI)) / (1.0 - z);
            a1.complex(sum, closed);

            let x = alpha * PI;
            aa2.real(
                sum.re,
                0.5 * (-1.0 + x.cos() + cot(x / (2.0 * nf)) * x.sin()),
            );
            aa3.real(
                sum.im,
                (x / 2.0).sin() * (x * (nf + 1.0) / (2.0 * nf)).sin() / (x / (2.0 * nf)).sin(),
            );

            let double: f64 = (1..=n)
                .flat_map(|i| (1..=n).map(move |j| (x * (j as f64 - i as f64) / nf).cos()))
                .sum();
            a4.real(double, ((x / 2.0).sin() / (x / (2.0 * nf)).sin()).powi(2));
        }
        for m in 1..=9usize {
            let x = m as f64 * PI / nf;
            let cos_sum: f64 = (1..=n).map(|j| (x * j as f64).cos()).sum();
            let sin_sum: f64 = (1..=n).map(|j| (x * j as f64).sin()).sum();
            if m % 2 == 0 {
                if m % (2 * n) != 0 {
                    a2.real(cos_sum, 0.0);
                    a2.real(sin_sum, 0.0);
                }
            } else {
                a3.real(cos_sum, -1.0);
                a3.real(sin_sum, cot(x / 2.0));
            }
        }
    }
    [
        a1.row("geometric_series"),
        aa2.row("cosine_sum"),
        aa3.row("sine_sum"),
        a2.row("even_harmonic_sums"),
        a3.row("odd_harmonic_sums"),
        a4.row("double_exponential_sum"),
    ]
}

/// Three-index signature sums over `k`, then over `j` and `k`.
fn check_three_index(sizes: &[usize]) -> [OracleRow; 2] {
    let (mut single, mut double) = (Tally::default(), Tally::default());
    for &n in sizes {
        let z2 = zeta(n, 2.0);
        let factor = (1.0 + z2) / (1.0 - z2);
        let cot_n = cot(PI / n as f64);
        for i in 1..=n {
            let zi = zeta(n, -2.0 * i as f64);
            let mut sum_jk = Complex64::new(0.0, 0.0);
            let mut sum_diff = Complex64::new(0.0, 0.0);
            for j in 1..=n {
                let inner: Complex64 = (1..=n)
                    .map(|k| signature(&[i, j, k]) * zeta(n, -2.0 * k as f64))
                    .sum();
                single.complex(inner, factor * (zi - zeta(n, -2.0 * j as f64)));
                sum_jk += inner;
                sum_diff += zeta(n, 2.0 * j as f64) * inner;
            }
            let nf = n as f64;
            double.complex(sum_jk / nf, Complex64::i() * zi * cot_n);
            double.complex(sum_diff / nf, -Complex64::i() * cot_n);
        }
    }
    [
        single.row("three_index_signature_sum"),
        double.row("three_index_double_sums"),
    ]
}

fn sample_indices(n: usize) -> Vec<usize> {
    let mut v = vec![1, 2, n / 2, n];
    v.retain(|&i| i >= 1);
    v.sort_unstable();
    v.dedup();
    v
}

const ODD_PAIRS: [(i32, i32); 6] = [(-1, -3), (1, 3), (1, -3), (3, 5), (-1, 5), (-5, 7)];

/// Four-index signature sums: the pair sum over `k, l`, and the triple sum
/// behind the torus eigenvalue together with its real part.
fn check_four_index(sizes: &[usize], triple_sizes: &[usize]) -> [OracleRow; 3] {
    let (mut pair, mut triple, mut real) = (Tally::default(), Tally::default(), Tally::default());
    for &n in sizes {
        // the identity needs ζ^{α+β} ≠ 1
        for &(a, b) in ODD_PAIRS
            .iter()
            .filter(|(a, b)| (a + b).rem_euclid(2 * n as i32) != 0)
        {
            let (za, zb) = (zeta(n, a as f64), zeta(n, b as f64));
            let factor = (1.0 + za) * (1.0 + zb) / ((1.0 - za) * (1.0 - zb));
            for i in sample_indices(n) {
                for j in 1..=n {
                    let mut lhs = Complex64::new(0.0, 0.0);
                    for k in 1..=n {
                        for l in 1..=n {
                            let s = signature(&[i, j, k, l]);
                            if s != 0.0 {
                                lhs += s * zeta(n, (a * k as i32 + b * l as i32) as f64);
                            }
                        }
                    }
                    let (i_, j_) = (i as i32, j as i32);
                    let rhs = factor
                        * (zeta(n, (a * j_ + b * i_) as f64) - zeta(n, (a * i_ + b * j_) as f64));
                    pair.complex(lhs, rhs);
                }
            }
        }
    }
    for &n in triple_sizes {
        let nf = n as f64;
        let (z1, z3) = (zeta(n, -1.0), zeta(n, -3.0));
        let factor = (1.0 + z1) * (1.0 + z3) / ((1.0 - z1) * (1.0 - z3));
        for i in sample_indices(n) {
            let mut lhs = Complex64::new(0.0, 0.0);
            for j in 1..=n {
                for k in 1..=n {
                    for l in 1..=n {
                        let s = signature(&[i, j, k, l]);
                        if s != 0.0 {
                            lhs += s * zeta(n, (3 * j) as f64 - k as f64 - (3 * l) as f64);
                        }
                    }
                }
            }
            triple.complex(lhs, -nf * factor * zeta(n, -(i as f64)));
            let cots = cot(PI / (2.0 * nf)) * cot(3.0 * PI / (2.0 * nf));
            real.real(lhs.re, nf * cots * (PI * i as f64 / nf).cos());
        }
    }
    [
        pair.row("four_index_pair_sum"),
        triple.row("four_index_triple_sum"),
        real.row("four_index_cosine_sum"),
    ]
}

/// `Σ ε_{jklm} cos((4j − 2k − 4l)π/N) = (N²/2) cos(2π/N) / sin²(π/N)`.
fn check_five_body(sizes: &[usize]) -> OracleRow {
    let mut t = Tally::default();
    for &n in sizes {
        let nf = n as f64;
        // cos(pπ/N) depends on p mod 2N only
        let table: Vec<f64> = (0..2 * n).map(|p| (p as f64 * PI / nf).cos()).collect();
        let wrap = |p: i64| table[p.rem_euclid(2 * n as i64) as usize];
        let mut sum = 0.0;
        for j in 1..=n {
            for k in 1..=n {
                if k == j {
                    continue;
                }
                for l in 1..=n {
                    if l == j || l == k {
                        continue;
                    }
                    let c = wrap(4 * j as i64 - 2 * k as i64 - 4 * l as i64);
                    let signs: f64 = (1..=n).map(|m| signature(&[j, k, l, m])).sum();
                    sum += signs * c;
                }
            }
        }
        let s = (PI / nf).sin();
        t.real(sum, nf * nf / 2.0 * (2.0 * PI / nf).cos() / (s * s));
    }
    t.row("five_body_cosine_sum")
}

/// Checks the summation identities behind the closed-form steady states
/// against direct enumeration.
pub fn trig_oracles() -> OracleTable {
    let all: Vec<usize> = (3..=64).collect();
    let mid: Vec<usize> = (3..=24).chain([32, 40, 48, 64]).collect();
    // four-index sums are empty below N = 4
    let four: Vec<usize> = mid[1..].to_vec();
    let small: Vec<usize> = (4..=16).chain([20, 24, 32]).collect();
    let mut rows = Vec::new();
    rows.extend(check_geometric(&all));
    rows.extend(check_three_index(&mid));
    rows.extend(check_four_index(&small, &four));
    rows.push(check_five_body(&four));
    OracleTable { rows }
}
