//! Unit vectors on S^{d-1}, node configurations, and the rotation machinery
//! used to compare them.
//!
//! The generalized cross product ([`hodge_dual`]) is defined by the probe
//! identity `u · v = det(u, x_2, …, x_d)` for every `u`; for `d = 3` it is
//! the ordinary cross product. Configurations are only ever compared through
//! rotation invariants ([`gram_invariants`]) or after an explicit rotation
//! ([`align_to_axis`], [`align_to_reference`]).

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of a node norm from one.
pub const UNIT_TOLERANCE: f64 = 1e-12;
/// Allowed deviation from orthonormality for [`RotationMatrix`].
pub const ROTATION_TOLERANCE: f64 = 1e-10;
/// Below this norm the average position is treated as zero.
pub const BALANCED_THRESHOLD: f64 = 1e-12;

/// Below this angle `sin(w)/w` and `(1 - cos w)/w^2` switch to their series.
const SERIES_CUTOFF: f64 = 1e-4;

/// The random number generator behind every seeded draw in this crate.
///
/// ChaCha8 seeded through `seed_from_u64`, so a seed reproduces the same
/// stream on every platform.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A point on S^{d-1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Wraps `components`, rejecting anything whose norm is off by more than
    /// [`UNIT_TOLERANCE`].
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::DimensionTooSmall(components.len()));
        }
        let n = norm(&components);
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NotUnit { index: 0, norm: n });
        }
        Ok(UnitVector(components))
    }

    /// Scales `components` onto the sphere.
    pub fn normalized(mut components: Vec<f64>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::DimensionTooSmall(components.len()));
        }
        let n = norm(&components);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::ZeroVector);
        }
        components.iter_mut().for_each(|c| *c /= n);
        Ok(UnitVector(components))
    }

    /// The standard basis vector `e_axis` in dimension `d` (zero-based axis).
    pub fn basis(d: usize, axis: usize) -> Self {
        let mut c = vec![0.0; d];
        c[axis] = 1.0;
        UnitVector(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        UnitVector::new(v)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(v: UnitVector) -> Self {
        v.0
    }
}

/// The full system state: `N` unit `d`-vectors stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    dim: usize,
    coords: Vec<f64>,
}

impl Configuration {
    /// Builds a configuration from explicit nodes. Every node must already be
    /// unit length and there must be at least `d` of them.
    pub fn new(dim: usize, nodes: Vec<Vec<f64>>) -> Result<Self> {
        let coords = flatten(dim, nodes)?;
        Self::from_flat(dim, coords)
    }

    /// Same as [`Configuration::new`] for row-major coordinates.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        check_shape(dim, &coords)?;
        for (index, node) in coords.chunks_exact(dim).enumerate() {
            let n = norm(node);
            if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::NotUnit { index, norm: n });
            }
        }
        Ok(Configuration { dim, coords })
    }

    /// Builds a configuration after projecting every node onto the sphere.
    pub fn normalized(dim: usize, nodes: Vec<Vec<f64>>) -> Result<Self> {
        let mut coords = flatten(dim, nodes)?;
        check_shape(dim, &coords)?;
        normalize_rows(dim, &mut coords)?;
        Ok(Configuration { dim, coords })
    }

    pub(crate) fn from_flat_unchecked(dim: usize, coords: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len() % dim, 0);
        Configuration { dim, coords }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of nodes `N`.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Node `i`, zero-based.
    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.coords
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.nodes().map(<[f64]>::to_vec).collect()
    }

    /// The average position `X_av`.
    pub fn average(&self) -> Vec<f64> {
        average_position(self.dim, &self.coords)
    }

    pub fn max_norm_deviation(&self) -> f64 {
        self.nodes()
            .map(|x| (norm(x) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Applies `rotation` to every node.
    pub fn rotated(&self, rotation: &RotationMatrix) -> Configuration {
        self.transformed(rotation.matrix())
    }

    /// Applies an arbitrary orthogonal matrix to every node (reflections included).
    pub fn transformed(&self, m: &DMatrix<f64>) -> Configuration {
        let d = self.dim;
        let mut coords = vec![0.0; self.coords.len()];
        for (src, dst) in self.nodes().zip(coords.chunks_exact_mut(d)) {
            for (a, out) in dst.iter_mut().enumerate() {
                *out = (0..d).map(|b| m[(a, b)] * src[b]).sum();
            }
        }
        Configuration { dim: d, coords }
    }

    /// Reverses the sign of coordinate `axis` on every node, a reflection with
    /// determinant −1.
    pub fn reflected(&self, axis: usize) -> Configuration {
        let mut out = self.clone();
        for node in out.coords.chunks_exact_mut(self.dim) {
            node[axis] = -node[axis];
        }
        out
    }

    /// Parity inversion `x_i -> -x_i`.
    pub fn negated(&self) -> Configuration {
        Configuration {
            dim: self.dim,
            coords: self.coords.iter().map(|c| -c).collect(),
        }
    }
}

fn flatten(dim: usize, nodes: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let mut coords = Vec::with_capacity(nodes.len() * dim);
    for node in nodes {
        if node.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: node.len(),
            });
        }
        coords.extend(node);
    }
    Ok(coords)
}

fn check_shape(dim: usize, coords: &[f64]) -> Result<()> {
    if dim < 2 {
        return Err(Error::DimensionTooSmall(dim));
    }
    if !coords.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: coords.len() % dim,
        });
    }
    let n = coords.len() / dim;
    if n < dim {
        return Err(Error::TooFewNodes { d: dim, n });
    }
    Ok(())
}

pub(crate) fn normalize_rows(dim: usize, coords: &mut [f64]) -> Result<()> {
    for node in coords.chunks_exact_mut(dim) {
        let n = norm(node);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::ZeroVector);
        }
        node.iter_mut().for_each(|c| *c /= n);
    }
    Ok(())
}

pub(crate) fn average_position(dim: usize, coords: &[f64]) -> Vec<f64> {
    let n = coords.len() / dim;
    let mut avg = vec![0.0; dim];
    for node in coords.chunks_exact(dim) {
        for (a, c) in avg.iter_mut().zip(node) {
            *a += c;
        }
    }
    avg.iter_mut().for_each(|a| *a /= n as f64);
    avg
}

/// An element of SO(d).
#[derive(Debug, Clone, PartialEq)]
pub struct RotationMatrix(DMatrix<f64>);

impl RotationMatrix {
    /// Accepts `m` when `mᵀm = I` and `det m = +1`, both within
    /// [`ROTATION_TOLERANCE`].
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let d = m.nrows();
        let defect = (m.transpose() * &m - DMatrix::<f64>::identity(d, d)).amax();
        let det = m.determinant();
        if defect > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "not a rotation: orthogonality defect {defect:e}, determinant {det}"
            )));
        }
        Ok(RotationMatrix(m))
    }

    pub fn identity(d: usize) -> Self {
        RotationMatrix(DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|a| (0..d).map(|b| self.0[(a, b)] * v[b]).sum())
            .collect()
    }

    pub fn compose(&self, other: &RotationMatrix) -> RotationMatrix {
        RotationMatrix(&self.0 * &other.0)
    }

    pub fn transpose(&self) -> RotationMatrix {
        RotationMatrix(self.0.transpose())
    }
}

/// The generator `Ω` of a rotation that tilts the last axis `m = (0, …, 0, 1)`.
///
/// `Ω` is zero except for its last column `(ω, 0)` and last row `(-ω, 0)`, so
/// `Ω³ = -|ω|² Ω` and the exponential collapses to
/// `exp(tΩ) = I + b(t) Ω + c(t) Ω²` with `b = sin(|ω|t)/|ω|` and
/// `c = (1 - cos(|ω|t))/|ω|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentGenerator {
    omega: Vec<f64>,
}

impl AlignmentGenerator {
    /// `omega` has `d - 1` entries.
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::DimensionTooSmall(omega.len() + 1));
        }
        Ok(AlignmentGenerator { omega })
    }

    /// The generator whose unit-time exponential carries `m` onto the unit
    /// vector `n`.
    pub fn carrying_axis_to(n: &[f64]) -> Result<Self> {
        let d = n.len();
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        let transverse = &n[..d - 1];
        let sin_part = norm(transverse);
        let angle = sin_part.atan2(n[d - 1]);
        let omega = if sin_part > 0.0 {
            transverse.iter().map(|c| angle * c / sin_part).collect()
        } else {
            // n = ±m; any tilt direction works, and for n = m the angle is zero.
            let mut w = vec![0.0; d - 1];
            w[0] = angle;
            w
        };
        Ok(AlignmentGenerator { omega })
    }

    pub fn dim(&self) -> usize {
        self.omega.len() + 1
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// `|ω|`, the rotation angle of `exp(Ω)`.
    pub fn angle(&self) -> f64 {
        norm(&self.omega)
    }

    pub fn generator(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut g = DMatrix::zeros(d, d);
        for (a, &w) in self.omega.iter().enumerate() {
            g[(a, d - 1)] = w;
            g[(d - 1, a)] = -w;
        }
        g
    }

    /// `(b(t), c(t))` in `exp(tΩ) = I + bΩ + cΩ²`.
    pub fn coefficients(&self, t: f64) -> (f64, f64) {
        let s = self.angle() * t;
        let (sinc, cosc) = if s.abs() < SERIES_CUTOFF {
            let s2 = s * s;
            (
                1.0 - s2 / 6.0 + s2 * s2 / 120.0,
                0.5 - s2 / 24.0 + s2 * s2 / 720.0,
            )
        } else {
            (s.sin() / s, (1.0 - s.cos()) / (s * s))
        };
        (t * sinc, t * t * cosc)
    }

    /// `exp(tΩ)` through the closed form.
    pub fn exp(&self, t: f64) -> DMatrix<f64> {
        let d = self.dim();
        let g = self.generator();
        let (b, c) = self.coefficients(t);
        DMatrix::identity(d, d) + &g * b + (&g * &g) * c
    }

    /// `R = exp(-Ω)`, which maps `exp(Ω) m` back onto `m`.
    pub fn rotation(&self) -> RotationMatrix {
        RotationMatrix(self.exp(-1.0))
    }
}

/// The generalized cross product of `d - 1` vectors in `R^d`.
///
/// Returns `v` with `u · v = det(u, x_2, …, x_d)` for every `u`.
pub fn hodge_dual(vectors: &[&[f64]], d: usize) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(Error::DimensionTooSmall(d));
    }
    if vectors.len() != d - 1 {
        return Err(Error::DimensionMismatch {
            expected: d - 1,
            found: vectors.len(),
        });
    }
    if let Some(bad) = vectors.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.len(),
        });
    }
    let mut out = vec![0.0; d];
    hodge_dual_into(d, vectors, &mut out);
    Ok(out)
}

/// Unchecked [`hodge_dual`] writing into `out`.
pub(crate) fn hodge_dual_into(d: usize, cols: &[&[f64]], out: &mut [f64]) {
    match d {
        2 => {
            out[0] = cols[0][1];
            out[1] = -cols[0][0];
        }
        3 => {
            let (a, b) = (cols[0], cols[1]);
            out[0] = a[1] * b[2] - a[2] * b[1];
            out[1] = a[2] * b[0] - a[0] * b[2];
            out[2] = a[0] * b[1] - a[1] * b[0];
        }
        4 | 5 => {
            // v_a = (-1)^a det(rows != a of [x_2 … x_d])
            let mut rows = [0usize; 4];
            for a in 0..d {
                let mut r = 0;
                for row in (0..d).filter(|&row| row != a) {
                    rows[r] = row;
                    r += 1;
                }
                let minor = if d == 4 {
                    det3_rows(cols, &rows[..3])
                } else {
                    det4_rows(cols, &rows[..4])
                };
                out[a] = if a % 2 == 0 { minor } else { -minor };
            }
        }
        _ => {
            let m = d - 1;
            let mut minor = DMatrix::zeros(m, m);
            for a in 0..d {
                for (r, row) in (0..d).filter(|&row| row != a).enumerate() {
                    for (c, col) in cols.iter().enumerate() {
                        minor[(r, c)] = col[row];
                    }
                }
                let det = minor.clone().lu().determinant();
                out[a] = if a % 2 == 0 { det } else { -det };
            }
        }
    }
}

fn det3_rows(cols: &[&[f64]], rows: &[usize]) -> f64 {
    let m = |r: usize, c: usize| cols[c][rows[r]];
    m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
        - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
}

fn det4_rows(cols: &[&[f64]], rows: &[usize]) -> f64 {
    let m = |r: usize, c: usize| cols[c][rows[r]];
    // Laplace expansion along the first two rows.
    let s0 = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    let s1 = m(0, 0) * m(1, 2) - m(0, 2) * m(1, 0);
    let s2 = m(0, 0) * m(1, 3) - m(0, 3) * m(1, 0);
    let s3 = m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1);
    let s4 = m(0, 1) * m(1, 3) - m(0, 3) * m(1, 1);
    let s5 = m(0, 2) * m(1, 3) - m(0, 3) * m(1, 2);
    let c5 = m(2, 0) * m(3, 1) - m(2, 1) * m(3, 0);
    let c4 = m(2, 0) * m(3, 2) - m(2, 2) * m(3, 0);
    let c3 = m(2, 0) * m(3, 3) - m(2, 3) * m(3, 0);
    let c2 = m(2, 1) * m(3, 2) - m(2, 2) * m(3, 1);
    let c1 = m(2, 1) * m(3, 3) - m(2, 3) * m(3, 1);
    let c0 = m(2, 2) * m(3, 3) - m(2, 3) * m(3, 2);
    s0 * c0 - s1 * c1 + s2 * c2 + s3 * c3 - s4 * c4 + s5 * c5
}

/// Determinant of the `d × d` matrix whose columns are `cols`.
pub(crate) fn det_columns(d: usize, cols: &[&[f64]]) -> f64 {
    match d {
        2 => cols[0][0] * cols[1][1] - cols[1][0] * cols[0][1],
        3 => det3_rows(cols, &[0, 1, 2]),
        4 => det4_rows(cols, &[0, 1, 2, 3]),
        _ => {
            // expand along the first column using the dual of the rest
            let mut v = vec![0.0; d];
            hodge_dual_into(d, &cols[1..], &mut v);
            dot(cols[0], &v)
        }
    }
}

/// Pairwise inner products `x_ij = x_i · x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramInvariants {
    n: usize,
    entries: Vec<f64>,
}

impl GramInvariants {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }

    /// Largest entrywise difference from `f(i, j)`.
    pub fn max_deviation_from(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for j in 0..self.n {
                worst = worst.max((self.get(i, j) - f(i, j)).abs());
            }
        }
        worst
    }
}

pub fn gram_invariants(config: &Configuration) -> GramInvariants {
    let n = config.len();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let g = dot(config.node(i), config.node(j));
            entries[i * n + j] = g;
            entries[j * n + i] = g;
        }
    }
    GramInvariants { n, entries }
}

/// The triple product `x_ijk = x_i · (x_j × x_k)`; defined for `d = 3` only.
pub fn triple_product(config: &Configuration, i: usize, j: usize, k: usize) -> Result<f64> {
    if config.dim() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: config.dim(),
        });
    }
    Ok(det_columns(
        3,
        &[config.node(i), config.node(j), config.node(k)],
    ))
}

/// Rotates the configuration so that its average position points along
/// `m = (0, …, 0, 1)`.
///
/// The rotation is `exp(-Ω)` for the [`AlignmentGenerator`] that carries `m`
/// onto the normal `n = X_av / |X_av|`. The leftover SO(d−1) freedom about
/// `m` is fixed by turning the transverse part of the last node (or, if that
/// vanishes, of the nearest earlier node) onto the positive first axis.
pub fn align_to_axis(config: &Configuration) -> Result<(RotationMatrix, Configuration)> {
    let d = config.dim();
    let avg = config.average();
    let r = norm(&avg);
    if r < BALANCED_THRESHOLD {
        return Err(Error::BalancedConfiguration(r));
    }
    let n: Vec<f64> = avg.iter().map(|c| c / r).collect();
    let tilt = AlignmentGenerator::carrying_axis_to(&n)?.rotation();
    let tilted = config.rotated(&tilt);

    let mut total = tilt;
    if d >= 3 {
        let pivot = (0..tilted.len())
            .rev()
            .map(|i| &tilted.node(i)[..d - 1])
            .find(|t| norm(t) > 1e-9);
        if let Some(t) = pivot {
            let spin = plane_rotation_to_first_axis(d, t);
            total = spin.compose(&total);
        }
    }
    let aligned = config.rotated(&total);
    Ok((total, aligned))
}

/// A rotation acting on the first `d - 1` coordinates that turns `t` onto
/// the positive first axis.
fn plane_rotation_to_first_axis(d: usize, t: &[f64]) -> RotationMatrix {
    let len = norm(t);
    let cos_phi = t[0] / len;
    // unit vector in the plane, orthogonal to e_1
    let mut w: Vec<f64> = t.iter().map(|c| c / len).collect();
    w[0] = 0.0;
    let sin_phi = norm(&w);
    let mut m = DMatrix::identity(d, d);
    if sin_phi < 1e-15 {
        if cos_phi < 0.0 {
            // half turn in the (e_1, e_2) plane
            m[(0, 0)] = -1.0;
            m[(1, 1)] = -1.0;
        }
        return RotationMatrix(m);
    }
    w.iter_mut().for_each(|c| *c /= sin_phi);
    // R = I + (cos φ − 1)(e eᵀ + w wᵀ) + sin φ (e wᵀ − w eᵀ), mapping
    // cos φ e + sin φ w to e.
    for a in 0..d - 1 {
        for b in 0..d - 1 {
            let e_a = if a == 0 { 1.0 } else { 0.0 };
            let e_b = if b == 0 { 1.0 } else { 0.0 };
            m[(a, b)] +=
                (cos_phi - 1.0) * (e_a * e_b + w[a] * w[b]) + sin_phi * (e_a * w[b] - w[a] * e_b);
        }
    }
    RotationMatrix(m)
}

/// The rotation `R ∈ SO(d)` that best maps `config` onto `reference` in the
/// least-squares sense, the rotated configuration, and the RMS node distance
/// that remains.
pub fn align_to_reference(
    config: &Configuration,
    reference: &Configuration,
) -> Result<(RotationMatrix, Configuration, f64)> {
    let d = config.dim();
    if reference.dim() != d || reference.len() != config.len() {
        return Err(Error::DimensionMismatch {
            expected: config.len() * d,
            found: reference.len() * reference.dim(),
        });
    }
    let mut h = DMatrix::<f64>::zeros(d, d);
    for (x, y) in config.nodes().zip(reference.nodes()) {
        for a in 0..d {
            for b in 0..d {
                h[(a, b)] += y[a] * x[b];
            }
        }
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut fix = DMatrix::<f64>::identity(d, d);
    if (&u * &v_t).determinant() < 0.0 {
        fix[(d - 1, d - 1)] = -1.0;
    }
    let rotation = RotationMatrix(&u * fix * &v_t);
    let aligned = config.rotated(&rotation);
    let msd: f64 = aligned
        .nodes()
        .zip(reference.nodes())
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>())
        .sum::<f64>()
        / config.len() as f64;
    Ok((rotation, aligned, msd.sqrt()))
}

/// The Hopf map S³ → S²,
/// `(x, y, z, w) ↦ (2(xz − yw), 2(xw + yz), x² + y² − z² − w²)`.
pub fn hopf_map(x: &UnitVector) -> Result<UnitVector> {
    if x.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: x.dim(),
        });
    }
    Ok(UnitVector(hopf_components(x.as_slice())))
}

pub(crate) fn hopf_components(p: &[f64]) -> Vec<f64> {
    let (x, y, z, w) = (p[0], p[1], p[2], p[3]);
    vec![
        2.0 * (x * z - y * w),
        2.0 * (x * w + y * z),
        x * x + y * y - z * z - w * w,
    ]
}

/// `n` independent draws, uniform on S^{d-1}: normalized standard Gaussian
/// vectors from [`seeded_rng`].
pub fn random_unit_configuration(d: usize, n: usize, seed: u64) -> Result<Configuration> {
    if d < 2 {
        return Err(Error::DimensionTooSmall(d));
    }
    if n < d {
        return Err(Error::TooFewNodes { d, n });
    }
    let mut rng = seeded_rng(seed);
    let mut coords = Vec::with_capacity(n * d);
    let mut node = vec![0.0; d];
    for _ in 0..n {
        loop {
            node.iter_mut()
                .for_each(|c| *c = StandardNormal.sample(&mut rng));
            let len = norm(&node);
            if len > 1e-8 {
                coords.extend(node.iter().map(|c| c / len));
                break;
            }
        }
    }
    Ok(Configuration { dim: d, coords })
}
