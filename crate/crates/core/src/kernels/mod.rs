//! Potentials and per-node drive vectors.
//!
//! The pairwise drive is the average position `X_av`. The d-body drive on
//! node `i` is
//!
//! ```text
//! Y_i = N^{-(d-1)} Σ ε_{i i_2 … i_d} v(x_{i_2}, …, x_{i_d})
//! ```
//!
//! summed over ordered tuples, with `ε` the signature and `v` the
//! generalized cross product. Its potential satisfies
//! `∇_i 𝔙_d = d N^{d-1} Y_i`.
//!
//! [`dbody_drive_naive`] enumerates every tuple and is kept as an oracle.
//! [`dbody_drive_fast`] and [`DBodyKernel`] use the prefix/suffix wedge
//! tables of [`exterior`], linear in `N`.

pub mod exterior;

use crate::error::{Error, Result};
use crate::geometry::{average_position, dot, hodge_dual_into, Configuration};

pub use exterior::WedgeTables;

/// One d-vector per node, stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveField {
    dim: usize,
    values: Vec<f64>,
}

impl DriveField {
    pub fn from_flat(dim: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len() % dim, 0);
        DriveField { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    /// `max_i ‖a_i − b_i‖ / max(max_i ‖b_i‖, 1e-300)`.
    pub fn relative_deviation(&self, reference: &DriveField) -> f64 {
        let mut diff = 0.0_f64;
        let mut scale = 0.0_f64;
        for i in 0..self.len() {
            let (a, b) = (self.get(i), reference.get(i));
            let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
            diff = diff.max(d2.sqrt());
            scale = scale.max(dot(b, b).sqrt());
        }
        diff / scale.max(1e-300)
    }
}

fn require_dbody(config: &Configuration) -> Result<()> {
    if config.len() < config.dim() {
        return Err(Error::TooFewNodes {
            d: config.dim(),
            n: config.len(),
        });
    }
    Ok(())
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `Σ_{ij} x_i · x_j = N² ‖X_av‖²`, the global pairwise potential.
pub fn potential_pairwise(config: &Configuration) -> f64 {
    let sum: Vec<f64> = config
        .average()
        .iter()
        .map(|c| c * config.len() as f64)
        .collect();
    dot(&sum, &sum)
}

/// Global pairwise drive: `Y_i = X_av` for every node.
pub fn pairwise_drive(config: &Configuration) -> DriveField {
    let avg = config.average();
    let values = avg.repeat(config.len());
    DriveField::from_flat(config.dim(), values)
}

/// `𝔙_d = Σ ε_{i_1 … i_d} det(x_{i_1}, …, x_{i_d})` over all index tuples,
/// which is `d!` times the sum over increasing tuples.
pub fn potential_dbody(config: &Configuration) -> Result<f64> {
    require_dbody(config)?;
    let mut tables = WedgeTables::new(config.dim());
    tables.fill(config.as_flat());
    Ok(factorial(config.dim()) * tables.sorted_determinant_sum(config.as_flat()))
}

/// The d-body drive by direct enumeration of every ordered tuple.
///
/// Cost is `O(N^d)`; intended as a reference for [`dbody_drive_fast`].
pub fn dbody_drive_naive(config: &Configuration) -> Result<DriveField> {
    require_dbody(config)?;
    let (d, n) = (config.dim(), config.len());
    let scale = (n as f64).powi(d as i32 - 1).recip();
    let mut values = vec![0.0; n * d];
    let mut tuple = vec![0usize; d];
    let mut v = vec![0.0; d];
    for i in 0..n {
        tuple[0] = i;
        let acc = &mut values[i * d..(i + 1) * d];
        enumerate_tail(config, &mut tuple, 1, &mut v, acc);
        acc.iter_mut().for_each(|c| *c *= scale);
    }
    Ok(DriveField::from_flat(d, values))
}

fn enumerate_tail(
    config: &Configuration,
    tuple: &mut [usize],
    depth: usize,
    v: &mut [f64],
    acc: &mut [f64],
) {
    let d = config.dim();
    if depth == d {
        let inversions = (0..d)
            .flat_map(|a| (a + 1..d).map(move |b| (a, b)))
            .filter(|&(a, b)| tuple[a] > tuple[b])
            .count();
        let cols: Vec<&[f64]> = tuple[1..].iter().map(|&j| config.node(j)).collect();
        hodge_dual_into(d, &cols, v);
        let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
        for (a, c) in acc.iter_mut().zip(v.iter()) {
            *a += sign * c;
        }
        return;
    }
    for j in 0..config.len() {
        if tuple[..depth].contains(&j) {
            continue;
        }
        tuple[depth] = j;
        enumerate_tail(config, tuple, depth + 1, v, acc);
    }
}

/// The d-body drive through prefix/suffix wedge sums, `O(N d 2^d)`.
pub fn dbody_drive_fast(config: &Configuration) -> Result<DriveField> {
    require_dbody(config)?;
    let mut kernel = DBodyKernel::new(config.dim());
    let mut values = vec![0.0; config.as_flat().len()];
    kernel.drive(config.as_flat(), &mut values);
    Ok(DriveField::from_flat(config.dim(), values))
}

/// Reusable workspace for the fast d-body drive.
///
/// Ordering the `(d-1)!` permutations of each tuple against the
/// antisymmetric dual gives `(d-1)! Σ_J (-1)^{#{j∈J : j<i}} v_J` over
/// increasing tuples `J`; the wedge tables evaluate that sum for all `i`.
#[derive(Debug, Clone)]
pub struct DBodyKernel {
    tables: WedgeTables,
    orderings: f64,
}

impl DBodyKernel {
    pub fn new(d: usize) -> Self {
        DBodyKernel {
            tables: WedgeTables::new(d),
            orderings: factorial(d - 1),
        }
    }

    pub fn dim(&self) -> usize {
        self.tables.dim()
    }

    /// Writes `Y_i` for all nodes of the row-major `coords` into `out`.
    /// Needs at least `d` nodes for a nonzero result.
    pub fn drive(&mut self, coords: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let n = coords.len() / d;
        self.tables.fill(coords);
        let scale = self.orderings / (n as f64).powi(d as i32 - 1);
        for (i, y) in out.chunks_exact_mut(d).enumerate() {
            self.tables.signed_dual_sum(i, y);
            y.iter_mut().for_each(|c| *c *= scale);
        }
    }

    /// `𝔙_d` from the tables filled by the last [`DBodyKernel::drive`] call.
    pub fn last_potential(&self, coords: &[f64]) -> f64 {
        factorial(self.dim()) * self.tables.sorted_determinant_sum(coords)
    }
}

/// Writes `X_av` into every row of `out`.
pub(crate) fn pairwise_drive_into(dim: usize, coords: &[f64], out: &mut [f64]) {
    let avg = average_position(dim, coords);
    for y in out.chunks_exact_mut(dim) {
        y.copy_from_slice(&avg);
    }
}
