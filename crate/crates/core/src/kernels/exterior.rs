//! Prefix and suffix elementary wedge sums over Λ^k(R^d).
//!
//! A multivector is stored densely with one slot per subset of axes, indexed
//! by the subset's bitmask; within a grade, subsets are enumerated in
//! lexicographic order ([`WedgeTables::grade_basis`]). Slot `0` is the scalar.

/// `A ∧ e_b` for sorted `A` moves `e_b` left past every element of `A`
/// larger than `b`.
fn append_sign(mask: u32, b: usize) -> f64 {
    if (mask >> (b + 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `e_b ∧ A` moves `e_b` right past every element of `A` smaller than `b`.
fn prepend_sign(mask: u32, b: usize) -> f64 {
    if (mask & ((1u32 << b) - 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Parity of `A ∧ B` for disjoint `A`, `B`: one swap per pair `a > b`.
fn merge_sign(a: u32, b: u32) -> f64 {
    let mut swaps = 0;
    let mut rest = b;
    while rest != 0 {
        let bit = rest.trailing_zeros();
        swaps += (a >> (bit + 1)).count_ones();
        rest &= rest - 1;
    }
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy)]
struct WedgeOp {
    src: u32,
    dst: u32,
    axis: usize,
    sign: f64,
}

#[derive(Debug, Clone, Copy)]
struct Pairing {
    prefix: u32,
    suffix: u32,
    axis: usize,
    sign: f64,
}

/// Accumulators `P_k(m) = Σ_{j_1<…<j_k<m} x_{j_1} ∧ … ∧ x_{j_k}` and
/// `S_k(m) = Σ_{m<j_1<…<j_k} x_{j_1} ∧ … ∧ x_{j_k}` for `k ≤ d - 1`.
///
/// Buffers are reused between calls, so one table serves a whole
/// integration without allocating.
#[derive(Debug, Clone)]
pub struct WedgeTables {
    dim: usize,
    width: usize,
    nodes: usize,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
    append_ops: Vec<WedgeOp>,
    prepend_ops: Vec<WedgeOp>,
    pairings: Vec<Pairing>,
    top_ops: Vec<WedgeOp>,
}

impl WedgeTables {
    /// Tables for dimension `d`; `d` may not exceed 20.
    pub fn new(d: usize) -> Self {
        assert!((2..=20).contains(&d), "wedge tables support 2 <= d <= 20");
        let width = 1usize << d;
        let mut append_ops = Vec::new();
        let mut prepend_ops = Vec::new();
        let mut top_ops = Vec::new();
        for src in 0..width as u32 {
            let grade = src.count_ones() as usize;
            if grade + 1 > d {
                continue;
            }
            for axis in (0..d).filter(|&b| src & (1 << b) == 0) {
                let dst = src | (1 << axis);
                let append = WedgeOp {
                    src,
                    dst,
                    axis,
                    sign: append_sign(src, axis),
                };
                if grade + 1 < d {
                    append_ops.push(append);
                    prepend_ops.push(WedgeOp {
                        sign: prepend_sign(src, axis),
                        ..append
                    });
                } else {
                    top_ops.push(append);
                }
            }
        }
        // ⋆ e_{all but a} = (-1)^a e_a, and the split of a (d-1)-subset into
        // k prefix and d-1-k suffix elements carries (-1)^k from the
        // signature of the node ordering.
        let full = (width - 1) as u32;
        let mut pairings = Vec::with_capacity(d << (d - 1));
        for axis in 0..d {
            let rest = full & !(1u32 << axis);
            let mut sub = rest;
            loop {
                let suffix = rest & !sub;
                let k = sub.count_ones();
                let mut sign = merge_sign(sub, suffix);
                if k % 2 == 1 {
                    sign = -sign;
                }
                if axis % 2 == 1 {
                    sign = -sign;
                }
                pairings.push(Pairing {
                    prefix: sub,
                    suffix,
                    axis,
                    sign,
                });
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
        }
        WedgeTables {
            dim: d,
            width,
            nodes: 0,
            prefix: Vec::new(),
            suffix: Vec::new(),
            append_ops,
            prepend_ops,
            pairings,
            top_ops,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of slots per multivector, `2^d`.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Bitmasks of grade `k` in lexicographic order.
    pub fn grade_basis(d: usize, k: usize) -> Vec<u32> {
        let mut out: Vec<u32> = (0..1u32 << d)
            .filter(|m| m.count_ones() as usize == k)
            .collect();
        out.sort_by_key(|&m| (0..d).filter(|&b| m & (1 << b) != 0).collect::<Vec<_>>());
        out
    }

    /// Fills both tables from row-major node coordinates.
    pub fn fill(&mut self, coords: &[f64]) {
        let (d, w) = (self.dim, self.width);
        let n = coords.len() / d;
        self.nodes = n;
        self.prefix.clear();
        self.prefix.resize((n + 1) * w, 0.0);
        self.suffix.clear();
        self.suffix.resize((n + 1) * w, 0.0);

        self.prefix[0] = 1.0;
        for m in 0..n {
            let x = &coords[m * d..(m + 1) * d];
            let (done, next) = self.prefix.split_at_mut((m + 1) * w);
            let prev = &done[m * w..];
            let next = &mut next[..w];
            next.copy_from_slice(prev);
            for op in &self.append_ops {
                next[op.dst as usize] += op.sign * prev[op.src as usize] * x[op.axis];
            }
        }

        // suffix slot m holds S(nodes >= m); slot n is the empty sum
        self.suffix[n * w] = 1.0;
        for m in (0..n).rev() {
            let x = &coords[m * d..(m + 1) * d];
            let (head, tail) = self.suffix.split_at_mut((m + 1) * w);
            let prev = &tail[..w];
            let next = &mut head[m * w..];
            next.copy_from_slice(prev);
            for op in &self.prepend_ops {
                next[op.dst as usize] += op.sign * x[op.axis] * prev[op.src as usize];
            }
        }
    }

    /// `P(m)`: wedge sums over nodes `0..m`.
    pub fn prefix(&self, m: usize) -> &[f64] {
        &self.prefix[m * self.width..(m + 1) * self.width]
    }

    /// `S(m)`: wedge sums over nodes `m..N`.
    pub fn suffix(&self, m: usize) -> &[f64] {
        &self.suffix[m * self.width..(m + 1) * self.width]
    }

    /// `⋆ Σ_k (-1)^k P_k(<i) ∧ S_{d-1-k}(>i)`, i.e. the sum of
    /// `(-1)^{#{j < i}} v_J` over sorted `(d-1)`-subsets `J` not containing `i`.
    pub fn signed_dual_sum(&self, i: usize, out: &mut [f64]) {
        let before = self.prefix(i);
        let after = self.suffix(i + 1);
        out.iter_mut().for_each(|o| *o = 0.0);
        for p in &self.pairings {
            out[p.axis] += p.sign * before[p.prefix as usize] * after[p.suffix as usize];
        }
    }

    /// `Σ_{j_1<…<j_d} det(x_{j_1}, …, x_{j_d})`, from the last prefix slot.
    pub fn sorted_determinant_sum(&self, coords: &[f64]) -> f64 {
        let d = self.dim;
        let full = (self.width - 1) as u32;
        let mut total = 0.0;
        // P_d(n) = Σ_m P_{d-1}(m) ∧ x_m
        for m in 0..self.nodes {
            let x = &coords[m * d..(m + 1) * d];
            let p = self.prefix(m);
            for op in self.top_ops.iter().filter(|op| op.dst == full) {
                total += op.sign * p[op.src as usize] * x[op.axis];
            }
        }
        total
    }
}
