#![allow(dead_code)]

use std::f64::consts::PI;

use sphere_sync::analysis::order_parameter;
use sphere_sync::dynamics::{rhs, simulate, ModelParams, SimulationOptions};
use sphere_sync::geometry::{hodge_dual, Configuration};
use sphere_sync::Result;

/// Signature of an index tuple, `0` on repeats.
pub fn signature(idx: &[usize]) -> f64 {
    let mut sign = 1.0;
    for a in 0..idx.len() {
        for b in a + 1..idx.len() {
            if idx[a] == idx[b] {
                return 0.0;
            }
            if idx[a] > idx[b] {
                sign = -sign;
            }
        }
    }
    sign
}

/// `Σ_{j_2…j_d} ε_{i j_2 … j_d} v_{j_2 … j_d}` by full enumeration of
/// ordered tuples, with each dual taken from `hodge_dual`.
pub fn signature_sum(config: &Configuration, i: usize) -> Vec<f64> {
    let (d, n) = (config.dim(), config.len());
    let mut total = vec![0.0; d];
    let mut tuple = vec![i];
    fn recurse(config: &Configuration, tuple: &mut Vec<usize>, total: &mut [f64]) {
        let (d, n) = (config.dim(), config.len());
        if tuple.len() == d {
            let s = signature(tuple);
            if s != 0.0 {
                let rows: Vec<&[f64]> = tuple[1..].iter().map(|&j| config.node(j)).collect();
                let v = hodge_dual(&rows, d).unwrap();
                for (t, x) in total.iter_mut().zip(v) {
                    *t += s * x;
                }
            }
            return;
        }
        for j in 0..n {
            if !tuple.contains(&j) {
                tuple.push(j);
                recurse(config, tuple, total);
                tuple.pop();
            }
        }
    }
    let _ = n;
    recurse(config, &mut tuple, &mut total);
    total
}

/// `r∞` of the combined three-body ring as a function of the couplings.
pub fn d3_r_infinity(n: usize, kappa2: f64, kappa3: f64) -> f64 {
    let t = (PI / n as f64).tan();
    let a = kappa2 * n as f64 * t / kappa3;
    kappa2 * n as f64 * t / (6.0 * kappa3.abs()) + (a * a + 12.0).sqrt() / 6.0
}

/// `r∞²` of the four-body torus.
pub fn d4_torus_r_squared(n: usize) -> f64 {
    let nf = n as f64;
    let s1 = (PI / (2.0 * nf)).sin();
    let s3 = (3.0 * PI / (2.0 * nf)).sin();
    (1.0 / (s1 * s1) + 1.0 / (s3 * s3)) / (2.0 * nf * nf)
}

pub fn max_speed(config: &Configuration, params: &ModelParams) -> Result<f64> {
    let drive = rhs(config, params)?;
    Ok(drive
        .as_flat()
        .chunks_exact(config.dim())
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max))
}

/// Result of [`escape`].
pub struct Escape {
    pub config: Configuration,
    pub time: f64,
    pub chunks: usize,
}

/// Integrates away from a near-collinear state until `r < r_exit`.
///
/// Near a co-located state the drive scales like the spread to the power
/// `d − 1`, so a fixed step needs on the order of `spread^{2−d}` steps. Each
/// chunk instead takes ten fixed steps sized for a 2% relative change of
/// the spread.
pub fn escape(
    initial: &Configuration,
    params: &ModelParams,
    r_exit: f64,
    max_chunks: usize,
) -> Result<Escape> {
    let mut config = initial.clone();
    let mut time = 0.0;
    for chunks in 0..max_chunks {
        let r = order_parameter(&config);
        if r < r_exit {
            return Ok(Escape {
                config,
                time,
                chunks,
            });
        }
        let spread = (2.0 * (1.0 - r)).sqrt();
        let speed = max_speed(&config, params)?;
        let dt = (0.02 * spread / speed).clamp(0.01, 1e4);
        let options = SimulationOptions {
            dt: Some(dt),
            t_max: 10.0 * dt,
            steady_tol: 0.0,
            sample_stride: 10,
            checkpoint_stride: None,
            verify_every: None,
        };
        let out = simulate(&config, params, &options)?;
        config = out.final_config;
        time += out.final_time;
    }
    Ok(Escape {
        config,
        time,
        chunks: max_chunks,
    })
}
