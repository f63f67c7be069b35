//! Wall-time measurements: full loss evaluations over an (N, length, batch)
//! grid, and solver-only timings for the scaling check.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::assignment::{hungarian_solve, CostMatrix};
use crate::logprob::{log_softmax, Array3};
use crate::loss::{ngram_oaxe_loss, NgramSpec, TruncationConfig};
use crate::seeding::stream_rng;
use crate::vocab::TokenSeq;

pub const LOSS_N_GRID: [usize; 3] = [1, 2, 4];
pub const LEN_GRID: [usize; 4] = [8, 16, 32, 64];
pub const BATCH_GRID: [usize; 2] = [1, 32];

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub kind: String,
    pub n: usize,
    pub len: usize,
    pub batch: usize,
    pub reps: usize,
    pub median_ns: u128,
}

fn median_ns(mut samples: Vec<u128>) -> u128 {
    samples.sort_unstable();
    samples[samples.len() / 2]
}

/// Median wall time of one full loss evaluation (cost build, lift, solve,
/// truncate, gradient) at the given setting.
pub fn loss_eval_median_ns(n: usize, len: usize, batch: usize, reps: usize, seed: u64) -> u128 {
    let vocab = 48usize;
    let mut rng = stream_rng(seed, "bench-loss");
    let lengths = vec![len; batch];
    let data: Vec<f64> =
        (0..batch * len * vocab).map(|_| rng.random_range(-3.0..3.0)).collect();
    let logits = Array3::from_vec(data, (batch, len, vocab)).expect("shape is consistent");
    let lp = log_softmax(&logits, &lengths).expect("finite logits");
    let targets: Vec<TokenSeq> = (0..batch)
        .map(|_| {
            let ids: Vec<u32> = (0..len).map(|_| rng.random_range(2..vocab as u32)).collect();
            TokenSeq::new(ids, vocab).expect("ids in range")
        })
        .collect();
    let spec = NgramSpec::new(n).expect("valid n");
    let tc = TruncationConfig::with_margin(0.15).expect("valid margin");

    // Warm-up outside the timed region.
    let _ = ngram_oaxe_loss(&lp, &targets, spec, &tc).expect("loss evaluates");

    let samples: Vec<u128> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            let out = ngram_oaxe_loss(&lp, &targets, spec, &tc).expect("loss evaluates");
            let dt = start.elapsed().as_nanos();
            std::hint::black_box(out.value);
            dt
        })
        .collect();
    median_ns(samples)
}

/// Median wall time of one solver call on `len x len` product-cost matrices
/// (`cost[i][j] = (i+1)(j+1)` plus jitter). Random matrices let augmenting
/// paths terminate early, well below the worst case; the product family
/// keeps the solver on its cubic path so the scaling bound is visible.
pub fn hungarian_median_ns(len: usize, reps: usize, seed: u64) -> u128 {
    let mut rng = stream_rng(seed, "bench-hungarian");
    let matrices: Vec<CostMatrix> = (0..reps)
        .map(|_| {
            let entries: Vec<f64> = (0..len * len)
                .map(|idx| {
                    let (i, j) = (idx / len, idx % len);
                    ((i + 1) * (j + 1)) as f64 + rng.random_range(0.0..1e-3)
                })
                .collect();
            CostMatrix::new(len, entries).expect("entries valid")
        })
        .collect();

    let _ = hungarian_solve(&matrices[0]);

    let samples: Vec<u128> = matrices
        .iter()
        .map(|c| {
            let start = Instant::now();
            let a = hungarian_solve(c);
            let dt = start.elapsed().as_nanos();
            std::hint::black_box(a.total_cost);
            dt
        })
        .collect();
    median_ns(samples)
}

/// Full grid: loss rows for N x length x batch, then solver rows per length.
pub fn run_all(reps: usize, seed: u64) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for &n in &LOSS_N_GRID {
        for &len in &LEN_GRID {
            for &batch in &BATCH_GRID {
                rows.push(BenchRow {
                    kind: "loss".into(),
                    n,
                    len,
                    batch,
                    reps,
                    median_ns: loss_eval_median_ns(n, len, batch, reps, seed),
                });
            }
        }
    }
    for &len in &LEN_GRID {
        rows.push(BenchRow {
            kind: "hungarian".into(),
            n: 0,
            len,
            batch: 1,
            reps,
            median_ns: hungarian_median_ns(len, reps, seed),
        });
    }
    rows
}

/// Least-squares slope of ln(time) against ln(size).
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Solver slope from already-measured rows.
pub fn hungarian_slope(rows: &[BenchRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.kind == "hungarian")
        .map(|r| (r.len as f64, r.median_ns as f64))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    Some(log_log_slope(&pts))
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("kind,n,len,batch,reps,median_ns\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.kind, r.n, r.len, r.batch, r.reps, r.median_ns
        ));
    }
    out
}
