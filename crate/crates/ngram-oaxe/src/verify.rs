//! Self-check suites: solver optimality against brute force, the N = 1
//! reduction, loss equivalence with exhaustive enumeration, gradient
//! agreement with central finite differences, truncation monotonicity, and
//! the worked bigram example. The CLI `verify` subcommand runs these; the
//! acceptance tests reuse them with their own trial counts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assignment::{brute_force_solve, hungarian_solve, CostMatrix};
use crate::demo;
use crate::error::Result;
use crate::logprob::{log_softmax, Array3, LogProbBatch};
use crate::loss::{self, LossOutput, NgramSpec, TruncationConfig};
use crate::model::{self, LossKind, ModelDims, ModelParams};
use crate::seeding::stream_rng;
use crate::vocab::TokenSeq;

/// Outcome of one suite: trial count, failure count, and printable notes
/// (including the first counterexample when something fails).
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    pub notes: Vec<String>,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        Self { name: name.into(), trials: 0, failures: 0, notes: Vec::new() }
    }

    fn fail(&mut self, detail: String) {
        if self.failures == 0 {
            self.notes.push(format!("first counterexample: {detail}"));
        }
        self.failures += 1;
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Random normalized log-prob batch plus matching targets.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    batch: usize,
    lengths: &[usize],
    vocab: usize,
) -> (LogProbBatch, Vec<TokenSeq>) {
    let t_max = lengths.iter().copied().max().unwrap_or(1);
    let data: Vec<f64> =
        (0..batch * t_max * vocab).map(|_| rng.random_range(-3.0..3.0)).collect();
    let logits = Array3::from_vec(data, (batch, t_max, vocab)).expect("shape is consistent");
    let lp = log_softmax(&logits, lengths).expect("random logits are finite");
    let targets = lengths
        .iter()
        .map(|&len| {
            let mut ids: Vec<u32> = (0..len).map(|_| rng.random_range(2..vocab as u32)).collect();
            ids.resize(t_max, 0);
            TokenSeq::new(ids, vocab).expect("ids are in range")
        })
        .collect();
    (lp, targets)
}

/// Minimum summed cost over every window-to-ngram permutation, computed
/// directly from the log probabilities. Independent of the cost-matrix,
/// lift, and solver code paths.
pub fn enumerate_min_cost(lp: &LogProbBatch, y: &TokenSeq, b: usize, n: usize) -> f64 {
    let m = y.len() - n + 1;
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = f64::INFINITY;
    loop {
        let mut total = 0.0;
        for (w, &g) in perm.iter().enumerate() {
            for k in 0..n {
                total -= lp.get(b, w + k, y.tokens()[g + k] as usize);
            }
        }
        best = best.min(total);
        if !next_permutation(&mut perm) {
            break;
        }
    }
    best
}

fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// Solver versus brute force: `trials` random matrices at every size from 2
/// through `max_size`, costs must agree within 1e-9.
pub fn suite_hungarian(trials: usize, max_size: usize, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("hungarian");
    let mut rng = stream_rng(seed, "verify-hungarian");
    let max_size = max_size.clamp(2, 9);
    for n in 2..=max_size {
        for _ in 0..trials {
            report.trials += 1;
            let entries: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..10.0)).collect();
            let c = CostMatrix::new(n, entries).expect("entries are valid");
            let fast = hungarian_solve(&c);
            let slow = brute_force_solve(&c).expect("n <= 9");
            if (fast.total_cost - slow.total_cost).abs() > 1e-9 {
                report.fail(format!(
                    "n={n} solver={} brute={} matrix={c:?}",
                    fast.total_cost, slow.total_cost
                ));
            }
        }
    }
    report.notes.push(format!("sizes 2..={max_size}, {trials} matrices each"));
    report
}

/// ngram loss at N = 1 must equal the order-agnostic loss exactly.
pub fn suite_reduction(trials: usize, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("reduction");
    let mut rng = stream_rng(seed, "verify-reduction");
    let tc = TruncationConfig::disabled();
    for _ in 0..trials {
        report.trials += 1;
        let lengths = vec![rng.random_range(1..8), rng.random_range(1..8)];
        let (lp, ys) = random_instance(&mut rng, 2, &lengths, 10);
        let a = loss::ngram_oaxe_loss(&lp, &ys, NgramSpec::new(1).expect("valid"), &tc);
        let b = loss::oaxe_loss(&lp, &ys, &tc);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                if (a.value - b.value).abs() > 1e-12 {
                    report.fail(format!("ngram(1)={} oaxe={}", a.value, b.value));
                }
            }
            (a, b) => report.fail(format!("loss error: {a:?} / {b:?}")),
        }
    }
    report
}

/// Loss value versus exhaustive permutation enumeration for small sentences.
pub fn suite_enumeration(trials_per_setting: usize, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("enumeration");
    let mut rng = stream_rng(seed, "verify-enumeration");
    let tc = TruncationConfig::disabled();
    for len in 4..=8usize {
        for n in 1..=3usize {
            for _ in 0..trials_per_setting {
                report.trials += 1;
                let (lp, ys) = random_instance(&mut rng, 1, &[len], 11);
                let spec = NgramSpec::new(n).expect("valid");
                match loss::ngram_oaxe_loss(&lp, &ys, spec, &tc) {
                    Ok(out) => {
                        let oracle = enumerate_min_cost(&lp, &ys[0], 0, n);
                        if (out.value - oracle).abs() > 1e-9 {
                            report.fail(format!(
                                "I={len} N={n}: loss={} enumeration={oracle}",
                                out.value
                            ));
                        }
                    }
                    Err(e) => report.fail(format!("I={len} N={n}: {e}")),
                }
            }
        }
    }
    report
}

fn loss_for_kind(
    lp: &LogProbBatch,
    ys: &[TokenSeq],
    kind: LossKind,
    spec: NgramSpec,
    tc: &TruncationConfig,
) -> Result<LossOutput> {
    match kind {
        LossKind::Xe => loss::xe_loss(lp, ys),
        LossKind::Oaxe => loss::oaxe_loss(lp, ys, tc),
        LossKind::NgramOaxe => loss::ngram_oaxe_loss(lp, ys, spec, tc),
    }
}

fn grad_spec(kind: LossKind, spec: NgramSpec) -> NgramSpec {
    match kind {
        LossKind::Xe | LossKind::Oaxe => NgramSpec::new(1).expect("valid"),
        LossKind::NgramOaxe => spec,
    }
}

/// Max relative error between the loss-level analytic gradient and central
/// finite differences of the frozen-matching loss, over every (t, v) entry.
pub fn loss_level_fd_error(lp: &LogProbBatch, ys: &[TokenSeq], kind: LossKind, spec: NgramSpec, tc: &TruncationConfig) -> Result<f64> {
    let out = loss_for_kind(lp, ys, kind, spec, tc)?;
    let gspec = grad_spec(kind, spec);

    let frozen = |values: &Array3| -> f64 {
        let mut total = 0.0;
        for (b, (pairs, kept)) in out.matched_pairs.iter().zip(&out.kept_mask).enumerate() {
            let n_eff = gspec.effective_for(ys[b].len());
            for (pair, &keep) in pairs.iter().zip(kept) {
                if !keep {
                    continue;
                }
                for k in 0..n_eff {
                    total -= values.get(b, pair.window + k, ys[b].tokens()[pair.ngram + k] as usize);
                }
            }
        }
        total
    };

    let h = 1e-5;
    let mut values = lp.values().clone();
    let (batch, t_max, vocab) = values.dims();
    let mut max_rel = 0.0f64;
    for b in 0..batch {
        for t in 0..t_max {
            for v in 0..vocab {
                let orig = values.get(b, t, v);
                values.set(b, t, v, orig + h);
                let up = frozen(&values);
                values.set(b, t, v, orig - h);
                let down = frozen(&values);
                values.set(b, t, v, orig);
                let numeric = (up - down) / (2.0 * h);
                let analytic = out.grad.get(b, t, v);
                let denom = numeric.abs().max(analytic.abs()).max(1e-6);
                max_rel = max_rel.max(((numeric - analytic) / denom).abs());
            }
        }
    }
    Ok(max_rel)
}

/// Max relative error between analytic full-model parameter gradients and
/// central finite differences, with the matching frozen.
pub fn model_fd_error(kind: LossKind, seed: u64) -> Result<f64> {
    let dims = ModelDims { src_vocab: 7, tgt_vocab: 8, max_positions: 5, embed_dim: 3, hidden_dim: 4 };
    let mut rng = stream_rng(seed, "verify-model-fd");
    let mut params = ModelParams::init(&dims, &mut rng);
    let src = vec![
        TokenSeq::new(vec![2, 4, 5], dims.src_vocab)?,
        TokenSeq::new(vec![3, 6], dims.src_vocab)?,
    ];
    let lengths = vec![5, 3];
    let targets: Vec<TokenSeq> = lengths
        .iter()
        .map(|&len| {
            let mut ids: Vec<u32> =
                (0..len).map(|_| rng.random_range(2..dims.tgt_vocab as u32)).collect();
            ids.resize(5, 0);
            TokenSeq::new(ids, dims.tgt_vocab)
        })
        .collect::<Result<_>>()?;

    let spec = NgramSpec::new(2)?;
    let tc = TruncationConfig::with_margin(0.05)?;
    let (lp, cache) = model::forward(&params, &src, &lengths)?;
    let out = loss_for_kind(&lp, &targets, kind, spec, &tc)?;
    let gspec = grad_spec(kind, spec);
    let grad_logp = loss::loss_gradient(&lp, &targets, gspec, &out.matched_pairs, &out.kept_mask)?;
    let analytic = model::backward(&params, &cache, &grad_logp)?;

    let frozen_value = |p: &ModelParams| -> f64 {
        let (lp, _) = model::forward(p, &src, &lengths).expect("forward succeeds");
        let mut total = 0.0;
        for (b, (pairs, kept)) in out.matched_pairs.iter().zip(&out.kept_mask).enumerate() {
            let n_eff = gspec.effective_for(targets[b].len());
            for (pair, &keep) in pairs.iter().zip(kept) {
                if !keep {
                    continue;
                }
                for k in 0..n_eff {
                    total -= lp.get(b, pair.window + k, targets[b].tokens()[pair.ngram + k] as usize);
                }
            }
        }
        total
    };

    let h = 1e-5;
    let mut max_rel = 0.0f64;
    for s in 0..6 {
        let len = analytic.slabs()[s].len();
        for k in 0..len {
            let orig = params.slabs()[s][k];
            params.slabs_mut()[s][k] = orig + h;
            let up = frozen_value(&params);
            params.slabs_mut()[s][k] = orig - h;
            let down = frozen_value(&params);
            params.slabs_mut()[s][k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.slabs()[s][k];
            let denom = numeric.abs().max(a.abs()).max(1e-6);
            max_rel = max_rel.max(((numeric - a) / denom).abs());
        }
    }
    Ok(max_rel)
}

/// Gradient checks at both levels for every loss kind.
pub fn suite_gradients(instances: usize, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("gradients");
    let mut rng = stream_rng(seed, "verify-gradients");
    let spec = NgramSpec::new(2).expect("valid");
    let tc = TruncationConfig::with_margin(0.05).expect("valid");
    for kind in [LossKind::Xe, LossKind::Oaxe, LossKind::NgramOaxe] {
        for i in 0..instances {
            report.trials += 1;
            let lengths = vec![rng.random_range(2..6), rng.random_range(2..6)];
            let (lp, ys) = random_instance(&mut rng, 2, &lengths, 9);
            match loss_level_fd_error(&lp, &ys, kind, spec, &tc) {
                Ok(err) if err < 1e-4 => {}
                Ok(err) => report.fail(format!("{kind:?} loss-level rel err {err}")),
                Err(e) => report.fail(format!("{kind:?} loss-level: {e}")),
            }
            report.trials += 1;
            match model_fd_error(kind, seed ^ (i as u64 + 1)) {
                Ok(err) if err < 1e-4 => {}
                Ok(err) => report.fail(format!("{kind:?} model-level rel err {err}")),
                Err(e) => report.fail(format!("{kind:?} model-level: {e}")),
            }
        }
    }
    report
}

/// Kept-term count must be non-increasing over the margin grid, with margin
/// zero keeping everything.
pub fn suite_truncation(seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new("truncation");
    let mut rng = stream_rng(seed, "verify-truncation");
    let spec = NgramSpec::new(2).expect("valid");
    for _ in 0..20 {
        report.trials += 1;
        let lengths = vec![rng.random_range(3..9), rng.random_range(3..9)];
        let (lp, ys) = random_instance(&mut rng, 2, &lengths, 10);
        let mut last = usize::MAX;
        let mut ok = true;
        for (i, margin) in [0.0, 0.05, 0.10, 0.15, 0.20].into_iter().enumerate() {
            let tc = TruncationConfig::with_margin(margin).expect("valid");
            let out = match loss::ngram_oaxe_loss(&lp, &ys, spec, &tc) {
                Ok(o) => o,
                Err(e) => {
                    report.fail(format!("margin {margin}: {e}"));
                    ok = false;
                    break;
                }
            };
            let kept: usize =
                out.kept_mask.iter().map(|m| m.iter().filter(|&&k| k).count()).sum();
            let total: usize = out.kept_mask.iter().map(Vec::len).sum();
            if i == 0 && kept != total {
                report.fail(format!("margin 0 kept {kept}/{total}"));
                ok = false;
                break;
            }
            if kept > last {
                report.fail(format!("kept count grew from {last} to {kept} at margin {margin}"));
                ok = false;
                break;
            }
            last = kept;
        }
        if !ok {
            break;
        }
    }
    report
}

/// The worked bigram example must select the three phrase placements and
/// truncate the leftover low-probability match.
pub fn suite_walkthrough() -> SuiteReport {
    let mut report = SuiteReport::new("figure1");
    let w = match demo::bigram_walkthrough() {
        Ok(w) => w,
        Err(e) => {
            report.trials = 1;
            report.fail(format!("walkthrough failed to run: {e}"));
            return report;
        }
    };
    let expected = [
        ("this afternoon", true),
        ("pizza this", false),
        ("I ate", true),
        ("ate pizza", true),
    ];
    for (pair, (text, kept)) in w.pairs.iter().zip(expected) {
        report.trials += 1;
        let status = if pair.kept { "selected" } else { "truncated" };
        report.notes.push(format!(
            "Pos {},{}: \"{}\" p={:.4} {status}",
            pair.window_start,
            pair.window_start + 1,
            pair.ngram_text,
            pair.probability
        ));
        if pair.ngram_text != text || pair.kept != kept {
            report.fail(format!(
                "window {}: got (\"{}\", kept={}), want (\"{text}\", kept={kept})",
                pair.window_start, pair.ngram_text, pair.kept
            ));
        }
    }
    report.trials += 1;
    let p_bigram = w.bigram_probability(1, "I", "ate");
    report.notes.push(format!("p(\"I ate\" at Pos 1,2) = {p_bigram:.4}"));
    if (p_bigram - 0.02).abs() > 1e-9 {
        report.fail(format!("bigram probability {p_bigram} != 0.02"));
    }
    report.notes.push(format!("kept loss = {:.4}", w.loss.value));
    report
}

/// Everything, with desk-scale trial counts.
pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    vec![
        suite_hungarian(100, 7, seed),
        suite_reduction(100, seed),
        suite_enumeration(20, seed),
        suite_gradients(3, seed),
        suite_truncation(seed),
        suite_walkthrough(),
    ]
}
