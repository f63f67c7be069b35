//! A deliberately tiny conditional model that predicts every target position
//! in parallel: mean-pooled source embedding plus a per-position feedforward
//! head. Small enough that backprop stays hand-verifiable against finite
//! differences, yet source-conditioned and position-wise independent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::SyntheticExample;
use crate::error::{Error, Result};
use crate::eval;
use crate::logprob::{log_softmax, Array3, LogProbBatch};
use crate::loss::{self, LossOutput, NgramSpec, TruncationConfig};
use crate::seeding::stream_rng;
use crate::vocab::TokenSeq;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }
}

/// Shape summary stored alongside checkpointed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub max_positions: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

/// All learnable tensors. The same struct doubles as gradient and optimizer
/// moment storage since every consumer walks the tensors elementwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub src_embed: Mat,
    pub pos_embed: Mat,
    pub hidden_w: Mat,
    pub hidden_b: Vec<f64>,
    pub out_w: Mat,
    pub out_b: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dims: &ModelDims) -> Self {
        Self {
            src_embed: Mat::zeros(dims.src_vocab, dims.embed_dim),
            pos_embed: Mat::zeros(dims.max_positions, dims.embed_dim),
            hidden_w: Mat::zeros(dims.embed_dim, dims.hidden_dim),
            hidden_b: vec![0.0; dims.hidden_dim],
            out_w: Mat::zeros(dims.hidden_dim, dims.tgt_vocab),
            out_b: vec![0.0; dims.tgt_vocab],
        }
    }

    pub fn init<R: Rng>(dims: &ModelDims, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims);
        for slab in p.slabs_mut() {
            for w in slab.iter_mut() {
                *w = rng.random_range(-0.1..0.1);
            }
        }
        // Biases start at zero.
        p.hidden_b.iter_mut().for_each(|b| *b = 0.0);
        p.out_b.iter_mut().for_each(|b| *b = 0.0);
        p
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            src_vocab: self.src_embed.rows,
            tgt_vocab: self.out_w.cols,
            max_positions: self.pos_embed.rows,
            embed_dim: self.src_embed.cols,
            hidden_dim: self.hidden_w.cols,
        }
    }

    pub fn slabs(&self) -> [&[f64]; 6] {
        [
            &self.src_embed.data,
            &self.pos_embed.data,
            &self.hidden_w.data,
            &self.hidden_b,
            &self.out_w.data,
            &self.out_b,
        ]
    }

    pub fn slabs_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.src_embed.data,
            &mut self.pos_embed.data,
            &mut self.hidden_w.data,
            &mut self.hidden_b,
            &mut self.out_w.data,
            &mut self.out_b,
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.slabs().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

/// Activations retained from a forward pass for exact backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    src: Vec<TokenSeq>,
    pooled: Mat,
    hidden_act: Array3,
    logprobs: LogProbBatch,
}

/// Runs the model: position t's distribution is
/// `log_softmax(out_w' * tanh(hidden_w' * (mean(src embeddings) + pos_embed[t])))`.
/// Positions are conditionally independent given the source.
pub fn forward(
    params: &ModelParams,
    src: &[TokenSeq],
    target_len: &[usize],
) -> Result<(LogProbBatch, ForwardCache)> {
    let dims = params.dims();
    if src.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if src.len() != target_len.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} source sentences for {} target lengths",
            src.len(),
            target_len.len()
        )));
    }
    for (b, len) in target_len.iter().enumerate() {
        if *len > dims.max_positions {
            return Err(Error::ShapeMismatch(format!(
                "sentence {b}: target length {len} exceeds {} positions",
                dims.max_positions
            )));
        }
    }
    for (b, s) in src.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::ShapeMismatch(format!("sentence {b}: empty source")));
        }
        if let Some(&id) = s.tokens().iter().find(|&&id| id as usize >= dims.src_vocab) {
            return Err(Error::TokenOutOfRange { id, vocab: dims.src_vocab });
        }
    }

    let batch = src.len();
    let t_max = target_len.iter().copied().max().unwrap_or(0).max(1);
    let (d, h, v) = (dims.embed_dim, dims.hidden_dim, dims.tgt_vocab);

    let mut pooled = Mat::zeros(batch, d);
    for (b, s) in src.iter().enumerate() {
        let inv = 1.0 / s.len() as f64;
        let row = pooled.row_mut(b);
        for &tok in s.tokens() {
            for (acc, &e) in row.iter_mut().zip(params.src_embed.row(tok as usize)) {
                *acc += e * inv;
            }
        }
    }

    let mut hidden_act = Array3::zeros(batch, t_max, h);
    let mut logits = Array3::zeros(batch, t_max, v);
    let mut input = vec![0.0; d];
    for b in 0..batch {
        for t in 0..t_max {
            for i in 0..d {
                input[i] = pooled.get(b, i) + params.pos_embed.get(t, i);
            }
            let act_row = hidden_act.row_mut(b, t);
            for (j, a) in act_row.iter_mut().enumerate() {
                let mut z = params.hidden_b[j];
                for (i, &x) in input.iter().enumerate() {
                    z += x * params.hidden_w.get(i, j);
                }
                *a = z.tanh();
            }
            let act_row = hidden_act.row(b, t);
            let logit_row = logits.row_mut(b, t);
            logit_row.copy_from_slice(&params.out_b);
            for (j, &a) in act_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (lv, &w) in logit_row.iter_mut().zip(params.out_w.row(j)) {
                    *lv += a * w;
                }
            }
        }
    }

    let logprobs = log_softmax(&logits, target_len)?;
    let cache = ForwardCache { src: src.to_vec(), pooled, hidden_act, logprobs: logprobs.clone() };
    Ok((logprobs, cache))
}

/// Exact gradients of the loss with respect to every parameter, given the
/// loss gradient with respect to the log probabilities.
pub fn backward(params: &ModelParams, cache: &ForwardCache, grad_logp: &Array3) -> Result<ModelParams> {
    let dims = params.dims();
    let (batch, t_max, v) = grad_logp.dims();
    if cache.logprobs.batch() != batch
        || cache.logprobs.positions() != t_max
        || cache.logprobs.vocab() != v
        || cache.src.len() != batch
    {
        return Err(Error::ShapeMismatch(format!(
            "cache of shape ({}, {}, {}) for gradient of shape ({batch}, {t_max}, {v})",
            cache.logprobs.batch(),
            cache.logprobs.positions(),
            cache.logprobs.vocab()
        )));
    }
    if v != dims.tgt_vocab {
        return Err(Error::ShapeMismatch(format!(
            "gradient vocab {v} != model vocab {}",
            dims.tgt_vocab
        )));
    }

    let (d, h) = (dims.embed_dim, dims.hidden_dim);
    let mut grads = ModelParams::zeros(&dims);
    let mut pooled_grad = Mat::zeros(batch, d);
    let mut dlogits = vec![0.0; v];
    let mut d_act = vec![0.0; h];
    let mut d_input = vec![0.0; d];

    for b in 0..batch {
        let len = cache.logprobs.len_of(b);
        for t in 0..len {
            let g = grad_logp.row(b, t);
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            let g_sum: f64 = g.iter().sum();
            let lp_row = cache.logprobs.row(b, t);
            for ((dl, &gv), &lp) in dlogits.iter_mut().zip(g).zip(lp_row) {
                *dl = gv - lp.exp() * g_sum;
            }

            let act = cache.hidden_act.row(b, t);
            for (j, da) in d_act.iter_mut().enumerate() {
                let w_row = grads.out_w.row_mut(j);
                let a = act[j];
                let mut acc = 0.0;
                for ((wg, &dl), &w) in w_row.iter_mut().zip(&dlogits).zip(params.out_w.row(j)) {
                    *wg += a * dl;
                    acc += w * dl;
                }
                *da = acc;
            }
            for (bo, &dl) in grads.out_b.iter_mut().zip(&dlogits) {
                *bo += dl;
            }

            for j in 0..h {
                let dz = d_act[j] * (1.0 - act[j] * act[j]);
                d_act[j] = dz;
                grads.hidden_b[j] += dz;
            }

            for (i, di) in d_input.iter_mut().enumerate() {
                let u = cache.pooled.get(b, i) + params.pos_embed.get(t, i);
                let wg_row = grads.hidden_w.row_mut(i);
                let w_row = params.hidden_w.row(i);
                let mut acc = 0.0;
                for ((wg, &dz), &w) in wg_row.iter_mut().zip(&d_act).zip(w_row) {
                    *wg += u * dz;
                    acc += w * dz;
                }
                *di = acc;
            }

            for (pg, &di) in grads.pos_embed.row_mut(t).iter_mut().zip(&d_input) {
                *pg += di;
            }
            for (pg, &di) in pooled_grad.row_mut(b).iter_mut().zip(&d_input) {
                *pg += di;
            }
        }
    }

    for (b, s) in cache.src.iter().enumerate() {
        let inv = 1.0 / s.len() as f64;
        let pg = pooled_grad.row(b);
        for &tok in s.tokens() {
            for (eg, &g) in grads.src_embed.row_mut(tok as usize).iter_mut().zip(pg) {
                *eg += g * inv;
            }
        }
    }

    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(dims: &ModelDims) -> Self {
        Self { m: ModelParams::zeros(dims), v: ModelParams::zeros(dims), step: 0 }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    config: &AdamConfig,
) {
    state.step += 1;
    let bc1 = 1.0 - config.beta1.powi(state.step as i32);
    let bc2 = 1.0 - config.beta2.powi(state.step as i32);

    let grad_slabs = grads.slabs();
    let mut m_slabs = state.m.slabs_mut();
    let mut v_slabs = state.v.slabs_mut();
    let mut p_slabs = params.slabs_mut();
    for s in 0..p_slabs.len() {
        let g = grad_slabs[s];
        let m = &mut m_slabs[s];
        let v = &mut v_slabs[s];
        let p = &mut p_slabs[s];
        for k in 0..g.len() {
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
}

/// Which training objective drives the post-pretraining updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Xe,
    Oaxe,
    #[value(name = "ngram_oaxe")]
    #[serde(rename = "ngram_oaxe")]
    NgramOaxe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub ngram_n: usize,
    pub truncation_margin: f64,
    pub pretrain_steps: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_kind: LossKind::NgramOaxe,
            ngram_n: 2,
            truncation_margin: 0.15,
            pretrain_steps: 500,
            steps: 5000,
            batch_size: 16,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            embed_dim: 32,
            hidden_dim: 64,
            eval_every: 0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be positive".into()));
        }
        if self.pretrain_steps > self.steps {
            return Err(Error::InvalidConfig(format!(
                "pretrain_steps ({}) must not exceed steps ({})",
                self.pretrain_steps, self.steps
            )));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::InvalidConfig(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("model widths must be positive".into()));
        }
        NgramSpec::new(self.ngram_n)?;
        TruncationConfig::new(self.truncation_margin, true)?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }
}

/// Partial config parsed from a `--config` JSON file; unset fields keep
/// their defaults and explicit CLI flags win over both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub loss_kind: Option<LossKind>,
    pub ngram_n: Option<usize>,
    pub truncation_margin: Option<f64>,
    pub pretrain_steps: Option<usize>,
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    pub embed_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub eval_every: Option<usize>,
    pub seed: Option<u64>,
}

impl TrainOverrides {
    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes)
            .map_err(|e| Error::InvalidConfig(format!("config file: {e}")))
    }

    pub fn apply(&self, config: &mut TrainConfig) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = v; })*
            };
        }
        take!(
            loss_kind,
            ngram_n,
            truncation_margin,
            pretrain_steps,
            steps,
            batch_size,
            lr,
            beta1,
            beta2,
            eps,
            embed_dim,
            hidden_dim,
            eval_every,
            seed
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub keep_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub step: usize,
    pub repetition_rate: f64,
    pub mode_match_rate: f64,
    pub bigram_precision: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub rows: Vec<StepRecord>,
    pub evals: Vec<EvalSnapshot>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub dims: ModelDims,
    pub history: TrainHistory,
}

fn batch_loss(
    lp: &LogProbBatch,
    targets: &[TokenSeq],
    kind: LossKind,
    spec: NgramSpec,
    tc: &TruncationConfig,
) -> Result<LossOutput> {
    match kind {
        LossKind::Xe => loss::xe_loss(lp, targets),
        LossKind::Oaxe => loss::oaxe_loss(lp, targets, tc),
        LossKind::NgramOaxe => loss::ngram_oaxe_loss(lp, targets, spec, tc),
    }
}

/// Trains on the corpus: the first `pretrain_steps` updates always use the
/// position-aligned loss, then the configured loss takes over. Fully
/// deterministic given the seed.
pub fn train(config: &TrainConfig, corpus: &[SyntheticExample]) -> Result<TrainOutput> {
    train_with(config, corpus, |_| {})
}

/// Like [`train`] but streams every step record to `on_step` so callers can
/// persist partial history if training diverges.
pub fn train_with(
    config: &TrainConfig,
    corpus: &[SyntheticExample],
    mut on_step: impl FnMut(&StepRecord),
) -> Result<TrainOutput> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let (src_vocab, tgt_vocab, max_len) = corpus_extents(corpus);
    let dims = ModelDims {
        src_vocab,
        tgt_vocab,
        max_positions: max_len,
        embed_dim: config.embed_dim,
        hidden_dim: config.hidden_dim,
    };

    let mut init_rng = stream_rng(config.seed, "init");
    let mut params = ModelParams::init(&dims, &mut init_rng);
    let mut state = AdamState::new(&dims);
    let adam = config.adam();
    let spec = NgramSpec::new(config.ngram_n)?;
    let tc = TruncationConfig::new(config.truncation_margin, true)?;

    let mut sample_rng = stream_rng(config.seed, "sampling");
    let mut history = TrainHistory::default();

    for step in 0..config.steps {
        let idx: Vec<usize> =
            (0..config.batch_size).map(|_| sample_rng.random_range(0..corpus.len())).collect();
        let t_batch = idx.iter().map(|&i| corpus[i].target.len()).max().unwrap_or(1);

        let mut src = Vec::with_capacity(idx.len());
        let mut targets = Vec::with_capacity(idx.len());
        let mut lengths = Vec::with_capacity(idx.len());
        for &i in &idx {
            let ex = &corpus[i];
            src.push(TokenSeq::new(ex.src.clone(), src_vocab)?);
            let mut padded = ex.target.clone();
            padded.resize(t_batch, 0);
            targets.push(TokenSeq::new(padded, tgt_vocab)?);
            lengths.push(ex.target.len());
        }

        let (lp, cache) = forward(&params, &src, &lengths)?;
        let kind = if step < config.pretrain_steps { LossKind::Xe } else { config.loss_kind };
        let out = batch_loss(&lp, &targets, kind, spec, &tc)?;
        if !out.value.is_finite() {
            return Err(Error::Diverged { step });
        }

        let total_pairs: usize = out.matched_pairs.iter().map(Vec::len).sum();
        let kept_pairs: usize =
            out.kept_mask.iter().map(|m| m.iter().filter(|&&k| k).count()).sum();
        let keep_rate = if total_pairs == 0 { 1.0 } else { kept_pairs as f64 / total_pairs as f64 };

        let grads = backward(&params, &cache, &out.grad)?;
        adam_step(&mut params, &grads, &mut state, &adam);

        let record =
            StepRecord { step, loss: out.value / config.batch_size as f64, keep_rate };
        on_step(&record);
        history.rows.push(record);

        if config.eval_every > 0 && (step + 1) % config.eval_every == 0 {
            history.evals.push(eval_snapshot(&params, corpus, step, src_vocab)?);
        }
    }

    Ok(TrainOutput { params, dims, history })
}

fn eval_snapshot(
    params: &ModelParams,
    corpus: &[SyntheticExample],
    step: usize,
    src_vocab: usize,
) -> Result<EvalSnapshot> {
    let sample = &corpus[..corpus.len().min(128)];
    let src: Vec<TokenSeq> = sample
        .iter()
        .map(|ex| TokenSeq::new(ex.src.clone(), src_vocab))
        .collect::<Result<_>>()?;
    let lengths: Vec<usize> = sample.iter().map(|ex| ex.target.len()).collect();
    let raw = decode(params, &src, &lengths, false)?;
    let refs: Vec<Vec<Vec<u32>>> = sample.iter().map(|ex| ex.refs.clone()).collect();
    let deduped: Vec<Vec<u32>> = raw.iter().map(|o| eval::dedup_adjacent(o)).collect();
    Ok(EvalSnapshot {
        step,
        repetition_rate: eval::repetition_rate(&raw)?,
        mode_match_rate: eval::mode_match_rate(&raw, &refs)?,
        bigram_precision: eval::ngram_precision(&deduped, &refs, 2).unwrap_or(0.0),
    })
}

/// Greedy per-position argmax decoding with oracle target lengths. With
/// `dedup`, runs of identical adjacent tokens collapse to one.
pub fn decode(
    params: &ModelParams,
    src: &[TokenSeq],
    target_len: &[usize],
    dedup: bool,
) -> Result<Vec<Vec<u32>>> {
    let (lp, _) = forward(params, src, target_len)?;
    let mut outputs = Vec::with_capacity(src.len());
    for (b, &len) in target_len.iter().enumerate() {
        let mut seq = Vec::with_capacity(len);
        for t in 0..len {
            let row = lp.row(b, t);
            let mut best = 0usize;
            for (v, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = v;
                }
            }
            seq.push(best as u32);
        }
        outputs.push(if dedup { eval::dedup_adjacent(&seq) } else { seq });
    }
    Ok(outputs)
}

/// Largest source id + 1, largest target/ref id + 1 (at least pad+unk), and
/// the longest reference length across the corpus.
pub fn corpus_extents(corpus: &[SyntheticExample]) -> (usize, usize, usize) {
    let mut src_max = 1u32;
    let mut tgt_max = 1u32;
    let mut max_len = 1usize;
    for ex in corpus {
        for &id in &ex.src {
            src_max = src_max.max(id);
        }
        for &id in &ex.target {
            tgt_max = tgt_max.max(id);
        }
        max_len = max_len.max(ex.target.len());
        for r in &ex.refs {
            for &id in r {
                tgt_max = tgt_max.max(id);
            }
            max_len = max_len.max(r.len());
        }
    }
    (src_max as usize + 1, tgt_max as usize + 1, max_len)
}

/// Self-describing serialized model: config, vocab, and parameter arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub src_vocab: Vec<String>,
    pub tgt_vocab: Vec<String>,
    pub dims: ModelDims,
    pub params: ModelParams,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_slice(bytes).map_err(|e| Error::CheckpointParse(e.to_string()))?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointParse(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        let d = &self.dims;
        let p = &self.params;
        // checked_mul: dims arrive from untrusted files.
        let mat_ok = |m: &Mat, rows: usize, cols: usize| {
            m.rows == rows
                && m.cols == cols
                && rows.checked_mul(cols).is_some_and(|len| m.data.len() == len)
        };
        let shape_ok = mat_ok(&p.src_embed, d.src_vocab, d.embed_dim)
            && mat_ok(&p.pos_embed, d.max_positions, d.embed_dim)
            && mat_ok(&p.hidden_w, d.embed_dim, d.hidden_dim)
            && p.hidden_b.len() == d.hidden_dim
            && mat_ok(&p.out_w, d.hidden_dim, d.tgt_vocab)
            && p.out_b.len() == d.tgt_vocab;
        if !shape_ok {
            return Err(Error::CheckpointParse("parameter shapes disagree with dims".into()));
        }
        if self.src_vocab.len() != d.src_vocab || self.tgt_vocab.len() != d.tgt_vocab {
            return Err(Error::CheckpointParse("vocab lists disagree with dims".into()));
        }
        if !self.params.all_finite() {
            return Err(Error::CheckpointParse("non-finite parameter".into()));
        }
        Ok(())
    }
}
