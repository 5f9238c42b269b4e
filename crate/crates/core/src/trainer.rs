//! A deterministic toy conditional caption generator, trained with the
//! combined language-model + knowledge-enhanced loss.
//!
//! The model stands in for a frozen vision-language stack at desk
//! scale: a condition vector (the "image") passes through a trainable
//! low-rank adapter and a frozen random projection to become a prefix
//! embedding; each next-token distribution is a linear read-out of
//! `embed(prev_token) + prefix`. Only the adapter, token embeddings,
//! and output projection train; the base projection stays bitwise
//! frozen. Everything is seeded, so identical configurations produce
//! identical parameters, reports, and generations.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adapter::{
    adapter_backward, adapter_forward, init_adapter, AdapterError, AdapterParams,
};
use crate::corpus::{tokenize, RawSample, TokenSequence};
use crate::lexicon::{
    build_lexicon, mark_medical_positions, weight_table, LexiconError, TermLexicon,
    TermWeightTable,
};
use crate::loss::{
    combined_loss_with, loss_gradient_with, LogProbMatrix, LossError, MkeNorm, TargetSequence,
};
use crate::matrix::Matrix;

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

/// Smallest synthetic corpus that still leaves a usable 80/20 split.
pub const MIN_SYNTHETIC_SAMPLES: usize = 50;

/// Width of the condition vectors the synthetic corpus emits.
pub const DEFAULT_FEATURE_DIM: usize = 16;

/// Scale of the uniform noise added to a term's prototype vector when
/// forming a sample's condition.
const NOISE_SCALE: f64 = 0.35;

const FINDINGS: [&str; 10] = [
    "effusion",
    "nodule",
    "fracture",
    "edema",
    "atelectasis",
    "pneumothorax",
    "cardiomegaly",
    "consolidation",
    "scarring",
    "opacity",
];

const ANATOMY: [&str; 5] = ["lung", "pleura", "femur", "ventricle", "lobe"];

const MODALITIES: [&str; 4] = ["radiograph", "scan", "image", "view"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("synthetic corpus needs at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("term profile needs at least two terms with positive weight")]
    DegenerateProfile,
    #[error("epochs must be at least 1")]
    ZeroEpochs,
    #[error("learning rate must be positive and finite, got {lr}")]
    InvalidLearningRate { lr: f64 },
    #[error("training corpus needs at least 2 samples for an 80/20 split, got {got}")]
    CorpusTooSmall { got: usize },
    #[error("sample {id:?} has a condition of width {got}, expected {expected}")]
    ConditionWidthMismatch {
        id: alloc::string::String,
        expected: usize,
        got: usize,
    },
    #[error("hidden width must be at least 1")]
    ZeroHiddenDim,
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Relative document-frequency targets for the synthetic findings
/// terms.
#[derive(Debug, Clone, PartialEq)]
pub struct TermProfile {
    terms: Vec<(String, f64)>,
}

impl TermProfile {
    pub fn new(terms: Vec<(String, f64)>) -> Result<Self, TrainError> {
        let positive = terms.iter().filter(|(_, w)| *w > 0.0).count();
        if positive < 2 {
            return Err(TrainError::DegenerateProfile);
        }
        Ok(Self { terms })
    }

    /// Zipf-like weights `1/(rank+1)` over the given terms.
    pub fn zipf(terms: &[&str]) -> Result<Self, TrainError> {
        Self::new(
            terms
                .iter()
                .enumerate()
                .map(|(i, t)| (t.to_string(), 1.0 / (i + 1) as f64))
                .collect(),
        )
    }

    /// Ten findings terms with Zipf-like weights.
    pub fn default_profile() -> Self {
        Self::zipf(&FINDINGS).expect("static profile is non-degenerate")
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, f64)> {
        self.terms.iter().map(|(t, w)| (t.as_str(), *w))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Integer count per term for `n` samples: largest-remainder
    /// apportionment, so realized frequencies track the profile to
    /// within one sample.
    fn quotas(&self, n: usize) -> Vec<usize> {
        let total: f64 = self.terms.iter().map(|(_, w)| w).sum();
        let exact: Vec<f64> = self
            .terms
            .iter()
            .map(|(_, w)| w / total * n as f64)
            .collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| *e as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut by_remainder: Vec<usize> = (0..counts.len()).collect();
        by_remainder.sort_by(|&a, &b| {
            let ra = exact[a] - counts[a] as f64;
            let rb = exact[b] - counts[b] as f64;
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &i in by_remainder.iter().take(n - assigned) {
            counts[i] += 1;
        }
        counts
    }
}

/// One synthetic record: the caption/concepts sample plus the condition
/// vector standing in for its image features.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSample {
    pub raw: RawSample,
    pub condition: Vec<f64>,
}

fn nearest_prototype(prototypes: &[Vec<f64>], condition: &[f64]) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (k, proto) in prototypes.iter().enumerate() {
        let dist: f64 = proto
            .iter()
            .zip(condition)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if dist < best_dist {
            best_dist = dist;
            best = k;
        }
    }
    best
}

/// Generate a synthetic medical-style corpus with learnable structure.
///
/// Each findings term gets a random prototype vector; a sample draws a
/// term (quota-matched to the profile), perturbs its prototype, and the
/// caption's medical terms are then a deterministic function of the
/// condition vector via nearest-prototype lookup. Captions embed one to
/// three medical terms depending on the term's index.
pub fn make_synthetic_corpus(
    n_samples: usize,
    profile: &TermProfile,
    seed: u64,
) -> Result<Vec<CorpusSample>, TrainError> {
    make_synthetic_corpus_with_dim(n_samples, profile, DEFAULT_FEATURE_DIM, seed)
}

pub fn make_synthetic_corpus_with_dim(
    n_samples: usize,
    profile: &TermProfile,
    feature_dim: usize,
    seed: u64,
) -> Result<Vec<CorpusSample>, TrainError> {
    if n_samples < MIN_SYNTHETIC_SAMPLES {
        return Err(TrainError::TooFewSamples {
            min: MIN_SYNTHETIC_SAMPLES,
            got: n_samples,
        });
    }
    if profile.terms.iter().filter(|(_, w)| *w > 0.0).count() < 2 {
        return Err(TrainError::DegenerateProfile);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_terms = profile.len();
    let prototypes: Vec<Vec<f64>> = (0..n_terms)
        .map(|_| (0..feature_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();

    // a deck of term indices matching the profile, then shuffled
    let mut deck: Vec<usize> = profile
        .quotas(n_samples)
        .iter()
        .enumerate()
        .flat_map(|(k, &count)| core::iter::repeat_n(k, count))
        .collect();
    for i in (1..deck.len()).rev() {
        deck.swap(i, rng.gen_range(0..=i));
    }

    let mut samples = Vec::with_capacity(n_samples);
    for (i, &drawn) in deck.iter().enumerate() {
        let condition: Vec<f64> = prototypes[drawn]
            .iter()
            .map(|&p| p + NOISE_SCALE * rng.gen_range(-1.0..=1.0))
            .collect();
        // the caption is a function of the condition, not of the draw
        let k = nearest_prototype(&prototypes, &condition);
        let term = profile.terms[k].0.as_str();
        let modality = MODALITIES[k % MODALITIES.len()];
        let anatomy = ANATOMY[k % ANATOMY.len()];
        let anatomy2 = ANATOMY[(k + 2) % ANATOMY.len()];
        let (caption, concepts): (String, Vec<&str>) = match k % 3 {
            0 => (
                alloc::format!("{modality} shows {term}"),
                vec![term],
            ),
            1 => (
                alloc::format!("{modality} shows {term} in the {anatomy}"),
                vec![term, anatomy],
            ),
            _ => (
                alloc::format!("{modality} shows {term} in the {anatomy} near the {anatomy2}"),
                vec![term, anatomy, anatomy2],
            ),
        };
        samples.push(CorpusSample {
            raw: RawSample {
                id: alloc::format!("syn-{i:04}"),
                caption,
                concepts: concepts.into_iter().map(String::from).collect(),
                image_ref: None,
            },
            condition,
        });
    }
    Ok(samples)
}

/// Hyperparameters of one training run. Defaults: adapter scale 0.2,
/// loss weight 0.5, rank 8.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub beta: f64,
    pub alpha: f64,
    pub rank: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub use_adapter: bool,
    pub use_mke: bool,
    pub mke_norm: MkeNorm,
    /// Minimum document frequency for the internal lexicon. The toy
    /// corpus is tiny, so the default keeps every term.
    pub lexicon_min_count: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            alpha: 0.2,
            rank: 8,
            hidden_dim: 32,
            learning_rate: 0.3,
            epochs: 10,
            seed: 0,
            use_adapter: true,
            use_mke: true,
            mke_norm: MkeNorm::FullLength,
            lexicon_min_count: 1,
        }
    }
}

/// The trained toy model.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    /// Regular tokens sorted lexicographically, then BOS and EOS.
    pub vocab: Vec<String>,
    /// V×h token embeddings (trainable).
    pub token_embed: Matrix,
    /// d×h frozen random projection from condition space to hidden
    /// space; the stand-in for the frozen encoder.
    pub base_proj: Matrix,
    /// Trainable adapter applied to the condition before the frozen
    /// projection; absent when adapter tuning is off.
    pub cond_adapter: Option<AdapterParams>,
    /// h×V output projection (trainable).
    pub out_proj: Matrix,
    vocab_index: BTreeMap<String, usize>,
}

impl ToyModel {
    pub fn new(
        vocab: Vec<String>,
        token_embed: Matrix,
        base_proj: Matrix,
        cond_adapter: Option<AdapterParams>,
        out_proj: Matrix,
    ) -> Self {
        let vocab_index = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            vocab,
            token_embed,
            base_proj,
            cond_adapter,
            out_proj,
            vocab_index,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn hidden_dim(&self) -> usize {
        self.base_proj.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.base_proj.rows()
    }

    pub fn token_id(&self, token: &str) -> Option<usize> {
        self.vocab_index.get(token).copied()
    }

    pub fn bos_id(&self) -> usize {
        self.vocab.len() - 2
    }

    pub fn eos_id(&self) -> usize {
        self.vocab.len() - 1
    }

    /// Condition pathway: adapter (when present), then the frozen
    /// projection. Returns the length-h prefix embedding.
    fn prefix(&self, condition: &[f64]) -> Result<Vec<f64>, TrainError> {
        let c = Matrix::from_vec(1, condition.len(), condition.to_vec())
            .expect("length equals dim by construction");
        let adapted = match &self.cond_adapter {
            Some(p) => adapter_forward(&c, p)?,
            None => c,
        };
        let p = adapted
            .matmul(&self.base_proj)
            .map_err(|_| TrainError::Adapter(AdapterError::FeatureDimMismatch {
                expected: self.base_proj.rows(),
                got: condition.len(),
            }))?;
        Ok(p.data().to_vec())
    }

    /// Scores over the vocabulary for one position: `(embed(prev) +
    /// prefix) · out_proj`.
    fn position_scores(&self, prev_id: usize, prefix: &[f64]) -> Vec<f64> {
        let h = self.hidden_dim();
        let v = self.vocab_size();
        let embed = self.token_embed.row(prev_id);
        let mut scores = vec![0.0; v];
        for k in 0..h {
            let hv = embed[k] + prefix[k];
            if hv == 0.0 {
                continue;
            }
            let w_row = self.out_proj.row(k);
            for (s, &w) in scores.iter_mut().zip(w_row) {
                *s += hv * w;
            }
        }
        scores
    }
}

/// Greedy decoding from BOS until EOS or `max_len` tokens, ties broken
/// toward the lowest token index. BOS itself is never emitted.
///
/// Panics when the condition width does not match the model.
pub fn generate(model: &ToyModel, condition: &[f64], max_len: usize) -> TokenSequence {
    let prefix = model
        .prefix(condition)
        .expect("condition width matches the model's feature dim");
    let bos = model.bos_id();
    let eos = model.eos_id();
    let mut prev = bos;
    let mut tokens = Vec::new();
    for _ in 0..max_len {
        let scores = model.position_scores(prev, &prefix);
        let mut best = f64::NEG_INFINITY;
        let mut best_id = 0;
        for (id, &s) in scores.iter().enumerate() {
            if id == bos {
                continue;
            }
            if s > best {
                best = s;
                best_id = id;
            }
        }
        if best_id == eos {
            break;
        }
        tokens.push(model.vocab[best_id].clone());
        prev = best_id;
    }
    TokenSequence::new(tokens, "generated")
}

/// One optimizer step's loss record, for the metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRecord {
    pub step: usize,
    pub lm: f64,
    pub mke: f64,
    pub total: f64,
}

/// Validation-side summary of a training run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    /// Teacher-forced per-token perplexity on the validation split.
    pub perplexity: f64,
    /// Fraction of reference medical-term occurrences that appear in
    /// the greedy generation for the same condition.
    pub term_recall: f64,
    /// Same, restricted to terms with below-median lexicon frequency.
    pub rare_term_recall: f64,
    /// Mean total loss per epoch on the training split.
    pub loss_history: Vec<f64>,
    /// First epoch (1-based) whose mean loss fell to half the first
    /// epoch's, if any; a coarse convergence-speed marker.
    pub epochs_to_half_loss: Option<usize>,
}

/// Everything a training run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub report: EvalReport,
    pub step_log: Vec<StepRecord>,
    /// Lexicon built over the training split; medical positions and
    /// rarity weights during training came from here.
    pub lexicon: TermLexicon,
}

struct PreparedSample<'a> {
    condition: &'a [f64],
    /// BOS followed by the caption tokens; inputs for teacher forcing.
    input_ids: Vec<usize>,
    /// Caption tokens followed by EOS; prediction targets.
    target: TargetSequence,
    tokens: TokenSequence,
}

fn prepare_sample<'a>(
    sample: &'a CorpusSample,
    vocab_index: &BTreeMap<String, usize>,
    bos: usize,
    eos: usize,
    lexicon: &TermLexicon,
    weights: &TermWeightTable,
) -> PreparedSample<'a> {
    let tokens = TokenSequence::new(tokenize(&sample.raw.caption), sample.raw.id.clone());
    let ids: Vec<usize> = tokens
        .tokens
        .iter()
        .map(|t| vocab_index[t.as_str()])
        .collect();
    let mut input_ids = Vec::with_capacity(ids.len() + 1);
    input_ids.push(bos);
    input_ids.extend_from_slice(&ids);
    let mut target_ids = ids;
    target_ids.push(eos);
    let mut medical = vec![0.0; target_ids.len()];
    for (pos, term) in mark_medical_positions(&tokens, lexicon) {
        medical[pos] = weights.weight(&term).unwrap_or(0.0);
    }
    let target = TargetSequence::new(target_ids, medical).expect("weights clamped to (0,1]");
    PreparedSample {
        condition: &sample.condition,
        input_ids,
        target,
        tokens,
    }
}

/// Teacher-forced SGD with the combined loss on an 80/20 split of the
/// corpus. Only the adapter, token embeddings, and output projection
/// update; the base projection never changes.
pub fn train(config: &TrainConfig, corpus: &[CorpusSample]) -> Result<TrainOutcome, TrainError> {
    if config.epochs == 0 {
        return Err(TrainError::ZeroEpochs);
    }
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(TrainError::InvalidLearningRate {
            lr: config.learning_rate,
        });
    }
    if corpus.len() < 2 {
        return Err(TrainError::CorpusTooSmall { got: corpus.len() });
    }
    if config.hidden_dim == 0 {
        return Err(TrainError::ZeroHiddenDim);
    }
    let feature_dim = corpus[0].condition.len();
    for sample in corpus {
        if sample.condition.len() != feature_dim {
            return Err(TrainError::ConditionWidthMismatch {
                id: sample.raw.id.clone(),
                expected: feature_dim,
                got: sample.condition.len(),
            });
        }
    }

    // deterministic 80/20 split
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5311_u64);
    for i in (1..order.len()).rev() {
        order.swap(i, split_rng.gen_range(0..=i));
    }
    let n_train = (corpus.len() * 4 / 5).max(1).min(corpus.len() - 1);
    let train_idx = &order[..n_train];
    let val_idx = &order[n_train..];

    // vocabulary over the whole corpus, regular tokens first
    let mut token_set: alloc::collections::BTreeSet<String> = alloc::collections::BTreeSet::new();
    for s in corpus {
        for t in tokenize(&s.raw.caption) {
            token_set.insert(t);
        }
    }
    let mut vocab: Vec<String> = token_set.into_iter().collect();
    vocab.push(BOS.to_string());
    vocab.push(EOS.to_string());
    let vocab_index: BTreeMap<String, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    let v = vocab.len();
    let h = config.hidden_dim;
    let bos = v - 2;
    let eos = v - 1;

    // lexicon and rarity weights from the training split only
    let lexicon_input: Vec<(TokenSequence, Vec<String>)> = train_idx
        .iter()
        .map(|&i| {
            (
                TokenSequence::new(tokenize(&corpus[i].raw.caption), corpus[i].raw.id.clone()),
                corpus[i].raw.concepts.clone(),
            )
        })
        .collect();
    let lexicon = build_lexicon(&lexicon_input, config.lexicon_min_count)?;
    let weights = weight_table(&lexicon);

    // parameter init: frozen base, small embeddings, zero output head
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let base_bound = 1.0 / libm::sqrt(feature_dim as f64);
    let base_proj = Matrix::from_vec(
        feature_dim,
        h,
        (0..feature_dim * h)
            .map(|_| init_rng.gen_range(-base_bound..=base_bound))
            .collect(),
    )
    .expect("sized here");
    let mut token_embed = Matrix::from_vec(
        v,
        h,
        (0..v * h).map(|_| init_rng.gen_range(-0.1..=0.1)).collect(),
    )
    .expect("sized here");
    let mut out_proj = Matrix::zeros(h, v);
    let mut cond_adapter = if config.use_adapter {
        Some(init_adapter(
            feature_dim,
            config.rank,
            config.alpha,
            config.seed ^ 0xada_u64,
        )?)
    } else {
        None
    };
    let frozen_base = base_proj.clone();

    let effective_beta = if config.use_mke { config.beta } else { 0.0 };
    let lr = config.learning_rate;
    let mut epoch_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xe90c_u64);
    let mut step_log = Vec::new();
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for _ in 0..config.epochs {
        let mut epoch_order: Vec<usize> = train_idx.to_vec();
        for i in (1..epoch_order.len()).rev() {
            epoch_order.swap(i, epoch_rng.gen_range(0..=i));
        }
        let mut epoch_loss = 0.0;
        for &si in &epoch_order {
            let prepared = prepare_sample(&corpus[si], &vocab_index, bos, eos, &lexicon, &weights);
            step += 1;

            // condition pathway forward
            let c = Matrix::from_vec(1, feature_dim, prepared.condition.to_vec())
                .expect("dims match");
            let adapted = match &cond_adapter {
                Some(p) => adapter_forward(&c, p)?,
                None => c.clone(),
            };
            let prefix = adapted.matmul(&base_proj).expect("dims match");

            // hidden states and scores, teacher forced
            let n_pos = prepared.input_ids.len();
            let mut hidden = Matrix::zeros(n_pos, h);
            for (j, &prev) in prepared.input_ids.iter().enumerate() {
                let e = token_embed.row(prev);
                let p = prefix.row(0);
                let row = hidden.row_mut(j);
                for k in 0..h {
                    row[k] = e[k] + p[k];
                }
            }
            let scores = hidden.matmul(&out_proj).expect("dims match");
            let logp = LogProbMatrix::from_scores(&scores);
            let breakdown =
                combined_loss_with(&logp, &prepared.target, effective_beta, config.mke_norm)?;
            if !breakdown.total.is_finite() {
                return Err(TrainError::NonFiniteLoss { step });
            }
            epoch_loss += breakdown.total;
            step_log.push(StepRecord {
                step,
                lm: breakdown.lm,
                mke: breakdown.mke,
                total: breakdown.total,
            });

            // backward
            let d_scores =
                loss_gradient_with(&logp, &prepared.target, effective_beta, config.mke_norm)?;
            let d_out_proj = hidden.transpose().matmul(&d_scores).expect("dims");
            let d_hidden = d_scores.matmul(&out_proj.transpose()).expect("dims");

            // prefix gradient is the column sum of d_hidden
            let mut d_prefix = Matrix::zeros(1, h);
            for j in 0..n_pos {
                let row = d_hidden.row(j);
                let acc = d_prefix.row_mut(0);
                for k in 0..h {
                    acc[k] += row[k];
                }
            }

            // updates: output head, then embeddings, then the adapter
            out_proj.axpy(-lr, &d_out_proj).expect("same shape");
            for (j, &prev) in prepared.input_ids.iter().enumerate() {
                let row = d_hidden.row(j).to_vec();
                let e = token_embed.row_mut(prev);
                for k in 0..h {
                    e[k] -= lr * row[k];
                }
            }
            if let Some(p) = cond_adapter.as_mut() {
                let d_adapted = d_prefix.matmul(&base_proj.transpose()).expect("dims");
                let grads = adapter_backward(&c, p, &d_adapted)?;
                p.w_down.axpy(-lr, &grads.w_down).expect("same shape");
                p.w_up.axpy(-lr, &grads.w_up).expect("same shape");
                for (g, dg) in p.ln_gain.iter_mut().zip(&grads.ln_gain) {
                    *g -= lr * dg;
                }
                for (b, db) in p.ln_bias.iter_mut().zip(&grads.ln_bias) {
                    *b -= lr * db;
                }
            }

            // a divergent step can blow up the parameters while every
            // recorded loss is still finite; pin it to this step
            let params_finite = out_proj.all_finite()
                && token_embed.all_finite()
                && cond_adapter.as_ref().is_none_or(|p| p.validate().is_ok());
            if !params_finite {
                return Err(TrainError::NonFiniteLoss { step });
            }
        }
        loss_history.push(epoch_loss / train_idx.len() as f64);
    }

    debug_assert_eq!(base_proj, frozen_base);

    let model = ToyModel::new(vocab, token_embed, base_proj, cond_adapter, out_proj);

    // validation pass
    let max_caption_len = corpus
        .iter()
        .map(|s| tokenize(&s.raw.caption).len())
        .max()
        .unwrap_or(0);
    let rare_threshold = lexicon.median_freq();
    let mut nll_sum = 0.0;
    let mut token_count = 0usize;
    let mut medical_total = 0usize;
    let mut medical_hit = 0usize;
    let mut rare_total = 0usize;
    let mut rare_hit = 0usize;
    for &vi in val_idx {
        let prepared = prepare_sample(&corpus[vi], &vocab_index, bos, eos, &lexicon, &weights);
        let prefix = model.prefix(prepared.condition)?;
        for (j, &target_id) in prepared.target.token_ids().iter().enumerate() {
            let scores = model.position_scores(prepared.input_ids[j], &prefix);
            let m = Matrix::from_vec(1, v, scores).expect("sized here");
            let logp = LogProbMatrix::from_scores(&m);
            nll_sum -= logp.row(0)[target_id];
            token_count += 1;
        }
        let generated = generate(&model, prepared.condition, max_caption_len + 2);
        let generated_set: alloc::collections::BTreeSet<&str> =
            generated.tokens.iter().map(|t| t.as_str()).collect();
        for (_, term) in mark_medical_positions(&prepared.tokens, &lexicon) {
            medical_total += 1;
            let hit = generated_set.contains(term.as_str());
            if hit {
                medical_hit += 1;
            }
            if lexicon.freq(&term).unwrap_or(u64::MAX) < rare_threshold {
                rare_total += 1;
                if hit {
                    rare_hit += 1;
                }
            }
        }
    }
    let ratio = |hit: usize, total: usize| {
        if total == 0 {
            1.0
        } else {
            hit as f64 / total as f64
        }
    };
    let epochs_to_half_loss = loss_history
        .first()
        .copied()
        .and_then(|first| loss_history.iter().position(|&l| l <= 0.5 * first))
        .map(|i| i + 1);
    let report = EvalReport {
        perplexity: libm::exp(nll_sum / token_count.max(1) as f64),
        term_recall: ratio(medical_hit, medical_total),
        rare_term_recall: ratio(rare_hit, rare_total),
        loss_history,
        epochs_to_half_loss,
    };

    Ok(TrainOutcome {
        model,
        report,
        step_log,
        lexicon,
    })
}

/// The four ablation cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AblationCell {
    Full,
    NoAdapter,
    NoMke,
    NoBoth,
}

impl AblationCell {
    pub const ALL: [AblationCell; 4] = [
        AblationCell::Full,
        AblationCell::NoAdapter,
        AblationCell::NoMke,
        AblationCell::NoBoth,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AblationCell::Full => "full",
            AblationCell::NoAdapter => "no_adapter",
            AblationCell::NoMke => "no_mke",
            AblationCell::NoBoth => "no_both",
        }
    }

    fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut config = base.clone();
        match self {
            AblationCell::Full => {}
            AblationCell::NoAdapter => config.use_adapter = false,
            AblationCell::NoMke => config.use_mke = false,
            AblationCell::NoBoth => {
                config.use_adapter = false;
                config.use_mke = false;
            }
        }
        config
    }
}

/// Reports for the four ablation cells, all sharing the base seed and
/// corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<(AblationCell, EvalReport)>,
}

impl AblationTable {
    pub fn get(&self, cell: AblationCell) -> &EvalReport {
        &self
            .rows
            .iter()
            .find(|(c, _)| *c == cell)
            .expect("all four cells are always present")
            .1
    }
}

/// Run the four configurations (full model, adapter off, knowledge
/// loss off, both off) on a shared corpus and seed.
pub fn ablate(base: &TrainConfig, corpus: &[CorpusSample]) -> Result<AblationTable, TrainError> {
    let mut rows = Vec::with_capacity(4);
    for cell in AblationCell::ALL {
        let outcome = train(&cell.apply(base), corpus)?;
        rows.push((cell, outcome.report));
    }
    Ok(AblationTable { rows })
}
