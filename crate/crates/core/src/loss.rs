//! Training losses: mean token cross-entropy, the medical knowledge
//! enhancement (MKE) term that re-weights medical-term positions by
//! rarity, their weighted combination, and the analytic gradient with
//! respect to pre-softmax scores.
//!
//! For a sequence of length `N` with gold tokens `w_j`, per-position
//! log-distributions `logp`, medical positions `MW`, and rarity weights
//! `G`:
//!
//! ```text
//! lm  = -(1/N) Σ_j            logp[j, w_j]
//! mke = -(1/N) Σ_{j in MW} G(w_j) · logp[j, w_j]
//! total = lm + β · mke
//! ```
//!
//! The MKE sum runs over medical positions only but is normalized by
//! the full length `N`; [`MkeNorm::MedicalCount`] switches the
//! denominator to the number of medical positions instead.

use alloc::vec::Vec;

use crate::matrix::Matrix;

/// Default weight of the MKE term in the combined loss.
pub const DEFAULT_BETA: f64 = 0.5;

/// Picked log-probabilities are clamped here so a hard-zero model
/// output cannot produce an infinite loss.
pub const LOG_PROB_FLOOR: f64 = -50.0;

/// Tolerance on each row's log-sum-exp when validating an externally
/// supplied log-probability matrix.
pub const ROW_NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("log-prob matrix has {positions} positions but target has {targets}")]
    LengthMismatch { positions: usize, targets: usize },
    #[error("sequence is empty")]
    EmptySequence,
    #[error("token id {token_id} at position {position} exceeds vocabulary size {vocab_size}")]
    TokenIdOutOfRange {
        position: usize,
        token_id: usize,
        vocab_size: usize,
    },
    #[error("medical weight {weight} at position {position} is outside [0, 1]")]
    WeightOutOfRange { position: usize, weight: f64 },
    #[error("row {row} is not a normalized log-distribution (log-sum-exp {log_sum_exp})")]
    RowNotNormalized { row: usize, log_sum_exp: f64 },
    #[error("entry ({row}, {col}) is {value}, expected a log-probability <= 0")]
    PositiveEntry { row: usize, col: usize, value: f64 },
    #[error("beta must be finite and nonnegative, got {beta}")]
    InvalidBeta { beta: f64 },
}

/// Per-position predictive log-distributions: `N` rows, one per
/// sequence position, each a normalized log-distribution over the
/// vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbMatrix {
    values: Matrix,
}

impl LogProbMatrix {
    /// Log-softmax each row of a raw score matrix. Rows come out
    /// normalized by construction.
    pub fn from_scores(scores: &Matrix) -> Self {
        let mut values = scores.clone();
        for r in 0..values.rows() {
            let row = values.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&v| libm::exp(v - max)).sum();
            let lse = max + libm::log(sum);
            for v in row {
                *v -= lse;
            }
        }
        Self { values }
    }

    /// Wrap an already-normalized log-probability matrix, verifying
    /// that entries are non-positive and each row's log-sum-exp is zero
    /// within [`ROW_NORMALIZATION_TOL`].
    pub fn from_log_probs(values: Matrix) -> Result<Self, LossError> {
        for r in 0..values.rows() {
            let row = values.row(r);
            for (c, &v) in row.iter().enumerate() {
                if v > 0.0 || v.is_nan() {
                    return Err(LossError::PositiveEntry {
                        row: r,
                        col: c,
                        value: v,
                    });
                }
            }
            let lse = libm::log(row.iter().map(|&v| libm::exp(v)).sum());
            if lse.abs() > ROW_NORMALIZATION_TOL {
                return Err(LossError::RowNotNormalized {
                    row: r,
                    log_sum_exp: lse,
                });
            }
        }
        Ok(Self { values })
    }

    /// Sequence length `N`.
    pub fn positions(&self) -> usize {
        self.values.rows()
    }

    /// Vocabulary size `V`.
    pub fn vocab_size(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, position: usize) -> &[f64] {
        self.values.row(position)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }
}

/// Gold tokens plus the per-position medical weights: zero at
/// non-medical positions, the rarity weight `G(w_j)` at medical ones.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSequence {
    token_ids: Vec<usize>,
    medical_weights: Vec<f64>,
}

impl TargetSequence {
    pub fn new(token_ids: Vec<usize>, medical_weights: Vec<f64>) -> Result<Self, LossError> {
        if token_ids.len() != medical_weights.len() {
            return Err(LossError::LengthMismatch {
                positions: token_ids.len(),
                targets: medical_weights.len(),
            });
        }
        for (position, &weight) in medical_weights.iter().enumerate() {
            if !(0.0..=1.0).contains(&weight) {
                return Err(LossError::WeightOutOfRange { position, weight });
            }
        }
        Ok(Self {
            token_ids,
            medical_weights,
        })
    }

    /// A target with no medical positions at all.
    pub fn unweighted(token_ids: Vec<usize>) -> Self {
        let medical_weights = alloc::vec![0.0; token_ids.len()];
        Self {
            token_ids,
            medical_weights,
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn token_ids(&self) -> &[usize] {
        &self.token_ids
    }

    pub fn medical_weights(&self) -> &[f64] {
        &self.medical_weights
    }

    /// Number of positions with a nonzero medical weight.
    pub fn medical_count(&self) -> usize {
        self.medical_weights.iter().filter(|&&w| w > 0.0).count()
    }
}

/// Denominator of the MKE sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MkeNorm {
    /// Divide by the full sequence length `N` (the formula as written).
    #[default]
    FullLength,
    /// Divide by the number of medical positions `K`.
    MedicalCount,
}

/// The combined loss with its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub lm: f64,
    pub mke: f64,
    pub beta: f64,
    pub total: f64,
}

fn check_pair(logp: &LogProbMatrix, target: &TargetSequence) -> Result<(), LossError> {
    if logp.positions() != target.len() {
        return Err(LossError::LengthMismatch {
            positions: logp.positions(),
            targets: target.len(),
        });
    }
    if logp.positions() == 0 {
        return Err(LossError::EmptySequence);
    }
    let vocab = logp.vocab_size();
    for (position, &token_id) in target.token_ids().iter().enumerate() {
        if token_id >= vocab {
            return Err(LossError::TokenIdOutOfRange {
                position,
                token_id,
                vocab_size: vocab,
            });
        }
    }
    Ok(())
}

fn picked(logp: &LogProbMatrix, position: usize, token_id: usize) -> f64 {
    let lp = logp.row(position)[token_id];
    // NaN must survive the clamp so non-finite model outputs surface
    // as a non-finite loss instead of a quiet -50
    if lp < LOG_PROB_FLOOR {
        LOG_PROB_FLOOR
    } else {
        lp
    }
}

/// Mean token cross-entropy over the whole sequence.
pub fn lm_loss(logp: &LogProbMatrix, target: &TargetSequence) -> Result<f64, LossError> {
    check_pair(logp, target)?;
    let n = target.len() as f64;
    let sum: f64 = target
        .token_ids()
        .iter()
        .enumerate()
        .map(|(j, &t)| picked(logp, j, t))
        .sum();
    Ok(-sum / n)
}

/// Rarity-weighted cross-entropy over medical positions only,
/// normalized by the full sequence length.
pub fn mke_loss(logp: &LogProbMatrix, target: &TargetSequence) -> Result<f64, LossError> {
    mke_loss_with(logp, target, MkeNorm::FullLength)
}

pub fn mke_loss_with(
    logp: &LogProbMatrix,
    target: &TargetSequence,
    norm: MkeNorm,
) -> Result<f64, LossError> {
    check_pair(logp, target)?;
    let denom = match norm {
        MkeNorm::FullLength => target.len() as f64,
        MkeNorm::MedicalCount => match target.medical_count() {
            0 => return Ok(0.0),
            k => k as f64,
        },
    };
    let sum: f64 = target
        .token_ids()
        .iter()
        .zip(target.medical_weights())
        .enumerate()
        .filter(|(_, (_, &g))| g > 0.0)
        .map(|(j, (&t, &g))| g * picked(logp, j, t))
        .sum();
    Ok(-sum / denom)
}

/// `total = lm + beta * mke`.
pub fn combined_loss(
    logp: &LogProbMatrix,
    target: &TargetSequence,
    beta: f64,
) -> Result<LossBreakdown, LossError> {
    combined_loss_with(logp, target, beta, MkeNorm::FullLength)
}

pub fn combined_loss_with(
    logp: &LogProbMatrix,
    target: &TargetSequence,
    beta: f64,
    norm: MkeNorm,
) -> Result<LossBreakdown, LossError> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(LossError::InvalidBeta { beta });
    }
    let lm = lm_loss(logp, target)?;
    let mke = mke_loss_with(logp, target, norm)?;
    Ok(LossBreakdown {
        lm,
        mke,
        beta,
        total: lm + beta * mke,
    })
}

/// Gradient of the combined loss with respect to the pre-softmax
/// scores that produced `logp`: row `j` is
/// `c_j * (softmax(row) - onehot(w_j))` with
/// `c_j = 1/N + beta * G_j / denom`.
pub fn loss_gradient(
    logp: &LogProbMatrix,
    target: &TargetSequence,
    beta: f64,
) -> Result<Matrix, LossError> {
    loss_gradient_with(logp, target, beta, MkeNorm::FullLength)
}

pub fn loss_gradient_with(
    logp: &LogProbMatrix,
    target: &TargetSequence,
    beta: f64,
    norm: MkeNorm,
) -> Result<Matrix, LossError> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(LossError::InvalidBeta { beta });
    }
    check_pair(logp, target)?;
    let n = target.len();
    let denom = match norm {
        MkeNorm::FullLength => n as f64,
        MkeNorm::MedicalCount => target.medical_count().max(1) as f64,
    };
    let mut grad = Matrix::zeros(n, logp.vocab_size());
    for j in 0..n {
        let coeff = 1.0 / n as f64 + beta * target.medical_weights()[j] / denom;
        let row_in = logp.row(j);
        let row_out = grad.row_mut(j);
        for (g, &lp) in row_out.iter_mut().zip(row_in) {
            *g = coeff * libm::exp(lp);
        }
        row_out[target.token_ids()[j]] -= coeff;
    }
    Ok(grad)
}
