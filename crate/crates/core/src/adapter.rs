//! Low-rank residual adapter: down-projection to a rank-`r` bottleneck,
//! layer normalization with gain and bias, a non-linear activation, and
//! an up-projection added back to the input under a global scale:
//!
//! ```text
//! out = f + alpha * act(LN(f · w_down)) · w_up
//! ```
//!
//! `w_up` initializes to zero, so a fresh adapter is exactly the
//! identity map and training starts from the unadapted features. The
//! backward pass is exact hand differentiation; [`grad_check`] compares
//! it against central finite differences.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;

/// Variance guard inside the bottleneck layer normalization.
pub const LN_EPSILON: f64 = 1e-5;

/// Step size for the central finite differences in [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Relative errors are measured as `|a - n| / max(|a|, |n|, guard)`;
/// the guard keeps finite-difference noise on near-zero coordinates
/// from registering as disagreement.
pub const GRAD_CHECK_GUARD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdapterError {
    #[error("input has {got} columns but the adapter expects {expected}")]
    FeatureDimMismatch { expected: usize, got: usize },
    #[error("upstream shape {ur}x{uc} does not match input {ir}x{ic}")]
    UpstreamMismatch {
        ir: usize,
        ic: usize,
        ur: usize,
        uc: usize,
    },
    #[error("rank {rank} must satisfy 0 < rank < feature dim {dim}")]
    InvalidRank { rank: usize, dim: usize },
    #[error("invalid adapter parameters: {reason}")]
    Invalid { reason: String },
}

/// Bottleneck non-linearity. The default follows the surrounding
/// transformer convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    #[default]
    Gelu,
    Relu,
    Tanh,
}

const FRAC_1_SQRT_2PI: f64 = 0.3989422804014327;

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x / core::f64::consts::SQRT_2)),
            Activation::Relu => x.max(0.0),
            Activation::Tanh => libm::tanh(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                0.5 * (1.0 + libm::erf(x / core::f64::consts::SQRT_2))
                    + x * FRAC_1_SQRT_2PI * libm::exp(-0.5 * x * x)
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = libm::tanh(x);
                1.0 - t * t
            }
        }
    }
}

/// Trainable adapter parameters plus the fixed scale `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    /// d×r down-projection.
    pub w_down: Matrix,
    /// r×d up-projection; zero at init so the block starts as identity.
    pub w_up: Matrix,
    /// Per-feature gain of the bottleneck layer norm (length r).
    pub ln_gain: Vec<f64>,
    /// Per-feature bias of the bottleneck layer norm (length r).
    pub ln_bias: Vec<f64>,
    /// Residual scale; a hyperparameter, never trained.
    pub alpha: f64,
    /// Bottleneck non-linearity; a hyperparameter, never trained and
    /// not part of the serialized form.
    pub activation: Activation,
}

impl AdapterParams {
    pub fn feature_dim(&self) -> usize {
        self.w_down.rows()
    }

    pub fn rank(&self) -> usize {
        self.w_down.cols()
    }

    /// Trainable coordinates: `2dr + 2r`.
    pub fn param_count(&self) -> usize {
        2 * self.feature_dim() * self.rank() + 2 * self.rank()
    }

    pub fn validate(&self) -> Result<(), AdapterError> {
        let d = self.feature_dim();
        let r = self.rank();
        if r == 0 || r >= d {
            return Err(AdapterError::InvalidRank { rank: r, dim: d });
        }
        if self.w_up.rows() != r || self.w_up.cols() != d {
            return Err(AdapterError::Invalid {
                reason: alloc::format!(
                    "w_up is {}x{}, expected {r}x{d}",
                    self.w_up.rows(),
                    self.w_up.cols()
                ),
            });
        }
        if self.ln_gain.len() != r || self.ln_bias.len() != r {
            return Err(AdapterError::Invalid {
                reason: alloc::format!(
                    "layer-norm vectors have lengths {} and {}, expected {r}",
                    self.ln_gain.len(),
                    self.ln_bias.len()
                ),
            });
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(AdapterError::Invalid {
                reason: alloc::format!("alpha must be finite and nonnegative, got {}", self.alpha),
            });
        }
        let finite = self.w_down.all_finite()
            && self.w_up.all_finite()
            && self.ln_gain.iter().all(|v| v.is_finite())
            && self.ln_bias.iter().all(|v| v.is_finite());
        if !finite {
            return Err(AdapterError::Invalid {
                reason: String::from("parameters contain non-finite values"),
            });
        }
        Ok(())
    }
}

/// Gradients of every trainable parameter plus the input.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGradients {
    pub w_down: Matrix,
    pub w_up: Matrix,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
    pub d_input: Matrix,
}

/// Seeded initialization: `w_down` uniform in [-1/sqrt(d), 1/sqrt(d)],
/// `w_up` zero, layer norm at identity (gain 1, bias 0). The zero
/// up-projection makes the whole block the identity map at the start.
pub fn init_adapter(
    feature_dim: usize,
    rank: usize,
    alpha: f64,
    seed: u64,
) -> Result<AdapterParams, AdapterError> {
    if rank == 0 || rank >= feature_dim {
        return Err(AdapterError::InvalidRank {
            rank,
            dim: feature_dim,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 / libm::sqrt(feature_dim as f64);
    let data: Vec<f64> = (0..feature_dim * rank)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    let params = AdapterParams {
        w_down: Matrix::from_vec(feature_dim, rank, data).expect("sized above"),
        w_up: Matrix::zeros(rank, feature_dim),
        ln_gain: vec![1.0; rank],
        ln_bias: vec![0.0; rank],
        alpha,
        activation: Activation::default(),
    };
    params.validate()?;
    Ok(params)
}

/// Intermediate state of one forward pass, kept for the backward pass.
struct ForwardTrace {
    /// Normalized bottleneck features before gain/bias (n×r).
    xhat: Matrix,
    /// 1 / sqrt(var + eps) per input row.
    inv_std: Vec<f64>,
    /// Bottleneck pre-activations gain*xhat + bias (n×r).
    y: Matrix,
    /// Activated bottleneck features (n×r).
    act: Matrix,
    out: Matrix,
}

#[allow(clippy::needless_range_loop)]
fn forward_trace(f: &Matrix, p: &AdapterParams) -> Result<ForwardTrace, AdapterError> {
    if f.cols() != p.feature_dim() {
        return Err(AdapterError::FeatureDimMismatch {
            expected: p.feature_dim(),
            got: f.cols(),
        });
    }
    p.validate()?;
    let n = f.rows();
    let r = p.rank();
    let z = f.matmul(&p.w_down).expect("shape checked above");

    let mut xhat = Matrix::zeros(n, r);
    let mut inv_std = vec![0.0; n];
    let mut y = Matrix::zeros(n, r);
    let mut act = Matrix::zeros(n, r);
    for i in 0..n {
        let row = z.row(i);
        let mean = row.iter().sum::<f64>() / r as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r as f64;
        let is = 1.0 / libm::sqrt(var + LN_EPSILON);
        inv_std[i] = is;
        for k in 0..r {
            let xh = (row[k] - mean) * is;
            xhat.set(i, k, xh);
            let yv = p.ln_gain[k] * xh + p.ln_bias[k];
            y.set(i, k, yv);
            act.set(i, k, p.activation.apply(yv));
        }
    }

    let mut out = act.matmul(&p.w_up).expect("shapes consistent");
    for (o, &fv) in out.data_mut().iter_mut().zip(f.data()) {
        *o = fv + p.alpha * *o;
    }
    Ok(ForwardTrace {
        xhat,
        inv_std,
        y,
        act,
        out,
    })
}

/// Apply the adapter to an n×d feature matrix.
///
/// `alpha == 0` and an all-zero `w_up` both short-circuit to an exact
/// copy of the input, so the identity-at-init contract holds bitwise.
pub fn adapter_forward(f: &Matrix, p: &AdapterParams) -> Result<Matrix, AdapterError> {
    if f.cols() != p.feature_dim() {
        return Err(AdapterError::FeatureDimMismatch {
            expected: p.feature_dim(),
            got: f.cols(),
        });
    }
    p.validate()?;
    if p.alpha == 0.0 || p.w_up.data().iter().all(|&v| v == 0.0) {
        return Ok(f.clone());
    }
    Ok(forward_trace(f, p)?.out)
}

/// Gradients of `sum(upstream ⊙ adapter_forward(f, p))` with respect to
/// every trainable parameter and to `f`.
pub fn adapter_backward(
    f: &Matrix,
    p: &AdapterParams,
    upstream: &Matrix,
) -> Result<AdapterGradients, AdapterError> {
    if upstream.rows() != f.rows() || upstream.cols() != f.cols() {
        return Err(AdapterError::UpstreamMismatch {
            ir: f.rows(),
            ic: f.cols(),
            ur: upstream.rows(),
            uc: upstream.cols(),
        });
    }
    let trace = forward_trace(f, p)?;
    let n = f.rows();
    let r = p.rank();

    // d(out)/d(ada) = alpha, ada = act · w_up
    let mut d_ada = upstream.clone();
    for v in d_ada.data_mut() {
        *v *= p.alpha;
    }
    let d_w_up = trace.act.transpose().matmul(&d_ada).expect("shapes");
    let d_act = d_ada.matmul(&p.w_up.transpose()).expect("shapes");

    // through the activation
    let mut d_y = Matrix::zeros(n, r);
    for i in 0..n {
        for k in 0..r {
            d_y.set(
                i,
                k,
                d_act.get(i, k) * p.activation.derivative(trace.y.get(i, k)),
            );
        }
    }

    // through gain/bias
    let mut d_gain = vec![0.0; r];
    let mut d_bias = vec![0.0; r];
    let mut d_xhat = Matrix::zeros(n, r);
    for i in 0..n {
        for k in 0..r {
            let dy = d_y.get(i, k);
            d_gain[k] += dy * trace.xhat.get(i, k);
            d_bias[k] += dy;
            d_xhat.set(i, k, dy * p.ln_gain[k]);
        }
    }

    // layer-norm backward per row:
    // dz = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat ⊙ xhat))
    let mut d_z = Matrix::zeros(n, r);
    for i in 0..n {
        let dxh = d_xhat.row(i);
        let xh = trace.xhat.row(i);
        let mean_dxh = dxh.iter().sum::<f64>() / r as f64;
        let mean_dxh_xh = dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / r as f64;
        for k in 0..r {
            d_z.set(
                i,
                k,
                trace.inv_std[i] * (dxh[k] - mean_dxh - xh[k] * mean_dxh_xh),
            );
        }
    }

    let d_w_down = f.transpose().matmul(&d_z).expect("shapes");
    let mut d_input = d_z.matmul(&p.w_down.transpose()).expect("shapes");
    d_input.axpy(1.0, upstream).expect("same shape");

    Ok(AdapterGradients {
        w_down: d_w_down,
        w_up: d_w_up,
        ln_gain: d_gain,
        ln_bias: d_bias,
        d_input,
    })
}

fn relative_error(a: f64, n: f64) -> f64 {
    let denom = a.abs().max(n.abs()).max(GRAD_CHECK_GUARD);
    (a - n).abs() / denom
}

/// Scalar objective the finite differences probe: `sum(upstream ⊙ out)`.
fn probe_loss(f: &Matrix, p: &AdapterParams, upstream: &Matrix) -> f64 {
    let trace = forward_trace(f, p).expect("probe shapes are valid");
    trace
        .out
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(o, u)| o * u)
        .sum()
}

fn central_diff(
    f: &Matrix,
    p: &AdapterParams,
    upstream: &Matrix,
    mutate: &mut dyn FnMut(&mut Matrix, &mut AdapterParams, f64),
) -> f64 {
    let mut f_plus = f.clone();
    let mut p_plus = p.clone();
    mutate(&mut f_plus, &mut p_plus, GRAD_CHECK_STEP);
    let mut f_minus = f.clone();
    let mut p_minus = p.clone();
    mutate(&mut f_minus, &mut p_minus, -GRAD_CHECK_STEP);
    (probe_loss(&f_plus, &p_plus, upstream) - probe_loss(&f_minus, &p_minus, upstream))
        / (2.0 * GRAD_CHECK_STEP)
}

/// Worst relative disagreement between `grads` and central finite
/// differences over every parameter coordinate and every input entry.
fn max_grad_error(
    f: &Matrix,
    p: &AdapterParams,
    upstream: &Matrix,
    grads: &AdapterGradients,
) -> f64 {
    let mut worst: f64 = 0.0;
    let d = p.feature_dim();
    let r = p.rank();

    for idx in 0..d * r {
        let numeric = central_diff(f, p, upstream, &mut |_, q, h| {
            q.w_down.data_mut()[idx] += h;
        });
        worst = worst.max(relative_error(grads.w_down.data()[idx], numeric));
    }
    for idx in 0..r * d {
        let numeric = central_diff(f, p, upstream, &mut |_, q, h| {
            q.w_up.data_mut()[idx] += h;
        });
        worst = worst.max(relative_error(grads.w_up.data()[idx], numeric));
    }
    for k in 0..r {
        let numeric = central_diff(f, p, upstream, &mut |_, q, h| q.ln_gain[k] += h);
        worst = worst.max(relative_error(grads.ln_gain[k], numeric));
        let numeric = central_diff(f, p, upstream, &mut |_, q, h| q.ln_bias[k] += h);
        worst = worst.max(relative_error(grads.ln_bias[k], numeric));
    }
    for idx in 0..f.rows() * f.cols() {
        let numeric = central_diff(f, p, upstream, &mut |g, _, h| {
            g.data_mut()[idx] += h;
        });
        worst = worst.max(relative_error(grads.d_input.data()[idx], numeric));
    }
    worst
}

/// Draw a seeded random input and upstream, run the analytic backward,
/// and return the worst relative error against central finite
/// differences over every parameter and input coordinate.
pub fn grad_check(p: &AdapterParams, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = p.feature_dim();
    let f = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .expect("sized here");
    let upstream =
        Matrix::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .expect("sized here");
    let grads = adapter_backward(&f, p, &upstream).expect("shapes are consistent");
    max_grad_error(&f, p, &upstream, &grads)
}
