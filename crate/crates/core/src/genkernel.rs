//! Reference kernels for the image-prompt adapter: single-head scaled
//! dot-product cross-attention, the decoupled text/image combination, forward
//! noising and the simple diffusion loss.
//!
//! Everything uses the row-vector convention: `Q = Z·W_q`, `K = C·W_k`,
//! `V = C·W_v`, output `softmax(Q·Kᵀ/√d)·V`.

use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

fn mismatch<T>(msg: impl Into<String>) -> Result<T, KernelError> {
    Err(KernelError::ShapeMismatch(msg.into()))
}

/// Query/key/value projections, each `model_dim × head_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttnWeights {
    wq: Matrix,
    wk: Matrix,
    wv: Matrix,
}

impl AttnWeights {
    pub fn new(wq: Matrix, wk: Matrix, wv: Matrix) -> Result<Self, KernelError> {
        if wq.rows() != wk.rows() || wq.rows() != wv.rows() {
            return mismatch("projection matrices disagree on model_dim");
        }
        if wq.cols() != wk.cols() {
            return mismatch("query and key head_dim differ");
        }
        if wq.cols() == 0 || wv.cols() == 0 {
            return mismatch("head_dim must be at least 1");
        }
        if !(wq.is_finite() && wk.is_finite() && wv.is_finite()) {
            return mismatch("non-finite weights");
        }
        Ok(Self { wq, wk, wv })
    }

    /// Identity projections on `dim`-wide features.
    pub fn identity(dim: usize) -> Self {
        Self::new(Matrix::identity(dim), Matrix::identity(dim), Matrix::identity(dim))
            .expect("identity weights are conformable")
    }

    /// New weights reusing this query projection with other key/value maps.
    pub fn with_shared_query(&self, wk: Matrix, wv: Matrix) -> Result<Self, KernelError> {
        Self::new(self.wq.clone(), wk, wv)
    }

    pub fn model_dim(&self) -> usize {
        self.wq.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.wq.cols()
    }

    pub fn wq(&self) -> &Matrix {
        &self.wq
    }

    pub fn wk(&self) -> &Matrix {
        &self.wk
    }

    pub fn wv(&self) -> &Matrix {
        &self.wv
    }
}

/// Latent noise feature map used as the attention query, `n × model_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentQuery(pub Matrix);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Text,
    Image,
}

/// Conditioning feature attended to, `m × model_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub data: Matrix,
    pub kind: FeatureKind,
}

impl Feature {
    pub fn text(data: Matrix) -> Self {
        Self {
            data,
            kind: FeatureKind::Text,
        }
    }

    pub fn image(data: Matrix) -> Self {
        Self {
            data,
            kind: FeatureKind::Image,
        }
    }
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let row = m.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (c, e) in exps.iter().enumerate() {
            out.set(r, c, e / sum);
        }
    }
    out
}

/// The `n × m` attention matrix `softmax(Q·Kᵀ/√d)`.
pub fn attention_weights(
    z: &LatentQuery,
    c: &Feature,
    w: &AttnWeights,
) -> Result<Matrix, KernelError> {
    if z.0.cols() != w.model_dim() || c.data.cols() != w.model_dim() {
        return mismatch(format!(
            "inputs have {} and {} columns, weights expect {}",
            z.0.cols(),
            c.data.cols(),
            w.model_dim()
        ));
    }
    if c.data.rows() == 0 {
        return mismatch("feature has no rows");
    }
    let q = z.0.matmul(&w.wq).expect("checked");
    let k = c.data.matmul(&w.wk).expect("checked");
    let mut logits = q.matmul(&k.transpose()).expect("same head_dim");
    let inv_sqrt_d = 1.0 / (w.head_dim() as f64).sqrt();
    for r in 0..logits.rows() {
        for col in 0..logits.cols() {
            logits.set(r, col, logits.get(r, col) * inv_sqrt_d);
        }
    }
    Ok(softmax_rows(&logits))
}

/// Single-head cross-attention output, `n × value_dim`.
pub fn cross_attention(
    z: &LatentQuery,
    c: &Feature,
    w: &AttnWeights,
) -> Result<Matrix, KernelError> {
    let a = attention_weights(z, c, w)?;
    let v = c.data.matmul(&w.wv).expect("checked");
    Ok(a.matmul(&v).expect("attention is n × m"))
}

/// `Z_text + λ·Z_img`. With `λ = 0` the text output is returned unchanged,
/// bit for bit.
pub fn combine_outputs(z_text: &Matrix, z_img: &Matrix, lambda: f64) -> Result<Matrix, KernelError> {
    if z_text.rows() != z_img.rows() || z_text.cols() != z_img.cols() {
        return mismatch("text and image outputs differ in shape");
    }
    if lambda == 0.0 {
        return Ok(z_text.clone());
    }
    let data = z_text
        .data()
        .iter()
        .zip(z_img.data())
        .map(|(t, i)| t + lambda * i)
        .collect();
    Ok(Matrix::from_vec(z_text.rows(), z_text.cols(), data).expect("same shape"))
}

/// Decoupled cross-attention: separate text and image branches over the same
/// latent query, merged with weight `λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoupledAttention {
    pub text: AttnWeights,
    pub image: AttnWeights,
}

impl DecoupledAttention {
    /// Image branch shares the text branch's query projection.
    pub fn shared_query(text: AttnWeights, image_wk: Matrix, image_wv: Matrix) -> Result<Self, KernelError> {
        let image = text.with_shared_query(image_wk, image_wv)?;
        Ok(Self { text, image })
    }

    pub fn forward(
        &self,
        z: &LatentQuery,
        text: &Feature,
        image: &Feature,
        lambda: f64,
    ) -> Result<Matrix, KernelError> {
        let zt = cross_attention(z, text, &self.text)?;
        let zi = cross_attention(z, image, &self.image)?;
        combine_outputs(&zt, &zi, lambda)
    }
}

/// Forward-noised sample `α_t·x₀ + σ_t·ε`.
pub fn noisy_sample(x0: &[f64], eps: &[f64], alpha_t: f64, sigma_t: f64) -> Result<Vec<f64>, KernelError> {
    if x0.len() != eps.len() {
        return mismatch("x0 and eps differ in length");
    }
    Ok(x0.iter().zip(eps).map(|(x, e)| alpha_t * x + sigma_t * e).collect())
}

/// Squared error `‖ε − ε_pred‖²`.
pub fn l_simple(eps: &[f64], eps_pred: &[f64]) -> Result<f64, KernelError> {
    if eps.len() != eps_pred.len() {
        return mismatch("eps and prediction differ in length");
    }
    Ok(eps.iter().zip(eps_pred).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// One training sample for the simple diffusion loss.
#[derive(Clone, Debug)]
pub struct LossSample<'a> {
    pub x0: &'a [f64],
    pub eps: &'a [f64],
    pub alpha_t: f64,
    pub sigma_t: f64,
    pub step: usize,
}

/// Sample mean of `‖ε − ε_θ(x_t, t)‖²` with a caller-supplied noise
/// predictor. Conditioning is captured by the predictor.
pub fn expected_simple_loss<F>(samples: &[LossSample<'_>], mut predictor: F) -> Result<f64, KernelError>
where
    F: FnMut(&[f64], usize) -> Vec<f64>,
{
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in samples {
        let xt = noisy_sample(s.x0, s.eps, s.alpha_t, s.sigma_t)?;
        total += l_simple(s.eps, &predictor(&xt, s.step))?;
    }
    Ok(total / samples.len() as f64)
}
