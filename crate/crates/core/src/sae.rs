//! Sparse-autoencoder representation and per-feature activation math.
//!
//! An SAE decomposes a `d`-dimensional residual-stream vector into `N > d`
//! nonnegative feature activations (the latent code) and reconstructs it as
//! an affine combination of decoder columns. Encoder rows score features;
//! decoder columns are the dictionary directions used for steering.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Array3, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorfile::{TensorFile, TensorFileWriter};

/// Activation applied to encoder pre-activations.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationFn {
    ReLU,
    /// `z * 1[z > kappa]` with a per-feature nonnegative threshold.
    JumpReLU(Array1<f32>),
}

impl ActivationFn {
    fn apply_in_place(&self, z: &mut Array1<f32>) {
        match self {
            ActivationFn::ReLU => z.mapv_inplace(|v| v.max(0.0)),
            ActivationFn::JumpReLU(kappa) => {
                for (v, k) in z.iter_mut().zip(kappa.iter()) {
                    if *v <= *k {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationFn::ReLU => "relu",
            ActivationFn::JumpReLU(_) => "jump_relu",
        }
    }
}

/// Nonnegative latent code of one residual vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(pub Array1<f32>);

impl LatentVector {
    pub fn values(&self) -> &Array1<f32> {
        &self.0
    }
}

/// A pre-trained sparse autoencoder, immutable after construction.
#[derive(Debug, Clone)]
pub struct SparseAutoencoder {
    /// N x d; row `f` scores feature `f`.
    encoder_matrix: Array2<f32>,
    /// Length N.
    encoder_bias: Array1<f32>,
    /// d x N; column `f` is the dictionary direction of feature `f`.
    decoder_matrix: Array2<f32>,
    /// Length d.
    decoder_bias: Array1<f32>,
    activation_fn: ActivationFn,
    hook_layer: usize,
}

impl SparseAutoencoder {
    pub fn new(
        encoder_matrix: Array2<f32>,
        encoder_bias: Array1<f32>,
        decoder_matrix: Array2<f32>,
        decoder_bias: Array1<f32>,
        activation_fn: ActivationFn,
        hook_layer: usize,
    ) -> Result<Self> {
        let (n, d) = encoder_matrix.dim();
        if n <= d {
            return Err(Error::Validation(format!(
                "hidden width {n} must exceed model dim {d} (overcomplete dictionary)"
            )));
        }
        if n < 4 * d {
            log::warn!("SAE hidden width {n} is less than 4x model dim {d}; unusually narrow");
        }
        if decoder_matrix.dim() != (d, n) {
            return Err(Error::shape(
                "decoder matrix",
                format!("{d}x{n}"),
                format!("{}x{}", decoder_matrix.dim().0, decoder_matrix.dim().1),
            ));
        }
        if encoder_bias.len() != n {
            return Err(Error::shape("encoder bias", n.to_string(), encoder_bias.len().to_string()));
        }
        if decoder_bias.len() != d {
            return Err(Error::shape("decoder bias", d.to_string(), decoder_bias.len().to_string()));
        }
        if let ActivationFn::JumpReLU(kappa) = &activation_fn {
            if kappa.len() != n {
                return Err(Error::shape("jump threshold", n.to_string(), kappa.len().to_string()));
            }
            if kappa.iter().any(|k| !k.is_finite() || *k < 0.0) {
                return Err(Error::Validation(
                    "jump thresholds must be finite and nonnegative".to_string(),
                ));
            }
        }
        for (name, finite) in [
            ("encoder matrix", encoder_matrix.iter().all(|v| v.is_finite())),
            ("encoder bias", encoder_bias.iter().all(|v| v.is_finite())),
            ("decoder matrix", decoder_matrix.iter().all(|v| v.is_finite())),
            ("decoder bias", decoder_bias.iter().all(|v| v.is_finite())),
        ] {
            if !finite {
                return Err(Error::NonFinite(name.to_string()));
            }
        }

        Ok(SparseAutoencoder {
            encoder_matrix,
            encoder_bias,
            decoder_matrix,
            decoder_bias,
            activation_fn,
            hook_layer,
        })
    }

    pub fn hidden_width(&self) -> usize {
        self.encoder_matrix.nrows()
    }

    pub fn model_dim(&self) -> usize {
        self.encoder_matrix.ncols()
    }

    pub fn hook_layer(&self) -> usize {
        self.hook_layer
    }

    pub fn activation_fn(&self) -> &ActivationFn {
        &self.activation_fn
    }

    pub fn encoder_matrix(&self) -> &Array2<f32> {
        &self.encoder_matrix
    }

    pub fn decoder_bias(&self) -> &Array1<f32> {
        &self.decoder_bias
    }

    /// Encoder row `w_enc,f`.
    pub fn encoder_row(&self, feature: usize) -> Result<ArrayView1<'_, f32>> {
        self.check_feature(feature)?;
        Ok(self.encoder_matrix.row(feature))
    }

    /// Dictionary direction `v_f = col_f(W_dec)`.
    pub fn decoder_column(&self, feature: usize) -> Result<Array1<f32>> {
        self.check_feature(feature)?;
        Ok(self.decoder_matrix.column(feature).to_owned())
    }

    fn check_feature(&self, feature: usize) -> Result<()> {
        if feature >= self.hidden_width() {
            return Err(Error::FeatureIndex {
                index: feature,
                width: self.hidden_width(),
            });
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView1<f32>) -> Result<()> {
        if x.len() != self.model_dim() {
            return Err(Error::shape(
                "encode input",
                self.model_dim().to_string(),
                x.len().to_string(),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encode input".to_string()));
        }
        Ok(())
    }

    /// `h(x) = sigma(W_enc x + b_enc)`.
    pub fn encode(&self, x: &ArrayView1<f32>) -> Result<LatentVector> {
        self.check_input(x)?;
        let mut z = self.encoder_matrix.dot(x) + &self.encoder_bias;
        self.activation_fn.apply_in_place(&mut z);
        Ok(LatentVector(z))
    }

    /// `x_hat = W_dec h + b_dec`.
    pub fn decode(&self, h: &LatentVector) -> Result<Array1<f32>> {
        if h.0.len() != self.hidden_width() {
            return Err(Error::shape(
                "decode input",
                self.hidden_width().to_string(),
                h.0.len().to_string(),
            ));
        }
        Ok(self.decoder_matrix.dot(&h.0) + &self.decoder_bias)
    }

    /// Latents for every non-padding token; padding positions are zero.
    ///
    /// Each token goes through the same code path as [`encode`](Self::encode),
    /// so the result is elementwise identical to a per-token loop.
    pub fn encode_batch(&self, batch: &ActivationBatch) -> Result<Array3<f32>> {
        let (b, s, d) = batch.data.dim();
        if d != self.model_dim() {
            return Err(Error::shape(
                "encode_batch input",
                format!("last dim {}", self.model_dim()),
                format!("last dim {d}"),
            ));
        }
        let mut out = Array3::<f32>::zeros((b, s, self.hidden_width()));
        for i in 0..b {
            for j in 0..batch.sequence_lengths[i] {
                let h = self.encode(&batch.data.index_axis(Axis(0), i).row(j))?;
                out.index_axis_mut(Axis(0), i).row_mut(j).assign(&h.0);
            }
        }
        Ok(out)
    }

    /// Raw encoder-row score `w_enc,f . x`, the quantity conditional-steering
    /// masks threshold. `include_bias` adds `b_enc,f` for weight releases whose
    /// thresholds were calibrated against full encoder activations.
    pub fn feature_preactivation(
        &self,
        x: &ArrayView1<f32>,
        feature: usize,
        include_bias: bool,
    ) -> Result<f32> {
        self.check_feature(feature)?;
        self.check_input(x)?;
        let mut v = self.encoder_matrix.row(feature).dot(x);
        if include_bias {
            v += self.encoder_bias[feature];
        }
        Ok(v)
    }

    /// Round trip through the SAE: returns `(x_hat, x - x_hat)`.
    pub fn reconstruct(&self, x: &ArrayView1<f32>) -> Result<(Array1<f32>, Array1<f32>)> {
        let h = self.encode(x)?;
        let x_hat = self.decode(&h)?;
        let residual = x.to_owned() - &x_hat;
        Ok((x_hat, residual))
    }
}

// ---------------------------------------------------------------------------
// Activation batches
// ---------------------------------------------------------------------------

/// A `b x s x d` block of residual-stream activations with per-sequence
/// valid-token counts. Positions at or beyond a sequence's length are padding
/// and are excluded from statistics, masks, and interventions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBatch {
    pub data: Array3<f32>,
    pub sequence_lengths: Vec<usize>,
}

impl ActivationBatch {
    pub fn new(data: Array3<f32>, sequence_lengths: Vec<usize>) -> Result<Self> {
        let (b, s, _) = data.dim();
        if sequence_lengths.len() != b {
            return Err(Error::shape(
                "sequence_lengths",
                b.to_string(),
                sequence_lengths.len().to_string(),
            ));
        }
        for (i, &len) in sequence_lengths.iter().enumerate() {
            if len == 0 || len > s {
                return Err(Error::Validation(format!(
                    "sequence {i} length {len} outside [1, {s}]"
                )));
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("activation batch".to_string()));
        }
        Ok(ActivationBatch {
            data,
            sequence_lengths,
        })
    }

    /// Wrap a single full-length sequence (no padding).
    pub fn from_sequence(seq: ndarray::Array2<f32>) -> Result<Self> {
        let (s, d) = seq.dim();
        let data = seq.into_shape_with_order((1, s, d)).expect("contiguous reshape");
        ActivationBatch::new(data, vec![s])
    }

    pub fn batch_size(&self) -> usize {
        self.data.dim().0
    }

    pub fn max_seq_len(&self) -> usize {
        self.data.dim().1
    }

    pub fn model_dim(&self) -> usize {
        self.data.dim().2
    }

    pub fn is_padding(&self, seq: usize, pos: usize) -> bool {
        pos >= self.sequence_lengths[seq]
    }
}

// ---------------------------------------------------------------------------
// Loading and saving
// ---------------------------------------------------------------------------

/// JSON sidecar carrying what the raw tensors cannot: the layer the SAE was
/// trained on, its activation function, and its declared dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SaeMetadata {
    pub hook_layer: usize,
    pub activation_fn: String,
    pub model_dim: usize,
    pub hidden_width: usize,
}

/// Default sidecar path: the weights path with `.json` appended.
pub fn sidecar_path(weights_path: &Path) -> PathBuf {
    let mut os = weights_path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

/// Orient a stored matrix to `rows x cols`, transposing if it was saved the
/// other way around. Ambiguous (square) shapes are an error.
fn canonicalize(
    name: &str,
    data: Vec<f32>,
    shape: &[usize],
    rows: usize,
    cols: usize,
) -> Result<Array2<f32>> {
    if shape.len() != 2 {
        return Err(Error::TensorMismatch {
            name: name.to_string(),
            detail: format!("expected a matrix, got shape {shape:?}"),
        });
    }
    if rows == cols {
        return Err(Error::TensorMismatch {
            name: name.to_string(),
            detail: format!(
                "orientation ambiguous: hidden width equals model dim ({rows}); refusing to guess"
            ),
        });
    }
    let arr = Array2::from_shape_vec((shape[0], shape[1]), data).expect("shape checked");
    if (shape[0], shape[1]) == (rows, cols) {
        Ok(arr)
    } else if (shape[0], shape[1]) == (cols, rows) {
        Ok(arr.t().to_owned())
    } else {
        Err(Error::TensorMismatch {
            name: name.to_string(),
            detail: format!("shape {shape:?} matches neither {rows}x{cols} nor {cols}x{rows}"),
        })
    }
}

/// Load an SAE from a named-tensor container plus its JSON sidecar.
///
/// Required tensors: `W_enc`, `W_dec`, `b_enc`, `b_dec`; `threshold` is
/// required for JumpReLU. Encoder/decoder orientation is canonicalized from
/// the sidecar's dimensions.
pub fn load_sae(weights_path: impl AsRef<Path>) -> Result<SparseAutoencoder> {
    let weights_path = weights_path.as_ref();
    let meta_path = sidecar_path(weights_path);
    let meta_text = std::fs::read_to_string(&meta_path)
        .map_err(|e| Error::io(format!("read SAE sidecar {}", meta_path.display()), e))?;
    let meta: SaeMetadata = serde_json::from_str(&meta_text)
        .map_err(|e| Error::json(format!("parse SAE sidecar {}", meta_path.display()), e))?;

    let n = meta.hidden_width;
    let d = meta.model_dim;
    let mut file = TensorFile::open(weights_path)?;

    let (enc_data, enc_shape) = file.read_f32("W_enc")?;
    let encoder_matrix = canonicalize("W_enc", enc_data, &enc_shape, n, d)?;
    let (dec_data, dec_shape) = file.read_f32("W_dec")?;
    let decoder_matrix = canonicalize("W_dec", dec_data, &dec_shape, d, n)?;

    let (b_enc, b_enc_shape) = file.read_f32("b_enc")?;
    if b_enc_shape != vec![n] {
        return Err(Error::TensorMismatch {
            name: "b_enc".to_string(),
            detail: format!("expected shape [{n}], got {b_enc_shape:?}"),
        });
    }
    let (b_dec, b_dec_shape) = file.read_f32("b_dec")?;
    if b_dec_shape != vec![d] {
        return Err(Error::TensorMismatch {
            name: "b_dec".to_string(),
            detail: format!("expected shape [{d}], got {b_dec_shape:?}"),
        });
    }

    let activation_fn = match meta.activation_fn.as_str() {
        "relu" => {
            if file.contains("threshold") {
                log::warn!("SAE declares relu but carries a `threshold` tensor; ignoring it");
            }
            ActivationFn::ReLU
        }
        "jump_relu" => {
            let (kappa, kappa_shape) = file.read_f32("threshold")?;
            if kappa_shape != vec![n] {
                return Err(Error::TensorMismatch {
                    name: "threshold".to_string(),
                    detail: format!("expected shape [{n}], got {kappa_shape:?}"),
                });
            }
            ActivationFn::JumpReLU(Array1::from_vec(kappa))
        }
        other => {
            return Err(Error::Config(format!(
                "unknown activation_fn `{other}` (expected relu or jump_relu)"
            )))
        }
    };

    SparseAutoencoder::new(
        encoder_matrix,
        Array1::from_vec(b_enc),
        decoder_matrix,
        Array1::from_vec(b_dec),
        activation_fn,
        meta.hook_layer,
    )
}

/// Write an SAE to a container file plus sidecar, in canonical orientation.
pub fn save_sae(sae: &SparseAutoencoder, weights_path: impl AsRef<Path>) -> Result<()> {
    let weights_path = weights_path.as_ref();
    let n = sae.hidden_width();
    let d = sae.model_dim();

    let mut w = TensorFileWriter::new();
    w.add(
        "W_enc",
        vec![n, d],
        sae.encoder_matrix.iter().copied().collect(),
    )?;
    w.add(
        "W_dec",
        vec![d, n],
        sae.decoder_matrix.iter().copied().collect(),
    )?;
    w.add("b_enc", vec![n], sae.encoder_bias.to_vec())?;
    w.add("b_dec", vec![d], sae.decoder_bias.to_vec())?;
    if let ActivationFn::JumpReLU(kappa) = &sae.activation_fn {
        w.add("threshold", vec![n], kappa.to_vec())?;
    }
    w.write(weights_path)?;

    let meta = SaeMetadata {
        hook_layer: sae.hook_layer,
        activation_fn: sae.activation_fn.name().to_string(),
        model_dim: d,
        hidden_width: n,
    };
    let meta_path = sidecar_path(weights_path);
    std::fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).expect("metadata serializes"),
    )
    .map_err(|e| Error::io(format!("write SAE sidecar {}", meta_path.display()), e))?;
    Ok(())
}
