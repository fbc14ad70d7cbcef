//! Sparse autoencoder layers, greedy stacking and supervised fine-tuning
//! into the base-learner regressor.
//!
//! Layer objective on an `m × n` batch `X` with reconstruction `R`:
//!
//! ```text
//! total = (1/(m·n)) Σ (X − R)²  +  λ · ½ (‖W_enc‖² + ‖W_dec‖²)  +  β · Σ_j KL(p ‖ p̂_j)
//! ```
//!
//! where `p̂_j` is the batch-mean activation of hidden unit `j`, clamped to
//! `[ε, 1 − ε]`. Encoder and decoder are sigmoid layers with untied weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::network::FinetuneConfig;
use crate::network::{Activation, Dense, FeedForward, LinearHead, DIVERGENCE_FACTOR};
use crate::numerics::{init_weights, sigmoid, Matrix, RngStream, Scalar};

/// Clamp applied to mean hidden activations inside the KL term.
pub const SPARSITY_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SparseAeLayer<T = f64> {
    /// hidden × input
    pub w_enc: Matrix<T>,
    pub b_enc: Vec<T>,
    /// input × hidden
    pub w_dec: Matrix<T>,
    pub b_dec: Vec<T>,
    /// λ
    pub l2: T,
    /// β
    pub sparsity_weight: T,
    /// p
    pub sparsity_target: T,
}

/// Components of the layer objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeLoss<T> {
    pub total: T,
    pub mse: T,
    /// Ω_w
    pub weight_penalty: T,
    /// Ω_s
    pub sparsity_penalty: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeGradients<T> {
    pub w_enc: Matrix<T>,
    pub b_enc: Vec<T>,
    pub w_dec: Matrix<T>,
    pub b_dec: Vec<T>,
}

impl<T: Scalar> AeGradients<T> {
    /// Flattened as `w_enc, b_enc, w_dec, b_dec`.
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = self.w_enc.as_slice().to_vec();
        v.extend_from_slice(&self.b_enc);
        v.extend_from_slice(self.w_dec.as_slice());
        v.extend_from_slice(&self.b_dec);
        v
    }
}

/// Per-layer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeLayerConfig {
    pub width: usize,
    pub epochs: usize,
    pub l2: f64,
    pub sparsity_weight: f64,
    pub sparsity_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeTrainConfig {
    pub layers: Vec<AeLayerConfig>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub finetune: FinetuneConfig,
}

impl Default for AeTrainConfig {
    /// Five layers 500/400/350/300/250 with epochs 500/250/200/200/150,
    /// λ 3e-5 then 1e-5, β 4, p 0.15 then 0.1.
    fn default() -> Self {
        let widths = [500, 400, 350, 300, 250];
        let epochs = [500, 250, 200, 200, 150];
        let layers = widths
            .iter()
            .zip(epochs)
            .enumerate()
            .map(|(k, (&width, epochs))| AeLayerConfig {
                width,
                epochs,
                l2: if k == 0 { 3e-5 } else { 1e-5 },
                sparsity_weight: 4.0,
                sparsity_target: if k == 0 { 0.15 } else { 0.1 },
            })
            .collect();
        Self {
            layers,
            batch_size: 64,
            learning_rate: 0.01,
            finetune: FinetuneConfig {
                epochs: 200,
                batch_size: 32,
                learning_rate: 0.1,
            },
        }
    }
}

impl AeTrainConfig {
    /// Same hyperparameters with the given widths and a flat epoch budget.
    pub fn reduced(widths: &[usize], epochs: usize) -> Self {
        let base = Self::default();
        let layers = widths
            .iter()
            .enumerate()
            .map(|(k, &width)| AeLayerConfig {
                width,
                epochs,
                ..base.layers[k.min(base.layers.len() - 1)].clone()
            })
            .collect();
        Self {
            layers,
            finetune: FinetuneConfig {
                epochs,
                ..base.finetune.clone()
            },
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("at least one autoencoder layer".into()));
        }
        for l in &self.layers {
            if l.width == 0 || l.epochs == 0 {
                return Err(Error::InvalidArgument("layer width and epochs must be >= 1".into()));
            }
            if l.l2 < 0.0 || l.sparsity_weight < 0.0 || !(l.sparsity_target > 0.0 && l.sparsity_target < 1.0) {
                return Err(Error::InvalidArgument(
                    "need λ >= 0, β >= 0 and 0 < p < 1".into(),
                ));
            }
        }
        if self.batch_size == 0 || self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(Error::InvalidArgument("batch size >= 1 and learning rate >= 0".into()));
        }
        Ok(())
    }
}

/// Where a base-learner came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub farm_id: String,
    pub months_trained: usize,
    pub parent_model_id: Option<String>,
}

/// Pretrained encoders stacked under a linear head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct StackedSparseRegressor<T = f64> {
    pub network: FeedForward<T>,
    pub provenance: Provenance,
}

impl<T: Scalar> StackedSparseRegressor<T> {
    pub fn input_width(&self) -> usize {
        self.network.input_width()
    }

    pub fn has_input_adapter(&self) -> bool {
        self.network
            .layers
            .first()
            .is_some_and(|l| l.activation == Activation::Identity)
    }

    /// Layer shapes `(out, in)`, input side first.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.network.layers.iter().map(|l| l.weights.shape()).collect()
    }
}

/// Trained model with its full-data loss before training and after each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained<M> {
    pub model: M,
    pub losses: Vec<f64>,
}

impl<M> Trained<M> {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least the initial loss")
    }

    pub fn epochs(&self) -> usize {
        self.losses.len() - 1
    }
}

impl<T: Scalar> SparseAeLayer<T> {
    /// Uniform-initialized weights, zero biases.
    pub fn init(input: usize, cfg: &AeLayerConfig, rng: &mut RngStream) -> Self {
        Self {
            w_enc: init_weights(cfg.width, input, rng),
            b_enc: vec![T::zero(); cfg.width],
            w_dec: init_weights(input, cfg.width, rng),
            b_dec: vec![T::zero(); input],
            l2: T::of(cfg.l2),
            sparsity_weight: T::of(cfg.sparsity_weight),
            sparsity_target: T::of(cfg.sparsity_target),
        }
    }

    pub fn input_width(&self) -> usize {
        self.w_enc.cols()
    }

    pub fn hidden_width(&self) -> usize {
        self.w_enc.rows()
    }

    /// Encoder half as a network layer.
    pub fn encoder(&self) -> Dense<T> {
        Dense {
            weights: self.w_enc.clone(),
            bias: self.b_enc.clone(),
            activation: Activation::Sigmoid,
        }
    }

    pub fn encode(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        check_input(self, x)?;
        let mut h = x.matmul_t(&self.w_enc)?;
        h.add_row(&self.b_enc)?;
        h.map_inplace(sigmoid);
        Ok(h)
    }
}

fn check_input<T: Scalar>(layer: &SparseAeLayer<T>, x: &Matrix<T>) -> Result<()> {
    if x.cols() != layer.input_width() {
        return Err(Error::ShapeMismatch {
            op: "autoencoder input",
            left: x.shape(),
            right: layer.w_enc.shape(),
        });
    }
    Ok(())
}

/// Hidden code `H` and reconstruction `R`.
pub fn ae_forward<T: Scalar>(layer: &SparseAeLayer<T>, x: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    let h = layer.encode(x)?;
    let mut r = h.matmul_t(&layer.w_dec)?;
    r.add_row(&layer.b_dec)?;
    r.map_inplace(sigmoid);
    Ok((h, r))
}

fn kl<T: Scalar>(p: T, q: T) -> T {
    p * (p / q).ln() + (T::one() - p) * ((T::one() - p) / (T::one() - q)).ln()
}

fn clamp_activation<T: Scalar>(q: T) -> T {
    let eps = T::of(SPARSITY_EPS);
    q.max(eps).min(T::one() - eps)
}

fn loss_parts<T: Scalar>(layer: &SparseAeLayer<T>, x: &Matrix<T>, h: &Matrix<T>, r: &Matrix<T>) -> AeLoss<T> {
    let n = T::of((x.rows() * x.cols()) as f64);
    let sq: T = x
        .as_slice()
        .iter()
        .zip(r.as_slice())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let mse = sq / n;
    let weight_penalty = T::of(0.5) * (layer.w_enc.sum_squares() + layer.w_dec.sum_squares());
    let sparsity_penalty: T = h
        .column_means()
        .into_iter()
        .map(|q| kl(layer.sparsity_target, clamp_activation(q)))
        .sum();
    let total = mse + layer.l2 * weight_penalty + layer.sparsity_weight * sparsity_penalty;
    AeLoss {
        total,
        mse,
        weight_penalty,
        sparsity_penalty,
    }
}

pub fn ae_loss<T: Scalar>(layer: &SparseAeLayer<T>, x: &Matrix<T>) -> Result<AeLoss<T>> {
    if x.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    let (h, r) = ae_forward(layer, x)?;
    Ok(loss_parts(layer, x, &h, &r))
}

/// Loss and analytic gradient of the layer objective. The sparsity term is
/// differentiated through the batch mean `p̂_j`, contributing
/// `β·(−p/p̂_j + (1−p)/(1−p̂_j))/m` to every row of `∂L/∂H`.
pub fn ae_loss_and_gradients<T: Scalar>(
    layer: &SparseAeLayer<T>,
    x: &Matrix<T>,
) -> Result<(AeLoss<T>, AeGradients<T>)> {
    if x.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    let (h, r) = ae_forward(layer, x)?;
    let loss = loss_parts(layer, x, &h, &r);

    let m = T::of(x.rows() as f64);
    let scale = T::of(2.0) / T::of((x.rows() * x.cols()) as f64);
    // ∂L/∂(decoder pre-activation)
    let d_dec = r.zip_map(x, |ri, xi| scale * (ri - xi) * ri * (T::one() - ri))?;
    let mut w_dec = d_dec.t_matmul(&h)?;
    w_dec.add_scaled(layer.l2, &layer.w_dec)?;
    let b_dec = d_dec.column_sums();

    let p = layer.sparsity_target;
    let eps = T::of(SPARSITY_EPS);
    let sparse_grad: Vec<T> = h
        .column_means()
        .into_iter()
        .map(|q| {
            if q < eps || q > T::one() - eps {
                T::zero()
            } else {
                layer.sparsity_weight * (-p / q + (T::one() - p) / (T::one() - q)) / m
            }
        })
        .collect();
    let mut d_h = d_dec.matmul(&layer.w_dec)?;
    d_h.add_row(&sparse_grad)?;
    let d_enc = d_h.zip_map(&h, |d, a| d * a * (T::one() - a))?;
    let mut w_enc = d_enc.t_matmul(x)?;
    w_enc.add_scaled(layer.l2, &layer.w_enc)?;
    let b_enc = d_enc.column_sums();

    Ok((
        loss,
        AeGradients {
            w_enc,
            b_enc,
            w_dec,
            b_dec,
        },
    ))
}

pub fn ae_gradients<T: Scalar>(layer: &SparseAeLayer<T>, x: &Matrix<T>) -> Result<AeGradients<T>> {
    ae_loss_and_gradients(layer, x).map(|(_, g)| g)
}

fn apply_gradients<T: Scalar>(layer: &mut SparseAeLayer<T>, g: &AeGradients<T>, lr: T) -> Result<()> {
    layer.w_enc.add_scaled(-lr, &g.w_enc)?;
    layer.w_dec.add_scaled(-lr, &g.w_dec)?;
    for (b, &d) in layer.b_enc.iter_mut().zip(&g.b_enc) {
        *b -= lr * d;
    }
    for (b, &d) in layer.b_dec.iter_mut().zip(&g.b_dec) {
        *b -= lr * d;
    }
    Ok(())
}

/// Mini-batch gradient descent on the layer objective, `W ← W − α·∇`, for
/// `epochs` passes over shuffled rows.
pub fn ae_train<T: Scalar>(
    mut layer: SparseAeLayer<T>,
    x: &Matrix<T>,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    rng: &mut RngStream,
) -> Result<Trained<SparseAeLayer<T>>> {
    let initial = ae_loss(&layer, x)?.total;
    let limit = initial.max(T::min_positive_value()) * T::of(DIVERGENCE_FACTOR);
    let lr = T::of(learning_rate);
    let mut losses = vec![initial.to_f64_lossy()];
    for epoch in 1..=epochs {
        let order = rng.permutation(x.rows());
        for chunk in order.chunks(batch_size.max(1)) {
            let xb = x.select_rows(chunk);
            let (_, g) = ae_loss_and_gradients(&layer, &xb)?;
            apply_gradients(&mut layer, &g, lr)?;
        }
        let total = ae_loss(&layer, x)?.total;
        if !total.is_finite() || total > limit {
            return Err(Error::DivergedLoss {
                epoch,
                loss: total.to_f64_lossy(),
            });
        }
        losses.push(total.to_f64_lossy());
    }
    Ok(Trained {
        model: layer,
        losses,
    })
}

/// Initializes and trains one sparse autoencoder layer.
pub fn ae_pretrain<T: Scalar>(
    x: &Matrix<T>,
    layer_cfg: &AeLayerConfig,
    cfg: &AeTrainConfig,
    rng: &mut RngStream,
) -> Result<Trained<SparseAeLayer<T>>> {
    if x.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    let layer = SparseAeLayer::init(x.cols(), layer_cfg, rng);
    ae_train(layer, x, layer_cfg.epochs, cfg.batch_size, cfg.learning_rate, rng)
}

/// Greedy layer-wise pretraining: layer `k` learns to reconstruct the hidden
/// code of layer `k − 1`.
pub fn stack_pretrain<T: Scalar>(
    x: &Matrix<T>,
    cfg: &AeTrainConfig,
    rng: &mut RngStream,
) -> Result<Vec<SparseAeLayer<T>>> {
    cfg.validate()?;
    let mut layers = Vec::with_capacity(cfg.layers.len());
    let mut input = x.clone();
    for layer_cfg in &cfg.layers {
        let trained = ae_pretrain(&input, layer_cfg, cfg, rng)?;
        input = trained.model.encode(&input)?;
        layers.push(trained.model);
    }
    Ok(layers)
}

/// Stacks the encoder halves under a zero-initialized linear head and
/// backpropagates MSE through the whole network.
pub fn stack_finetune<T: Scalar>(
    layers: &[SparseAeLayer<T>],
    x: &Matrix<T>,
    y: &[T],
    cfg: &FinetuneConfig,
    provenance: Provenance,
    rng: &mut RngStream,
) -> Result<Trained<StackedSparseRegressor<T>>> {
    let top = layers
        .last()
        .ok_or_else(|| Error::InvalidArgument("no pretrained layers".into()))?;
    let mut network = FeedForward {
        layers: layers.iter().map(SparseAeLayer::encoder).collect(),
        head: LinearHead::zeros(top.hidden_width()),
    };
    let losses = network.train(x, y, &cfg.sgd(), rng)?;
    Ok(Trained {
        model: StackedSparseRegressor {
            network,
            provenance,
        },
        losses: losses.into_iter().map(Scalar::to_f64_lossy).collect(),
    })
}

/// Continues backpropagation from `model`'s parameters. The parent is left
/// untouched; architecture is preserved.
pub fn finetune_from<T: Scalar>(
    model: &StackedSparseRegressor<T>,
    x: &Matrix<T>,
    y: &[T],
    cfg: &FinetuneConfig,
    provenance: Provenance,
    rng: &mut RngStream,
) -> Result<Trained<StackedSparseRegressor<T>>> {
    if x.cols() != model.input_width() {
        return Err(Error::WidthMismatch {
            expected: model.input_width(),
            actual: x.cols(),
        });
    }
    let mut network = model.network.clone();
    let losses = network.train(x, y, &cfg.sgd(), rng)?;
    Ok(Trained {
        model: StackedSparseRegressor {
            network,
            provenance,
        },
        losses: losses.into_iter().map(Scalar::to_f64_lossy).collect(),
    })
}

/// Prepends a trainable linear projection from `new_width` inputs onto the
/// model's input width so it can be fine-tuned on a differently shaped
/// feature space. This is an opt-in extension, not part of the base method.
pub fn attach_input_adapter<T: Scalar>(
    model: &StackedSparseRegressor<T>,
    new_width: usize,
    rng: &mut RngStream,
) -> StackedSparseRegressor<T> {
    let mut out = model.clone();
    let adapter = Dense {
        weights: init_weights(model.input_width(), new_width, rng),
        bias: vec![T::zero(); model.input_width()],
        activation: Activation::Identity,
    };
    out.network.layers.insert(0, adapter);
    out
}

pub fn predict<T: Scalar>(model: &StackedSparseRegressor<T>, x: &Matrix<T>) -> Result<Vec<T>> {
    model.network.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_gradient, relative_error};

    fn layer_cfg(width: usize, l2: f64, beta: f64, p: f64) -> AeLayerConfig {
        AeLayerConfig {
            width,
            epochs: 1,
            l2,
            sparsity_weight: beta,
            sparsity_target: p,
        }
    }

    fn zero_layer(input: usize, hidden: usize, p: f64) -> SparseAeLayer {
        SparseAeLayer {
            w_enc: Matrix::zeros(hidden, input),
            b_enc: vec![0.0; hidden],
            w_dec: Matrix::zeros(input, hidden),
            b_dec: vec![0.0; input],
            l2: 0.0,
            sparsity_weight: 1.0,
            sparsity_target: p,
        }
    }

    fn flat(l: &SparseAeLayer) -> Vec<f64> {
        AeGradients {
            w_enc: l.w_enc.clone(),
            b_enc: l.b_enc.clone(),
            w_dec: l.w_dec.clone(),
            b_dec: l.b_dec.clone(),
        }
        .to_flat()
    }

    fn unflat(template: &SparseAeLayer, t: &[f64]) -> SparseAeLayer {
        let mut l = template.clone();
        let mut it = t.iter().copied();
        for v in l
            .w_enc
            .as_mut_slice()
            .iter_mut()
            .chain(l.b_enc.iter_mut())
            .chain(l.w_dec.as_mut_slice().iter_mut())
            .chain(l.b_dec.iter_mut())
        {
            *v = it.next().unwrap();
        }
        l
    }

    /// Linear manifold of dimension 2 embedded in 6-D, squashed into (0,1).
    fn manifold(rows: usize, rng: &mut RngStream) -> Matrix {
        let basis = Matrix::from_fn(2, 6, |_, _| rng.uniform_range(-1.0, 1.0));
        let coords = Matrix::from_fn(rows, 2, |_, _| rng.uniform_range(-1.0, 1.0));
        coords.matmul(&basis).unwrap().map(|v| 0.5 + 0.2 * v)
    }

    #[test]
    fn zero_parameters_give_half_everywhere() {
        let l = zero_layer(3, 2, 0.1);
        let x = Matrix::from_fn(4, 3, |i, j| (i * j) as f64);
        let (h, r) = ae_forward(&l, &x).unwrap();
        assert!(h.as_slice().iter().chain(r.as_slice()).all(|&v| v == 0.5));
    }

    #[test]
    fn single_unit_forward() {
        let mut l = zero_layer(2, 1, 0.1);
        l.w_enc = Matrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        let (h, _) = ae_forward(&l, &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(h.as_slice(), &[0.5]);
        assert!(ae_forward(&l, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn outputs_stay_in_open_unit_interval() {
        let mut rng = RngStream::new(2);
        let l: SparseAeLayer = SparseAeLayer::init(5, &layer_cfg(3, 0.0, 0.0, 0.1), &mut rng);
        let x = Matrix::from_fn(20, 5, |_, _| rng.uniform_range(-3.0, 3.0));
        let (h, r) = ae_forward(&l, &x).unwrap();
        assert!(h.as_slice().iter().chain(r.as_slice()).all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn hand_evaluated_loss() {
        let l = zero_layer(2, 3, 0.1);
        let loss = ae_loss(&l, &Matrix::zeros(1, 2)).unwrap();
        assert!((loss.mse - 0.25).abs() < 1e-15);
        assert_eq!(loss.weight_penalty, 0.0);
        let per_unit = 0.1 * (0.1f64 / 0.5).ln() + 0.9 * (0.9f64 / 0.5).ln();
        assert!((per_unit - 0.3681).abs() < 1e-4);
        assert!((loss.sparsity_penalty - 3.0 * per_unit).abs() < 1e-12);
        assert_eq!(loss.total, loss.mse + l.l2 * loss.weight_penalty + l.sparsity_weight * loss.sparsity_penalty);
    }

    #[test]
    fn sparsity_penalty_vanishes_at_target_and_grows_away_from_it() {
        // With zero encoder weights, p̂ = sigmoid(b_enc): choose b so that p̂ = p.
        let p: f64 = 0.15;
        let mut l = zero_layer(2, 2, p);
        let at = |q: f64, l: &mut SparseAeLayer| {
            let b = (q / (1.0 - q)).ln();
            l.b_enc = vec![b, b];
            ae_loss(l, &Matrix::zeros(3, 2)).unwrap().sparsity_penalty
        };
        assert!(at(p, &mut l).abs() < 1e-15);
        let mut prev = 0.0;
        for q in [0.2, 0.3, 0.5, 0.8, 0.95] {
            let v = at(q, &mut l);
            assert!(v > prev);
            prev = v;
        }
        let mut prev = 0.0;
        for q in [0.1, 0.05, 0.01, 0.001] {
            let v = at(q, &mut l);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngStream::new(8);
        let cfg = layer_cfg(4, 3e-5, 4.0, 0.15);
        let l: SparseAeLayer = SparseAeLayer::init(6, &cfg, &mut rng);
        let x = Matrix::from_fn(8, 6, |_, _| rng.uniform());
        let g = ae_gradients(&l, &x).unwrap();
        let numeric =
            finite_diff_gradient(|t: &[f64]| ae_loss(&unflat(&l, t), &x).unwrap().total, &flat(&l), 1e-5)
                .unwrap();
        let err = relative_error(&g.to_flat(), &numeric);
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn weight_decay_gradient_is_lambda_w() {
        let mut rng = RngStream::new(3);
        let mut l: SparseAeLayer = SparseAeLayer::init(4, &layer_cfg(3, 0.0, 0.0, 0.1), &mut rng);
        let x = Matrix::from_fn(5, 4, |_, _| rng.uniform());
        let g0 = ae_gradients(&l, &x).unwrap();
        l.l2 = 0.07;
        let g1 = ae_gradients(&l, &x).unwrap();
        for ((a, b), w) in g1.w_enc.as_slice().iter().zip(g0.w_enc.as_slice()).zip(l.w_enc.as_slice()) {
            assert!((a - b - 0.07 * w).abs() < 1e-15);
        }
        for ((a, b), w) in g1.w_dec.as_slice().iter().zip(g0.w_dec.as_slice()).zip(l.w_dec.as_slice()) {
            assert!((a - b - 0.07 * w).abs() < 1e-15);
        }
        assert_eq!(g1.b_enc, g0.b_enc);
    }

    #[test]
    fn sparsity_gradient_is_linear_in_beta() {
        let mut rng = RngStream::new(4);
        let mut l: SparseAeLayer = SparseAeLayer::init(4, &layer_cfg(3, 0.0, 0.0, 0.1), &mut rng);
        let x = Matrix::from_fn(6, 4, |_, _| rng.uniform());
        let g0 = ae_gradients(&l, &x).unwrap().to_flat();
        l.sparsity_weight = 1.0;
        let g1 = ae_gradients(&l, &x).unwrap().to_flat();
        l.sparsity_weight = 2.0;
        let g2 = ae_gradients(&l, &x).unwrap().to_flat();
        for ((a, b), c) in g2.iter().zip(&g1).zip(&g0) {
            assert!(((a - c) - 2.0 * (b - c)).abs() < 1e-12);
        }
    }

    #[test]
    fn pretraining_reduces_reconstruction_error() {
        let mut rng = RngStream::new(12);
        let x = manifold(64, &mut rng);
        let cfg = AeTrainConfig {
            layers: vec![AeLayerConfig {
                epochs: 200,
                ..layer_cfg(4, 1e-5, 4.0, 0.1)
            }],
            batch_size: 16,
            learning_rate: 0.5,
            ..AeTrainConfig::default()
        };
        let init: SparseAeLayer = SparseAeLayer::init(6, &cfg.layers[0], &mut RngStream::new(1));
        let before = ae_loss(&init, &x).unwrap();
        let trained = ae_pretrain(&x, &cfg.layers[0], &cfg, &mut RngStream::new(1)).unwrap();
        let after = ae_loss(&trained.model, &x).unwrap();
        assert!(after.mse < before.mse);
        assert!(trained.final_loss() <= trained.losses[1]);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut rng = RngStream::new(5);
        let x = manifold(20, &mut rng);
        let cfg = AeTrainConfig {
            layers: vec![AeLayerConfig {
                epochs: 3,
                ..layer_cfg(3, 1e-5, 4.0, 0.1)
            }],
            learning_rate: 0.0,
            ..AeTrainConfig::default()
        };
        let init: SparseAeLayer = SparseAeLayer::init(6, &cfg.layers[0], &mut RngStream::new(2));
        let trained = ae_pretrain(&x, &cfg.layers[0], &cfg, &mut RngStream::new(2)).unwrap();
        assert_eq!(trained.model, init);
    }

    #[test]
    fn pretraining_is_deterministic() {
        let mut rng = RngStream::new(5);
        let x = manifold(30, &mut rng);
        let cfg = AeTrainConfig::reduced(&[4, 2], 5);
        let a: Vec<SparseAeLayer> = stack_pretrain(&x, &cfg, &mut RngStream::new(3)).unwrap();
        let b: Vec<SparseAeLayer> = stack_pretrain(&x, &cfg, &mut RngStream::new(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stacking_chains_shapes_and_codes() {
        let mut rng = RngStream::new(6);
        let x = Matrix::from_fn(12, 10, |_, _| rng.uniform());
        let cfg = AeTrainConfig::reduced(&[8, 4], 2);
        let layers = stack_pretrain(&x, &cfg, &mut RngStream::new(1)).unwrap();
        assert_eq!(layers[0].w_enc.shape(), (8, 10));
        assert_eq!(layers[1].w_enc.shape(), (4, 8));

        // Layer 2 must equal a layer trained directly on layer 1's code.
        let h1 = ae_forward(&layers[0], &x).unwrap().0;
        let mut replay = RngStream::new(1);
        let first = ae_pretrain(&x, &cfg.layers[0], &cfg, &mut replay).unwrap().model;
        assert_eq!(first, layers[0]);
        let second = ae_pretrain(&h1, &cfg.layers[1], &cfg, &mut replay).unwrap().model;
        assert_eq!(second, layers[1]);

        let single = AeTrainConfig::reduced(&[8], 2);
        let only = stack_pretrain(&x, &single, &mut RngStream::new(1)).unwrap();
        assert_eq!(only[0], layers[0]);
    }

    fn regression_fixture(rng: &mut RngStream) -> (Matrix, Vec<f64>) {
        let x = Matrix::from_fn(80, 6, |_, _| rng.uniform());
        let y = (0..80).map(|i| 0.2 + 0.5 * x.get(i, 0) - 0.2 * x.get(i, 3)).collect();
        (x, y)
    }

    fn prov(id: &str, parent: Option<&str>) -> Provenance {
        Provenance {
            model_id: id.into(),
            farm_id: "f".into(),
            months_trained: 4,
            parent_model_id: parent.map(Into::into),
        }
    }

    #[test]
    fn finetune_contracts() {
        let mut rng = RngStream::new(10);
        let (x, y) = regression_fixture(&mut rng);
        let cfg = AeTrainConfig::reduced(&[5, 3], 3);
        let layers = stack_pretrain(&x, &cfg, &mut rng).unwrap();

        let untrained = stack_finetune(&layers, &x, &y, &cfg.finetune.with_epochs(0), prov("a", None), &mut rng)
            .unwrap();
        assert_eq!(predict(&untrained.model, &x).unwrap(), vec![0.0; 80]);
        assert_eq!(untrained.model.provenance.parent_model_id, None);

        let trained = stack_finetune(&layers, &x, &y, &cfg.finetune.with_epochs(40), prov("a", None), &mut rng)
            .unwrap();
        assert!(trained.final_loss() <= untrained.final_loss());

        let parent = trained.model.clone();
        let child0 =
            finetune_from(&parent, &x, &y, &cfg.finetune.with_epochs(0), prov("b", Some("a")), &mut rng).unwrap();
        assert_eq!(child0.model.network, parent.network);
        let child = finetune_from(&parent, &x, &y, &cfg.finetune.with_epochs(5), prov("b", Some("a")), &mut rng)
            .unwrap();
        assert_eq!(parent, trained.model);
        assert_eq!(child.model.shapes(), parent.shapes());
        assert_eq!(child.model.provenance.parent_model_id.as_deref(), Some("a"));

        let narrow = Matrix::zeros(3, 5);
        assert!(matches!(
            finetune_from(&parent, &narrow, &[0.0; 3], &cfg.finetune, prov("c", None), &mut rng),
            Err(Error::WidthMismatch { expected: 6, actual: 5 })
        ));
        let adapted = attach_input_adapter(&parent, 5, &mut rng);
        assert!(adapted.has_input_adapter());
        assert_eq!(adapted.input_width(), 5);
        assert!(finetune_from(&adapted, &narrow, &[0.0; 3], &cfg.finetune, prov("c", None), &mut rng).is_ok());
    }

    #[test]
    fn predictions_follow_row_permutations() {
        let mut rng = RngStream::new(10);
        let (x, y) = regression_fixture(&mut rng);
        let cfg = AeTrainConfig::reduced(&[4], 2);
        let layers = stack_pretrain(&x, &cfg, &mut rng).unwrap();
        let m = stack_finetune(&layers, &x, &y, &cfg.finetune.with_epochs(3), prov("a", None), &mut rng)
            .unwrap()
            .model;
        let p = predict(&m, &x).unwrap();
        let perm = rng.permutation(80);
        let pp = predict(&m, &x.select_rows(&perm)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(pp[k], p[i]);
        }
        assert_eq!(predict(&m, &x.slice_rows(0..1)).unwrap().len(), 1);
    }

    #[test]
    fn single_precision_layers_work() {
        let mut rng = RngStream::new(1);
        let x = Matrix::<f32>::from_fn(10, 4, |_, _| rng.uniform() as f32);
        let cfg = AeTrainConfig::reduced(&[3], 3);
        let layers: Vec<SparseAeLayer<f32>> = stack_pretrain(&x, &cfg, &mut rng).unwrap();
        let loss = ae_loss(&layers[0], &x).unwrap();
        assert!(loss.total.is_finite());
    }
}
