//! Restricted Boltzmann machines, contrastive-divergence training, greedy
//! DBN stacking and regression fine-tuning of the meta-learner.
//!
//! Visible units take values in `[0, 1]` and are treated as Bernoulli
//! probabilities. Energy of a joint state:
//!
//! ```text
//! E(v, h) = −Σ a_i v_i − Σ b_j h_j − Σ_j Σ_i w_ji v_i h_j
//! ```

use serde::{Deserialize, Serialize};

use crate::autoencoder::Trained;
use crate::error::{Error, Result};
use crate::network::{Activation, Dense, FeedForward, FinetuneConfig, Gradients, LinearHead};
use crate::numerics::{dot, init_weights, sigmoid, Matrix, RngStream, Scalar};

/// Largest `m + n` that [`rbm_exact_distribution`] will enumerate.
pub const ENUMERATION_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Rbm<T = f64> {
    /// hidden × visible
    pub weights: Matrix<T>,
    /// `a`
    pub visible_bias: Vec<T>,
    /// `b`
    pub hidden_bias: Vec<T>,
}

/// Increment (or velocity) for every RBM parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmDelta<T = f64> {
    pub weights: Matrix<T>,
    pub visible_bias: Vec<T>,
    pub hidden_bias: Vec<T>,
}

impl<T: Scalar> RbmDelta<T> {
    pub fn zeros_like(rbm: &Rbm<T>) -> Self {
        Self {
            weights: Matrix::zeros(rbm.hidden_width(), rbm.visible_width()),
            visible_bias: vec![T::zero(); rbm.visible_width()],
            hidden_bias: vec![T::zero(); rbm.hidden_width()],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weights
            .as_slice()
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
            .all(|v| v.is_zero())
    }
}

/// Chain endpoints of one CD-k pass over a batch. `h0` holds sampled
/// binary states; `vk` and `hk` hold probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct CdSample<T = f64> {
    pub v0: Matrix<T>,
    pub h0: Matrix<T>,
    pub vk: Matrix<T>,
    pub hk: Matrix<T>,
}

impl<T: Scalar> Rbm<T> {
    pub fn zeros(visible: usize, hidden: usize) -> Self {
        Self {
            weights: Matrix::zeros(hidden, visible),
            visible_bias: vec![T::zero(); visible],
            hidden_bias: vec![T::zero(); hidden],
        }
    }

    /// Uniform-initialized weights, zero biases.
    pub fn init(visible: usize, hidden: usize, rng: &mut RngStream) -> Self {
        Self {
            weights: init_weights(hidden, visible, rng),
            ..Self::zeros(visible, hidden)
        }
    }

    pub fn visible_width(&self) -> usize {
        self.weights.cols()
    }

    pub fn hidden_width(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_params(&self) -> usize {
        self.weights.as_slice().len() + self.visible_width() + self.hidden_width()
    }

    /// Deterministic upward layer.
    pub fn as_dense(&self) -> Dense<T> {
        Dense {
            weights: self.weights.clone(),
            bias: self.hidden_bias.clone(),
            activation: Activation::Sigmoid,
        }
    }

    fn apply(&mut self, d: &RbmDelta<T>) -> Result<()> {
        self.weights.add_scaled(T::one(), &d.weights)?;
        for (p, &v) in self.visible_bias.iter_mut().zip(&d.visible_bias) {
            *p += v;
        }
        for (p, &v) in self.hidden_bias.iter_mut().zip(&d.hidden_bias) {
            *p += v;
        }
        Ok(())
    }
}

fn check_len(op: &'static str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::ShapeMismatch {
            op,
            left: (1, got),
            right: (1, want),
        });
    }
    Ok(())
}

pub fn rbm_energy<T: Scalar>(rbm: &Rbm<T>, v: &[T], h: &[T]) -> Result<T> {
    check_len("rbm_energy visible", v.len(), rbm.visible_width())?;
    check_len("rbm_energy hidden", h.len(), rbm.hidden_width())?;
    let wv = rbm.weights.mul_vec(v)?;
    Ok(-dot(&rbm.visible_bias, v) - dot(&rbm.hidden_bias, h) - dot(h, &wv))
}

/// `p(h_j = 1 | v) = σ(Σ_i v_i w_ji + b_j)`
pub fn rbm_hidden_prob<T: Scalar>(rbm: &Rbm<T>, v: &[T]) -> Result<Vec<T>> {
    check_len("rbm_hidden_prob", v.len(), rbm.visible_width())?;
    let mut p = rbm.weights.mul_vec(v)?;
    for (x, &b) in p.iter_mut().zip(&rbm.hidden_bias) {
        *x = sigmoid(*x + b);
    }
    Ok(p)
}

/// `p(v_i = 1 | h) = σ(Σ_j h_j w_ji + a_i)`
pub fn rbm_visible_prob<T: Scalar>(rbm: &Rbm<T>, h: &[T]) -> Result<Vec<T>> {
    check_len("rbm_visible_prob", h.len(), rbm.hidden_width())?;
    let mut p = rbm.weights.vec_mul(h)?;
    for (x, &a) in p.iter_mut().zip(&rbm.visible_bias) {
        *x = sigmoid(*x + a);
    }
    Ok(p)
}

/// Row-wise [`rbm_hidden_prob`].
pub fn hidden_probs<T: Scalar>(rbm: &Rbm<T>, v: &Matrix<T>) -> Result<Matrix<T>> {
    let mut h = v.matmul_t(&rbm.weights)?;
    h.add_row(&rbm.hidden_bias)?;
    h.map_inplace(sigmoid);
    Ok(h)
}

/// Row-wise [`rbm_visible_prob`].
pub fn visible_probs<T: Scalar>(rbm: &Rbm<T>, h: &Matrix<T>) -> Result<Matrix<T>> {
    let mut v = h.matmul(&rbm.weights)?;
    v.add_row(&rbm.visible_bias)?;
    v.map_inplace(sigmoid);
    Ok(v)
}

/// Mean-field reconstruction error `mean |v − p(v | p(h | v))|`.
pub fn reconstruction_error<T: Scalar>(rbm: &Rbm<T>, v: &Matrix<T>) -> Result<T> {
    if v.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    let r = visible_probs(rbm, &hidden_probs(rbm, v)?)?;
    let n = T::of(v.as_slice().len() as f64);
    Ok(v.as_slice()
        .iter()
        .zip(r.as_slice())
        .map(|(&a, &b)| (a - b).abs())
        .sum::<T>()
        / n)
}

/// Runs `k` alternating Gibbs steps from `batch`. The positive phase keeps
/// sampled hidden states; intermediate hidden states are sampled, visible
/// reconstructions and the final hidden layer are probabilities.
pub fn cd_sample<T: Scalar>(rbm: &Rbm<T>, batch: &Matrix<T>, k: usize, rng: &mut RngStream) -> Result<CdSample<T>> {
    if k == 0 {
        return Err(Error::InvalidArgument("cd_k must be >= 1".into()));
    }
    let h0 = bernoulli_sample(&hidden_probs(rbm, batch)?, rng);
    let mut h = h0.clone();
    let mut vk = visible_probs(rbm, &h)?;
    let mut hk = hidden_probs(rbm, &vk)?;
    for _ in 1..k {
        h = bernoulli_sample(&hk, rng);
        vk = visible_probs(rbm, &h)?;
        hk = hidden_probs(rbm, &vk)?;
    }
    Ok(CdSample {
        v0: batch.clone(),
        h0,
        vk,
        hk,
    })
}

fn bernoulli_sample<T: Scalar>(p: &Matrix<T>, rng: &mut RngStream) -> Matrix<T> {
    let mut out = p.clone();
    for x in out.as_mut_slice() {
        *x = if rng.uniform() < x.to_f64_lossy() { T::one() } else { T::zero() };
    }
    out
}

/// `Δw = η(⟨v hᵀ⟩₀ − ⟨v hᵀ⟩_k)`, `Δa = η(⟨v⟩₀ − ⟨v⟩_k)`,
/// `Δb = η(⟨h⟩₀ − ⟨h⟩_k)`, each averaged over the batch.
pub fn cd_deltas<T: Scalar>(s: &CdSample<T>, learning_rate: T) -> Result<RbmDelta<T>> {
    let m = T::of(s.v0.rows().max(1) as f64);
    let scale = learning_rate / m;
    let mut weights = s.h0.t_matmul(&s.v0)?;
    weights.add_scaled(-T::one(), &s.hk.t_matmul(&s.vk)?)?;
    weights.scale(scale);
    let diff = |a: &Matrix<T>, b: &Matrix<T>| -> Vec<T> {
        a.column_sums()
            .into_iter()
            .zip(b.column_sums())
            .map(|(x, y)| scale * (x - y))
            .collect()
    };
    Ok(RbmDelta {
        weights,
        visible_bias: diff(&s.v0, &s.vk),
        hidden_bias: diff(&s.h0, &s.hk),
    })
}

/// One CD-k update: `velocity ← μ·velocity + Δ; θ ← θ + velocity`.
/// Momentum zero applies `Δ` unchanged.
pub fn rbm_cd_update<T: Scalar>(
    rbm: &Rbm<T>,
    batch: &Matrix<T>,
    cd_k: usize,
    learning_rate: T,
    momentum: T,
    velocity: &RbmDelta<T>,
    rng: &mut RngStream,
) -> Result<(Rbm<T>, RbmDelta<T>)> {
    let s = cd_sample(rbm, batch, cd_k, rng)?;
    let d = cd_deltas(&s, learning_rate)?;
    let mut v = velocity.clone();
    v.weights.scale(momentum);
    v.weights.add_scaled(T::one(), &d.weights)?;
    for (x, &dx) in v.visible_bias.iter_mut().zip(&d.visible_bias) {
        *x = momentum * *x + dx;
    }
    for (x, &dx) in v.hidden_bias.iter_mut().zip(&d.hidden_bias) {
        *x = momentum * *x + dx;
    }
    let mut next = rbm.clone();
    next.apply(&v)?;
    Ok((next, v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DbnTrainConfig {
    pub widths: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    /// CD learning rate η.
    pub learning_rate: f64,
    pub cd_k: usize,
    pub finetune: FinetuneConfig,
}

impl Default for DbnTrainConfig {
    /// Widths 120/50/20/5, 300 epochs, batch 10, momentum 0.01, η 0.001, CD-1.
    fn default() -> Self {
        Self {
            widths: vec![120, 50, 20, 5],
            epochs: 300,
            batch_size: 10,
            momentum: 0.01,
            learning_rate: 0.001,
            cd_k: 1,
            finetune: FinetuneConfig {
                epochs: 100,
                batch_size: 10,
                learning_rate: 0.2,
            },
        }
    }
}

impl DbnTrainConfig {
    /// The deeper 545/300/250/50/20/2 stack.
    pub fn large() -> Self {
        Self {
            widths: vec![545, 300, 250, 50, 20, 2],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::InvalidArgument("DBN widths must be non-empty and positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.cd_k == 0 {
            return Err(Error::InvalidArgument("epochs, batch size and cd_k must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument("need η > 0 and momentum in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Stacked RBMs with a linear regression output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dbn<T = f64> {
    pub rbms: Vec<Rbm<T>>,
    pub head: LinearHead<T>,
}

impl<T: Scalar> Dbn<T> {
    pub fn input_width(&self) -> usize {
        self.rbms.first().map_or(self.head.weights.len(), Rbm::visible_width)
    }

    /// Mean-field network view: sigmoid layers from the RBM weights and hidden
    /// biases, then the head.
    pub fn to_network(&self) -> FeedForward<T> {
        FeedForward {
            layers: self.rbms.iter().map(Rbm::as_dense).collect(),
            head: self.head.clone(),
        }
    }

    fn absorb(&mut self, net: FeedForward<T>) {
        for (rbm, layer) in self.rbms.iter_mut().zip(net.layers) {
            rbm.weights = layer.weights;
            rbm.hidden_bias = layer.bias;
        }
        self.head = net.head;
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        self.to_network().predict(x)
    }
}

/// CD-k training of one RBM over shuffled mini-batches. Losses are the
/// mean-field reconstruction error before training and after every epoch.
pub fn rbm_train<T: Scalar>(
    rbm: Rbm<T>,
    x: &Matrix<T>,
    cfg: &DbnTrainConfig,
    rng: &mut RngStream,
) -> Result<Trained<Rbm<T>>> {
    let lr = T::of(cfg.learning_rate);
    let mu = T::of(cfg.momentum);
    let mut velocity = RbmDelta::zeros_like(&rbm);
    let mut rbm = rbm;
    let mut losses = vec![reconstruction_error(&rbm, x)?.to_f64_lossy()];
    for epoch in 1..=cfg.epochs {
        let order = rng.permutation(x.rows());
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let xb = x.select_rows(chunk);
            let (next, v) = rbm_cd_update(&rbm, &xb, cfg.cd_k, lr, mu, &velocity, rng)?;
            rbm = next;
            velocity = v;
        }
        let err = reconstruction_error(&rbm, x)?;
        if !err.is_finite() {
            return Err(Error::DivergedLoss {
                epoch,
                loss: err.to_f64_lossy(),
            });
        }
        losses.push(err.to_f64_lossy());
    }
    Ok(Trained { model: rbm, losses })
}

/// Greedy layer-wise CD training; layer `k + 1` sees the hidden
/// probabilities of layer `k`. The head starts at zero.
pub fn dbn_pretrain<T: Scalar>(x: &Matrix<T>, cfg: &DbnTrainConfig, rng: &mut RngStream) -> Result<Dbn<T>> {
    cfg.validate()?;
    if x.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    let mut input = x.clone();
    let mut rbms = Vec::with_capacity(cfg.widths.len());
    for &width in &cfg.widths {
        let rbm = Rbm::init(input.cols(), width, rng);
        let trained = rbm_train(rbm, &input, cfg, rng)?;
        input = hidden_probs(&trained.model, &input)?;
        rbms.push(trained.model);
    }
    Ok(Dbn {
        rbms,
        head: LinearHead::zeros(*cfg.widths.last().expect("validated")),
    })
}

/// Backpropagation of MSE through the mean-field network and the head.
/// Returns the fine-tuned copy and its loss history.
pub fn dbn_finetune_regression<T: Scalar>(
    dbn: &Dbn<T>,
    x: &Matrix<T>,
    y: &[T],
    cfg: &FinetuneConfig,
    rng: &mut RngStream,
) -> Result<Trained<Dbn<T>>> {
    let mut net = dbn.to_network();
    let losses = net.train(x, y, &cfg.sgd(), rng)?;
    let mut out = dbn.clone();
    out.absorb(net);
    Ok(Trained {
        model: out,
        losses: losses.into_iter().map(Scalar::to_f64_lossy).collect(),
    })
}

/// Fine-tuning loss and its gradient, flattened per layer as weights then
/// hidden bias, then head weights and head bias. Visible biases do not enter
/// the regression path.
pub fn dbn_loss_and_gradients<T: Scalar>(dbn: &Dbn<T>, x: &Matrix<T>, y: &[T]) -> Result<(T, Gradients<T>)> {
    dbn.to_network().mse_and_gradients(x, y)
}

/// Exhaustive joint distribution of a small RBM.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    pub visible: usize,
    pub hidden: usize,
    pub log_partition: f64,
    /// `(v, h, P(v, h))` with states as bit vectors, `v` varying slowest.
    pub states: Vec<(Vec<u8>, Vec<u8>, f64)>,
}

fn bits(code: usize, width: usize) -> Vec<u8> {
    (0..width).map(|i| ((code >> i) & 1) as u8).collect()
}

fn as_reals<T: Scalar>(b: &[u8]) -> Vec<T> {
    b.iter().map(|&x| T::of(x as f64)).collect()
}

/// `P(v, h) = e^{−E(v,h)} / Z` over all `2^(m+n)` states, normalized via
/// log-sum-exp.
pub fn rbm_exact_distribution<T: Scalar>(rbm: &Rbm<T>) -> Result<ExactDistribution> {
    let (m, n) = (rbm.visible_width(), rbm.hidden_width());
    if m + n > ENUMERATION_LIMIT {
        return Err(Error::TooLargeToEnumerate {
            visible: m,
            hidden: n,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut states = Vec::with_capacity(1 << (m + n));
    for vc in 0..1usize << m {
        let v = bits(vc, m);
        let vr: Vec<T> = as_reals(&v);
        for hc in 0..1usize << n {
            let h = bits(hc, n);
            let e = rbm_energy(rbm, &vr, &as_reals(&h))?.to_f64_lossy();
            states.push((v.clone(), h, -e));
        }
    }
    let max = states.iter().map(|s| s.2).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = states.iter().map(|s| (s.2 - max).exp()).sum();
    let log_partition = max + sum.ln();
    for s in &mut states {
        s.2 = (s.2 - log_partition).exp();
    }
    Ok(ExactDistribution {
        visible: m,
        hidden: n,
        log_partition,
        states,
    })
}

impl ExactDistribution {
    pub fn total(&self) -> f64 {
        self.states.iter().map(|s| s.2).sum()
    }

    /// `P(h_j = 1 | v)` by marginalizing the table.
    pub fn hidden_conditional(&self, v: &[u8]) -> Vec<f64> {
        let rows: Vec<_> = self.states.iter().filter(|s| s.0 == v).collect();
        let pv: f64 = rows.iter().map(|s| s.2).sum();
        (0..self.hidden)
            .map(|j| rows.iter().filter(|s| s.1[j] == 1).map(|s| s.2).sum::<f64>() / pv)
            .collect()
    }

    /// `P(v_i = 1 | h)` by marginalizing the table.
    pub fn visible_conditional(&self, h: &[u8]) -> Vec<f64> {
        let rows: Vec<_> = self.states.iter().filter(|s| s.1 == h).collect();
        let ph: f64 = rows.iter().map(|s| s.2).sum();
        (0..self.visible)
            .map(|i| rows.iter().filter(|s| s.0[i] == 1).map(|s| s.2).sum::<f64>() / ph)
            .collect()
    }

    pub fn all_visible(&self) -> Vec<Vec<u8>> {
        (0..1usize << self.visible).map(|c| bits(c, self.visible)).collect()
    }

    pub fn all_hidden(&self) -> Vec<Vec<u8>> {
        (0..1usize << self.hidden).map(|c| bits(c, self.hidden)).collect()
    }
}
