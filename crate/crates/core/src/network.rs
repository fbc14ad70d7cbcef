//! Feed-forward regression network shared by the stacked-autoencoder
//! base-learner and the DBN meta-learner: dense layers with sigmoid (or
//! identity) activations followed by a single linear output, trained by
//! mini-batch backpropagation on mean squared error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, sigmoid, Matrix, RngStream, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Identity,
}

/// `out = act(in · Wᵀ + b)` with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dense<T = f64> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn input_width(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_width(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut z = x.matmul_t(&self.weights)?;
        z.add_row(&self.bias)?;
        if self.activation == Activation::Sigmoid {
            z.map_inplace(sigmoid);
        }
        Ok(z)
    }
}

/// Scalar linear output `y = h · w + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LinearHead<T = f64> {
    pub weights: Vec<T>,
    pub bias: T,
}

impl<T: Scalar> LinearHead<T> {
    pub fn zeros(width: usize) -> Self {
        Self {
            weights: vec![T::zero(); width],
            bias: T::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeedForward<T = f64> {
    pub layers: Vec<Dense<T>>,
    pub head: LinearHead<T>,
}

/// Gradient (or velocity) with the same layout as a [`FeedForward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<(Matrix<T>, Vec<T>)>,
    pub head_weights: Vec<T>,
    pub head_bias: T,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &FeedForward<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| {
                    (
                        Matrix::zeros(l.weights.rows(), l.weights.cols()),
                        vec![T::zero(); l.bias.len()],
                    )
                })
                .collect(),
            head_weights: vec![T::zero(); net.head.weights.len()],
            head_bias: T::zero(),
        }
    }

    /// Flattened in parameter order: per layer weights then bias, then head.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out.extend_from_slice(&self.head_weights);
        out.push(self.head_bias);
        out
    }
}

/// Options for [`FeedForward::train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

/// Supervised backpropagation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl FinetuneConfig {
    pub(crate) fn sgd(&self) -> SgdOptions {
        SgdOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: 0.0,
        }
    }

    pub fn with_epochs(&self, epochs: usize) -> Self {
        Self {
            epochs,
            ..self.clone()
        }
    }
}

/// Abort when the loss is non-finite or grows beyond this factor of its start.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

impl<T: Scalar> FeedForward<T> {
    pub fn input_width(&self) -> usize {
        self.layers
            .first()
            .map_or(self.head.weights.len(), Dense::input_width)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.rows() * l.weights.cols() + l.bias.len())
            .sum::<usize>()
            + self.head.weights.len()
            + 1
    }

    fn check_width(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.input_width(),
                actual: x.cols(),
            });
        }
        Ok(())
    }

    /// Activations of every layer, input first.
    fn trace(&self, x: &Matrix<T>) -> Result<Vec<Matrix<T>>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(acts.last().expect("non-empty"))?;
            acts.push(next);
        }
        Ok(acts)
    }

    fn head_output(&self, h: &Matrix<T>) -> Vec<T> {
        (0..h.rows())
            .map(|i| dot(h.row(i), &self.head.weights) + self.head.bias)
            .collect()
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        self.check_width(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        Ok(self.head_output(&h))
    }

    /// `(1/m) Σ (ŷ − y)²`
    pub fn mse(&self, x: &Matrix<T>, y: &[T]) -> Result<T> {
        let pred = self.predict(x)?;
        check_targets(x, y)?;
        let m = T::of(y.len() as f64);
        Ok(pred.iter().zip(y).map(|(&p, &t)| (p - t) * (p - t)).sum::<T>() / m)
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn mse_and_gradients(&self, x: &Matrix<T>, y: &[T]) -> Result<(T, Gradients<T>)> {
        self.check_width(x)?;
        check_targets(x, y)?;
        let acts = self.trace(x)?;
        let top = acts.last().expect("non-empty");
        let pred = self.head_output(top);
        let m = T::of(y.len() as f64);
        let two_over_m = T::of(2.0) / m;

        let mut loss = T::zero();
        let d_out: Vec<T> = pred
            .iter()
            .zip(y)
            .map(|(&p, &t)| {
                loss += (p - t) * (p - t);
                two_over_m * (p - t)
            })
            .collect();
        loss /= m;

        let head_weights = top.vec_mul(&d_out)?;
        let head_bias: T = d_out.iter().copied().sum();

        // dL/d(activation of the top layer)
        let mut delta = Matrix::from_fn(top.rows(), top.cols(), |i, j| {
            d_out[i] * self.head.weights[j]
        });
        let mut layer_grads = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let out = &acts[l + 1];
            if layer.activation == Activation::Sigmoid {
                for (d, &a) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *d *= a * (T::one() - a);
                }
            }
            let gw = delta.t_matmul(&acts[l])?;
            let gb = delta.column_sums();
            if l > 0 {
                delta = delta.matmul(&layer.weights)?;
            }
            layer_grads.push((gw, gb));
        }
        layer_grads.reverse();
        Ok((
            loss,
            Gradients {
                layers: layer_grads,
                head_weights,
                head_bias,
            },
        ))
    }

    /// `velocity = momentum·velocity − lr·grad; θ += velocity`. With zero
    /// momentum this is plain `θ −= lr·grad`.
    pub fn step(&mut self, grads: &Gradients<T>, velocity: &mut Gradients<T>, lr: T, momentum: T) {
        for ((layer, (gw, gb)), (vw, vb)) in self
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(velocity.layers.iter_mut())
        {
            update(layer.weights.as_mut_slice(), gw.as_slice(), vw.as_mut_slice(), lr, momentum);
            update(&mut layer.bias, gb, vb, lr, momentum);
        }
        update(
            &mut self.head.weights,
            &grads.head_weights,
            &mut velocity.head_weights,
            lr,
            momentum,
        );
        let v = momentum * velocity.head_bias - lr * grads.head_bias;
        velocity.head_bias = v;
        self.head.bias += v;
    }

    /// Mini-batch SGD over shuffled rows. Returns the full-data MSE before
    /// training and after every epoch (`epochs + 1` entries).
    pub fn train(
        &mut self,
        x: &Matrix<T>,
        y: &[T],
        opts: &SgdOptions,
        rng: &mut RngStream,
    ) -> Result<Vec<T>> {
        self.check_width(x)?;
        check_targets(x, y)?;
        if x.rows() == 0 {
            return Err(Error::EmptyInput);
        }
        let batch = opts.batch_size.max(1);
        let lr = T::of(opts.learning_rate);
        let momentum = T::of(opts.momentum);
        let mut velocity = Gradients::zeros_like(self);
        let initial = self.mse(x, y)?;
        let mut history = vec![initial];
        let limit = initial.max(T::min_positive_value()) * T::of(DIVERGENCE_FACTOR);

        for epoch in 1..=opts.epochs {
            let order = rng.permutation(x.rows());
            for chunk in order.chunks(batch) {
                let xb = x.select_rows(chunk);
                let yb: Vec<T> = chunk.iter().map(|&i| y[i]).collect();
                let (_, g) = self.mse_and_gradients(&xb, &yb)?;
                self.step(&g, &mut velocity, lr, momentum);
            }
            let loss = self.mse(x, y)?;
            if !loss.is_finite() || loss > limit {
                return Err(Error::DivergedLoss {
                    epoch,
                    loss: loss.to_f64_lossy(),
                });
            }
            history.push(loss);
        }
        Ok(history)
    }
}

fn update<T: Scalar>(param: &mut [T], grad: &[T], vel: &mut [T], lr: T, momentum: T) {
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(vel.iter_mut()) {
        *v = momentum * *v - lr * g;
        *p += *v;
    }
}

fn check_targets<T: Scalar>(x: &Matrix<T>, y: &[T]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    Ok(())
}
