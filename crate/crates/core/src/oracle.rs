//! Brute-force reference implementations used to verify the fast paths.
//!
//! Nothing here calls into `metrics`, the autoencoder loss or the RBM
//! probability code; every quantity is recomputed with plain loops over
//! the raw parameters.

use serde::{Deserialize, Serialize};

use crate::autoencoder::{ae_gradients, SparseAeLayer, SPARSITY_EPS};
use crate::dbn::{dbn_loss_and_gradients, Dbn, Rbm};
use crate::error::{Error, Result};
use crate::network::LinearHead;
use crate::numerics::{finite_diff_gradient, relative_error, Matrix, RngStream};

/// Enumeration bound for the oracle (tighter than the library's).
pub const ORACLE_ENUMERATION_LIMIT: usize = 10;

/// Step used for every finite-difference check.
pub const FD_STEP: f64 = 1e-5;

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiveMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub sde: f64,
    /// `None` when either vector is constant.
    pub pearson: Option<f64>,
}

pub fn naive_metrics(actual: &[f64], predicted: &[f64]) -> Result<NaiveMetrics> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    let m = actual.len();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    let mf = m as f64;
    let mut sq = 0.0;
    let mut ab = 0.0;
    let mut err_sum = 0.0;
    for i in 0..m {
        let e = actual[i] - predicted[i];
        sq += e * e;
        ab += e.abs();
        err_sum += e;
    }
    let err_mean = err_sum / mf;
    let mut var = 0.0;
    for i in 0..m {
        let d = actual[i] - predicted[i] - err_mean;
        var += d * d;
    }

    let mut sa = 0.0;
    let mut sp = 0.0;
    for i in 0..m {
        sa += actual[i];
        sp += predicted[i];
    }
    let (ma, mp) = (sa / mf, sp / mf);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vp = 0.0;
    for i in 0..m {
        cov += (actual[i] - ma) * (predicted[i] - mp);
        va += (actual[i] - ma) * (actual[i] - ma);
        vp += (predicted[i] - mp) * (predicted[i] - mp);
    }
    let pearson = if va == 0.0 || vp == 0.0 {
        None
    } else {
        Some(cov / (va * vp).sqrt())
    };
    Ok(NaiveMetrics {
        rmse: (sq / mf).sqrt(),
        mae: ab / mf,
        sde: (var / mf).sqrt(),
        pearson,
    })
}

/// Sparse-autoencoder objective from a flat parameter vector laid out as
/// `w_enc (hidden×input, row-major), b_enc, w_dec (input×hidden), b_dec`.
#[allow(clippy::too_many_arguments)]
pub fn naive_ae_loss(
    theta: &[f64],
    input: usize,
    hidden: usize,
    x: &[Vec<f64>],
    lambda: f64,
    beta: f64,
    p: f64,
) -> f64 {
    let w_enc = |j: usize, k: usize| theta[j * input + k];
    let off_b1 = hidden * input;
    let off_w2 = off_b1 + hidden;
    let w_dec = |k: usize, j: usize| theta[off_w2 + k * hidden + j];
    let off_b2 = off_w2 + input * hidden;

    let m = x.len();
    let mut sq = 0.0;
    let mut act_sum = vec![0.0; hidden];
    for row in x {
        let mut h = vec![0.0; hidden];
        for j in 0..hidden {
            let mut z = theta[off_b1 + j];
            for k in 0..input {
                z += w_enc(j, k) * row[k];
            }
            h[j] = logistic(z);
            act_sum[j] += h[j];
        }
        for k in 0..input {
            let mut z = theta[off_b2 + k];
            for j in 0..hidden {
                z += w_dec(k, j) * h[j];
            }
            let r = logistic(z);
            sq += (row[k] - r) * (row[k] - r);
        }
    }
    let mut w2 = 0.0;
    for v in &theta[..off_b1] {
        w2 += v * v;
    }
    for v in &theta[off_w2..off_b2] {
        w2 += v * v;
    }
    let mut kl = 0.0;
    for s in act_sum {
        let q = (s / m as f64).clamp(SPARSITY_EPS, 1.0 - SPARSITY_EPS);
        kl += p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    sq / (m * input) as f64 + lambda * 0.5 * w2 + beta * kl
}

/// Mean squared regression error of a sigmoid stack with linear head, from a
/// flat vector laid out per layer as weights (out×in, row-major) then bias,
/// followed by head weights and head bias.
pub fn naive_regression_loss(theta: &[f64], widths: &[usize], x: &[Vec<f64>], y: &[f64]) -> f64 {
    let mut total = 0.0;
    for (row, &target) in x.iter().zip(y) {
        let mut a = row.clone();
        let mut off = 0;
        for pair in widths.windows(2) {
            let (inp, out) = (pair[0], pair[1]);
            let mut next = vec![0.0; out];
            for (j, nj) in next.iter_mut().enumerate() {
                let mut z = theta[off + out * inp + j];
                for k in 0..inp {
                    z += theta[off + j * inp + k] * a[k];
                }
                *nj = logistic(z);
            }
            off += out * inp + out;
            a = next;
        }
        let last = *widths.last().unwrap();
        let mut yhat = theta[off + last];
        for j in 0..last {
            yhat += theta[off + j] * a[j];
        }
        total += (yhat - target) * (yhat - target);
    }
    total / x.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Autoencoder,
    Dbn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub kind: ModelKind,
    pub trials: usize,
    pub max_relative_error: f64,
    pub worst_config: String,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Autoencoder trials use widths ≤ 8 with 8 samples; the first three use the
/// default first-layer and deeper-layer hyperparameters and λ = β = 0.
/// DBN trials use 1–3 hidden layers of width ≤ 5, the first being 4-3-1.
pub fn check_gradients(kind: ModelKind, trials: usize, seed: u64) -> Result<GradientCheck> {
    let root = RngStream::new(seed);
    let mut worst = (0.0f64, String::new());
    for t in 0..trials {
        let mut rng = root.derive(t as u64);
        let (err, desc) = match kind {
            ModelKind::Autoencoder => ae_trial(t, &mut rng)?,
            ModelKind::Dbn => dbn_trial(t, &mut rng)?,
        };
        if !(err <= worst.0) {
            worst = (err, desc);
        }
    }
    Ok(GradientCheck {
        kind,
        trials,
        max_relative_error: worst.0,
        worst_config: worst.1,
    })
}

fn ae_trial(t: usize, rng: &mut RngStream) -> Result<(f64, String)> {
    let input = 2 + rng.below(7);
    let hidden = 2 + rng.below(7);
    let (lambda, beta, p) = match t {
        0 => (3e-5, 4.0, 0.15),
        1 => (1e-5, 4.0, 0.1),
        2 => (0.0, 0.0, 0.1),
        _ => (
            rng.uniform_range(0.0, 0.1),
            rng.uniform_range(0.0, 4.0),
            if rng.bernoulli(0.5) { 0.1 } else { 0.15 },
        ),
    };
    let layer = SparseAeLayer {
        w_enc: Matrix::from_fn(hidden, input, |_, _| rng.uniform_range(-1.0, 1.0)),
        b_enc: (0..hidden).map(|_| rng.uniform_range(-0.5, 0.5)).collect(),
        w_dec: Matrix::from_fn(input, hidden, |_, _| rng.uniform_range(-1.0, 1.0)),
        b_dec: (0..input).map(|_| rng.uniform_range(-0.5, 0.5)).collect(),
        l2: lambda,
        sparsity_weight: beta,
        sparsity_target: p,
    };
    let x = Matrix::from_fn(8, input, |_, _| rng.uniform());
    let analytic = ae_gradients(&layer, &x)?.to_flat();

    let mut theta = layer.w_enc.as_slice().to_vec();
    theta.extend_from_slice(&layer.b_enc);
    theta.extend_from_slice(layer.w_dec.as_slice());
    theta.extend_from_slice(&layer.b_dec);
    let xr = rows(&x);
    let numeric = finite_diff_gradient(
        |th: &[f64]| naive_ae_loss(th, input, hidden, &xr, lambda, beta, p),
        &theta,
        FD_STEP,
    )?;
    Ok((
        relative_error(&analytic, &numeric),
        format!("ae {input}->{hidden} λ={lambda:.3e} β={beta:.3} p={p:.3}"),
    ))
}

fn dbn_trial(t: usize, rng: &mut RngStream) -> Result<(f64, String)> {
    let widths: Vec<usize> = if t == 0 {
        vec![4, 3]
    } else {
        let depth = 1 + rng.below(3);
        (0..=depth).map(|_| 1 + rng.below(5)).collect()
    };
    let rbms: Vec<Rbm> = widths
        .windows(2)
        .map(|w| Rbm {
            weights: Matrix::from_fn(w[1], w[0], |_, _| rng.uniform_range(-1.0, 1.0)),
            visible_bias: (0..w[0]).map(|_| rng.uniform_range(-0.5, 0.5)).collect(),
            hidden_bias: (0..w[1]).map(|_| rng.uniform_range(-0.5, 0.5)).collect(),
        })
        .collect();
    let top = *widths.last().unwrap();
    let dbn = Dbn {
        rbms,
        head: LinearHead {
            weights: (0..top).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
            bias: rng.uniform_range(-0.5, 0.5),
        },
    };
    let x = Matrix::from_fn(6, widths[0], |_, _| rng.uniform());
    let y: Vec<f64> = (0..6).map(|_| rng.uniform()).collect();
    let analytic = dbn_loss_and_gradients(&dbn, &x, &y)?.1.to_flat();

    let mut theta = Vec::new();
    for r in &dbn.rbms {
        theta.extend_from_slice(r.weights.as_slice());
        theta.extend_from_slice(&r.hidden_bias);
    }
    theta.extend_from_slice(&dbn.head.weights);
    theta.push(dbn.head.bias);
    let xr = rows(&x);
    let numeric = finite_diff_gradient(|th: &[f64]| naive_regression_loss(th, &widths, &xr, &y), &theta, FD_STEP)?;
    let shape: Vec<String> = widths.iter().map(usize::to_string).collect();
    Ok((relative_error(&analytic, &numeric), format!("dbn {}-1", shape.join("-"))))
}

/// Exact quantities of a tiny RBM obtained by listing every joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmEnumeration {
    /// `Z` summed over all `(v, h)`.
    pub partition: f64,
    /// `Z` as `Σ_v e^{−F(v)}` with the free energy summed over `h` separately.
    pub partition_free_energy: f64,
    /// Sum of all joint probabilities.
    pub total_probability: f64,
    /// `P(h_j = 1 | v)` indexed by the visible state code (bit `i` = `v_i`).
    pub hidden_conditionals: Vec<Vec<f64>>,
    /// `P(v_i = 1 | h)` indexed by the hidden state code.
    pub visible_conditionals: Vec<Vec<f64>>,
    pub visible_marginals: Vec<f64>,
    pub hidden_marginals: Vec<f64>,
}

fn bit(code: usize, i: usize) -> f64 {
    ((code >> i) & 1) as f64
}

fn naive_energy(rbm: &Rbm, vc: usize, hc: usize) -> f64 {
    let (m, n) = (rbm.visible_bias.len(), rbm.hidden_bias.len());
    let mut e = 0.0;
    for i in 0..m {
        e -= rbm.visible_bias[i] * bit(vc, i);
    }
    for j in 0..n {
        e -= rbm.hidden_bias[j] * bit(hc, j);
        for i in 0..m {
            e -= rbm.weights.get(j, i) * bit(vc, i) * bit(hc, j);
        }
    }
    e
}

/// State weights are scaled by `e^{−E_min}` before summing; the reported
/// partition functions are unscaled.
pub fn enumerate_rbm(rbm: &Rbm) -> Result<RbmEnumeration> {
    let (m, n) = (rbm.visible_bias.len(), rbm.hidden_bias.len());
    if m + n > ORACLE_ENUMERATION_LIMIT {
        return Err(Error::TooLargeToEnumerate {
            visible: m,
            hidden: n,
            limit: ORACLE_ENUMERATION_LIMIT,
        });
    }
    let (nv, nh) = (1usize << m, 1usize << n);
    let mut energy = vec![vec![0.0; nh]; nv];
    let mut e_min = f64::INFINITY;
    for (vc, row) in energy.iter_mut().enumerate() {
        for (hc, e) in row.iter_mut().enumerate() {
            *e = naive_energy(rbm, vc, hc);
            e_min = e_min.min(*e);
        }
    }
    let weight: Vec<Vec<f64>> = energy
        .iter()
        .map(|row| row.iter().map(|e| (e_min - e).exp()).collect())
        .collect();

    // h-inner order
    let mut z = 0.0;
    for row in &weight {
        for w in row {
            z += w;
        }
    }
    // free energy: F(v) = −a·v − Σ_j ln(1 + e^{b_j + Σ_i w_ji v_i})
    let mut z_free = 0.0;
    for vc in 0..nv {
        let mut f = 0.0;
        for i in 0..m {
            f -= rbm.visible_bias[i] * bit(vc, i);
        }
        for j in 0..n {
            let mut s = rbm.hidden_bias[j];
            for i in 0..m {
                s += rbm.weights.get(j, i) * bit(vc, i);
            }
            f -= (1.0 + s.exp()).ln();
        }
        z_free += (e_min - f).exp();
    }

    let prob: Vec<Vec<f64>> = weight
        .iter()
        .map(|row| row.iter().map(|w| w / z).collect())
        .collect();
    let mut total = 0.0;
    for hc in 0..nh {
        for row in &prob {
            total += row[hc];
        }
    }

    let hidden_conditionals = (0..nv)
        .map(|vc| {
            let pv: f64 = prob[vc].iter().sum();
            (0..n)
                .map(|j| (0..nh).filter(|&hc| bit(hc, j) == 1.0).map(|hc| prob[vc][hc]).sum::<f64>() / pv)
                .collect()
        })
        .collect();
    let visible_conditionals = (0..nh)
        .map(|hc| {
            let ph: f64 = (0..nv).map(|vc| prob[vc][hc]).sum();
            (0..m)
                .map(|i| (0..nv).filter(|&vc| bit(vc, i) == 1.0).map(|vc| prob[vc][hc]).sum::<f64>() / ph)
                .collect()
        })
        .collect();
    let visible_marginals = (0..m)
        .map(|i| (0..nv).filter(|&vc| bit(vc, i) == 1.0).map(|vc| prob[vc].iter().sum::<f64>()).sum())
        .collect();
    let hidden_marginals = (0..n)
        .map(|j| {
            (0..nh)
                .filter(|&hc| bit(hc, j) == 1.0)
                .map(|hc| (0..nv).map(|vc| prob[vc][hc]).sum::<f64>())
                .sum()
        })
        .collect();

    let scale = (-e_min).exp();
    Ok(RbmEnumeration {
        partition: z * scale,
        partition_free_energy: z_free * scale,
        total_probability: total,
        hidden_conditionals,
        visible_conditionals,
        visible_marginals,
        hidden_marginals,
    })
}

/// Outcome of one named verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Worst-case discrepancy between the closed-form conditionals and
/// enumeration over `count` random RBMs with `m + n ≤ 10`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbmSweep {
    pub count: usize,
    pub max_conditional_error: f64,
    pub max_normalization_error: f64,
}

pub fn rbm_sweep(count: usize, seed: u64) -> Result<RbmSweep> {
    use crate::dbn::{rbm_hidden_prob, rbm_visible_prob};
    let root = RngStream::new(seed);
    let mut cond = 0.0f64;
    let mut norm = 0.0f64;
    for c in 0..count {
        let mut rng = root.derive(c as u64);
        let m = 1 + rng.below(8);
        let n = 1 + rng.below(ORACLE_ENUMERATION_LIMIT - m);
        let rbm = Rbm {
            weights: Matrix::from_fn(n, m, |_, _| rng.uniform_range(-2.0, 2.0)),
            visible_bias: (0..m).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
            hidden_bias: (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
        };
        let e = enumerate_rbm(&rbm)?;
        norm = norm.max((e.total_probability - 1.0).abs());
        for (vc, want) in e.hidden_conditionals.iter().enumerate() {
            let v: Vec<f64> = (0..m).map(|i| bit(vc, i)).collect();
            let got = rbm_hidden_prob(&rbm, &v)?;
            for (a, b) in got.iter().zip(want) {
                cond = cond.max((a - b).abs());
            }
        }
        for (hc, want) in e.visible_conditionals.iter().enumerate() {
            let h: Vec<f64> = (0..n).map(|j| bit(hc, j)).collect();
            let got = rbm_visible_prob(&rbm, &h)?;
            for (a, b) in got.iter().zip(want) {
                cond = cond.max((a - b).abs());
            }
        }
    }
    Ok(RbmSweep {
        count,
        max_conditional_error: cond,
        max_normalization_error: norm,
    })
}

/// Largest absolute disagreement between [`crate::metrics`] and
/// [`naive_metrics`] over `pairs` random vector pairs, and the largest
/// violation of `rmse² = sde² + mean(error)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSweep {
    pub pairs: usize,
    pub max_difference: f64,
    pub max_decomposition_error: f64,
}

pub fn metric_sweep(pairs: usize, seed: u64) -> Result<MetricSweep> {
    let root = RngStream::new(seed);
    let mut diff = 0.0f64;
    let mut decomp = 0.0f64;
    for k in 0..pairs {
        let mut rng = root.derive(k as u64);
        let n = 2 + rng.below(200);
        let a: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let fast = crate::metrics::evaluate(&a, &p)?;
        let slow = naive_metrics(&a, &p)?;
        diff = diff
            .max((fast.rmse - slow.rmse).abs())
            .max((fast.mae - slow.mae).abs())
            .max((fast.sde - slow.sde).abs());
        match (fast.pearson, slow.pearson) {
            (Some(x), Some(y)) => diff = diff.max((x - y).abs()),
            (None, None) => {}
            _ => diff = f64::INFINITY,
        }
        let me: f64 = a.iter().zip(&p).map(|(x, y)| x - y).sum::<f64>() / n as f64;
        decomp = decomp.max((fast.rmse * fast.rmse - fast.sde * fast.sde - me * me).abs());
    }
    Ok(MetricSweep {
        pairs,
        max_difference: diff,
        max_decomposition_error: decomp,
    })
}

/// Gradient, enumeration and metric checks runnable without data.
pub fn verify_all(seed: u64) -> Result<Vec<Check>> {
    let ae = check_gradients(ModelKind::Autoencoder, 20, seed)?;
    let dbn = check_gradients(ModelKind::Dbn, 10, seed)?;
    let rbm = rbm_sweep(50, seed)?;
    let met = metric_sweep(1000, seed)?;
    Ok(vec![
        Check {
            name: "gradients".into(),
            passed: ae.max_relative_error < 1e-5 && dbn.max_relative_error < 1e-5,
            detail: format!(
                "autoencoder max rel err {:.3e} ({}), dbn max rel err {:.3e} ({})",
                ae.max_relative_error, ae.worst_config, dbn.max_relative_error, dbn.worst_config
            ),
        },
        Check {
            name: "rbm_enumeration".into(),
            passed: rbm.max_conditional_error < 1e-12 && rbm.max_normalization_error < 1e-12,
            detail: format!(
                "{} rbms, conditional err {:.3e}, normalization err {:.3e}",
                rbm.count, rbm.max_conditional_error, rbm.max_normalization_error
            ),
        },
        Check {
            name: "metric_oracle".into(),
            passed: met.max_difference < 1e-12 && met.max_decomposition_error < 1e-12,
            detail: format!(
                "{} pairs, max diff {:.3e}, decomposition err {:.3e}",
                met.pairs, met.max_difference, met.max_decomposition_error
            ),
        },
    ])
}
