//! Dense linear algebra, seeded randomness, activations and a
//! finite-difference gradient oracle.

mod matrix;
mod rng;
mod scalar;

pub use matrix::Matrix;
pub(crate) use matrix::dot;
pub use rng::RngStream;
pub use scalar::Scalar;

use crate::error::{Error, Result};

/// Logistic function `1 / (1 + e^{-x})`. Saturates to 0 or 1, never NaN for
/// finite input.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Glorot-style uniform initialization: entries in `[-r, r]` with
/// `r = sqrt(6 / (rows + cols))`.
pub fn init_weights<T: Scalar>(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix<T> {
    assert!(rows >= 1 && cols >= 1, "init_weights needs a non-empty shape");
    let r = init_radius(rows, cols);
    Matrix::from_fn(rows, cols, |_, _| T::of(rng.uniform_range(-r, r)))
}

pub fn init_radius(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// Central-difference gradient `(f(θ + h e_i) − f(θ − h e_i)) / 2h`.
pub fn finite_diff_gradient<T, F>(mut f: F, theta: &[T], h: T) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    if !(h > T::zero()) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let mut probe = theta.to_vec();
    let two_h = h + h;
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        let up = f(&probe);
        probe[i] = theta[i] - h;
        let down = f(&probe);
        probe[i] = theta[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite("finite_diff_gradient objective"));
        }
        grad.push((up - down) / two_h);
    }
    Ok(grad)
}

/// Norm-wise relative error `‖a − b‖ / (‖a‖ + ‖b‖)`, zero when both vanish.
pub fn relative_error<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len());
    let diff: T = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    let den = dot(a, a).sqrt() + dot(b, b).sqrt();
    if den == T::zero() {
        T::zero()
    } else {
        diff.sqrt() / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_reference_points() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        let x = 3.7f64;
        assert!((sigmoid(x) - (1.0 - sigmoid(-x))).abs() < 1e-15);
        assert!(sigmoid(50.0f64) >= 1.0 - 1e-20);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert_eq!(sigmoid(0.0f32), 0.5);
    }

    #[test]
    fn init_is_deterministic() {
        let a: Matrix = init_weights(3, 3, &mut RngStream::new(7));
        let b: Matrix = init_weights(3, 3, &mut RngStream::new(7));
        assert_eq!(a, b);
        let bits_a: Vec<u64> = a.as_slice().iter().map(|x| x.to_bits()).collect();
        let bits_b: Vec<u64> = b.as_slice().iter().map(|x| x.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }

    #[test]
    fn init_respects_radius() {
        let r = (6.0f64 / 200.0).sqrt();
        assert!((r - 0.17320508).abs() < 1e-8);
        let w: Matrix = init_weights(100, 100, &mut RngStream::new(1));
        assert!(w.as_slice().iter().all(|x| x.abs() <= r));

        let one: Matrix = init_weights(1, 1, &mut RngStream::new(2));
        assert!(one.get(0, 0).abs() <= 3.0f64.sqrt());
    }

    #[test]
    fn finite_diff_reference_functions() {
        let g = finite_diff_gradient(|t: &[f64]| dot(t, t), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);

        let g = finite_diff_gradient(|_: &[f64]| 3.0, &[1.0, -2.0, 5.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0; 3]);

        let g = finite_diff_gradient(|t: &[f64]| t.iter().sum(), &[0.3, -7.0, 12.5], 1e-5).unwrap();
        assert!(g.iter().all(|x| (x - 1.0).abs() < 1e-9));
    }

    #[test]
    fn finite_diff_reports_non_finite() {
        let r = finite_diff_gradient(|t: &[f64]| 1.0 / (t[0] - 1e-6), &[0.0], 1e-6);
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert!(finite_diff_gradient(|_: &[f64]| 0.0, &[0.0], 0.0).is_err());
    }

    proptest! {
        // Cubic polynomial with random coefficients: analytic gradient known.
        #[test]
        fn finite_diff_matches_polynomial_gradient(
            c in prop::collection::vec(-3.0f64..3.0, 3),
            x in prop::collection::vec(-2.0f64..2.0, 3),
        ) {
            let f = |t: &[f64]| c[0] * t[0].powi(3) + c[1] * t[0] * t[1] + c[2] * t[2].powi(2) + t[1];
            let analytic = [
                3.0 * c[0] * x[0] * x[0] + c[1] * x[1],
                c[1] * x[0] + 1.0,
                2.0 * c[2] * x[2],
            ];
            let numeric = finite_diff_gradient(f, &x, 1e-5).unwrap();
            for (a, n) in analytic.iter().zip(&numeric) {
                prop_assert!((a - n).abs() <= 1e-6 * a.abs().max(1.0));
            }
        }
    }
}
