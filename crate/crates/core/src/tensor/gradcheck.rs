use super::{Real, Tensor, TensorError};

/// Central-difference gradient of a scalar function, one coordinate at a time:
/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h`.
///
/// `f` receives constant tensors, so it can be any composition of tensor
/// operations (or plain arithmetic on `data()`).
pub fn finite_difference_grad<R, F>(mut f: F, x: &Tensor<R>, h: f64) -> Result<Tensor<R>, TensorError>
where
    R: Real,
    F: FnMut(&Tensor<R>) -> R,
{
    if !(h > 0.0) {
        return Err(TensorError::BadStep(h));
    }
    let hr = R::from_f64_lossy(h);
    let mut values = x.data().to_vec();
    let mut grad = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let orig = values[i];
        values[i] = orig + hr;
        let plus = f(&Tensor::new(values.clone(), x.shape()));
        values[i] = orig - hr;
        let minus = f(&Tensor::new(values.clone(), x.shape()));
        values[i] = orig;
        for v in [plus, minus] {
            if !v.is_finite() {
                return Err(TensorError::NonFinite { index: i, value: v.as_f64() });
            }
        }
        grad.push((plus - minus) / (hr + hr));
    }
    Ok(Tensor::new(grad, x.shape()))
}

/// `|analytic − numeric| / max(|analytic|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1e-8)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{conv2d, conv_transpose2d};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: f64 = 1e-6;
    const TOL: f64 = 1e-4;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Vec<f64> {
        (0..shape.iter().product::<usize>())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect()
    }

    /// Checks `d/dx Σ w ⊙ op(x)` for a random projection `w`.
    fn check_unary(shape: &[usize], seed: u64, op: impl Fn(&Tensor<f64>) -> Tensor<f64>) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = random(&mut rng, shape);
        let probe_shape = op(&Tensor::new(x0.clone(), shape)).shape().to_vec();
        let w = Tensor::new(random(&mut rng, &probe_shape), &probe_shape);
        let x = Tensor::param(x0, shape);
        op(&x).mul(&w).sum().backward().unwrap();
        let numeric = finite_difference_grad(|xp| op(xp).mul(&w).sum().item(), &x, H).unwrap();
        max_relative_error(&x.grad().unwrap(), numeric.data())
    }

    #[test]
    fn product_rule_example() {
        let x = Tensor::<f64>::new(vec![3.0, 5.0], &[2]);
        let g = finite_difference_grad(|t| t.data()[0] * t.data()[1], &x, 1e-6).unwrap();
        assert!((g.data()[0] - 5.0).abs() < 1e-8);
        assert!((g.data()[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn sum_has_unit_gradient() {
        let x = Tensor::<f64>::new(vec![0.3, -2.0, 7.5], &[3]);
        let g = finite_difference_grad(|t| t.data().iter().sum(), &x, 1e-6).unwrap();
        for v in g.data() {
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn non_finite_value_reports_index() {
        let x = Tensor::new(vec![1.0, 0.0], &[2]);
        let err = finite_difference_grad(|t| if t.data()[1] != 0.0 { f64::NAN } else { 0.0 }, &x, 1e-3)
            .unwrap_err();
        assert!(matches!(err, TensorError::NonFinite { index: 1, .. }));
        assert_eq!(
            finite_difference_grad(|_| 0.0, &x, 0.0).unwrap_err(),
            TensorError::BadStep(0.0)
        );
    }

    #[test]
    fn gelu_projection_matches_finite_differences() {
        assert!(check_unary(&[4, 5], 1, |x| x.gelu()) < TOL);
    }

    #[test]
    fn elementwise_primitives_pass() {
        let cases: Vec<(&str, Box<dyn Fn(&Tensor<f64>) -> Tensor<f64>>)> = vec![
            ("sigmoid", Box::new(|x| x.sigmoid())),
            ("exp", Box::new(|x| x.exp())),
            ("square", Box::new(|x| x.square())),
            ("pow", Box::new(|x| x.add_scalar(2.0).powf(2.5))),
            ("relu", Box::new(|x| x.relu())),
            ("clamp", Box::new(|x| x.clamp(-0.5, 0.5))),
            ("scale", Box::new(|x| x.scale(-1.7).add_scalar(0.3))),
            ("mul_self", Box::new(|x| x.mul(x))),
            ("div", Box::new(|x| x.div(&x.square().add_scalar(1.0)))),
            ("sub", Box::new(|x| x.sub(&x.square()))),
            ("mean", Box::new(|x| x.mean())),
            ("softmax", Box::new(|x| x.softmax())),
        ];
        for (i, (name, op)) in cases.iter().enumerate() {
            let err = check_unary(&[3, 4], 10 + i as u64, op);
            assert!(err < TOL, "{name}: {err}");
        }
    }

    #[test]
    fn shape_primitives_pass() {
        let cases: Vec<(&str, Box<dyn Fn(&Tensor<f64>) -> Tensor<f64>>)> = vec![
            ("permute", Box::new(|x| x.permute(&[2, 0, 1]).square())),
            ("reshape", Box::new(|x| x.reshape(&[6, 4]).softmax())),
            ("slice", Box::new(|x| x.slice(1, 1, 2).gelu())),
            ("concat", Box::new(|x| Tensor::concat(&[x.slice(2, 2, 2), x.square()], 2))),
            ("broadcast", Box::new(|x| x.slice(0, 0, 1).broadcast_to(&[5, 3, 4]).square())),
        ];
        for (i, (name, op)) in cases.iter().enumerate() {
            let err = check_unary(&[2, 3, 4], 30 + i as u64, op);
            assert!(err < TOL, "{name}: {err}");
        }
    }

    #[test]
    fn parameterised_primitives_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = Tensor::new(random(&mut rng, &[4, 3]), &[4, 3]);
        let b = Tensor::new(random(&mut rng, &[3]), &[3]);
        let gamma = Tensor::new(random(&mut rng, &[4]), &[4]);
        let beta = Tensor::new(random(&mut rng, &[4]), &[4]);
        let other = Tensor::new(random(&mut rng, &[2, 4, 5]), &[2, 4, 5]);
        let cases: Vec<(&str, Box<dyn Fn(&Tensor<f64>) -> Tensor<f64>>)> = vec![
            ("matmul", Box::new(move |x| x.matmul(&w).add_bias(&b))),
            ("layer_norm", Box::new(move |x| x.layer_norm(&gamma, &beta, 1e-5))),
            ("bmm", Box::new({
                let o = other.clone();
                move |x| x.reshape(&[2, 3, 4]).bmm(&o, false, false)
            })),
            ("bmm_t", Box::new(move |x| {
                let y = x.reshape(&[2, 3, 4]);
                y.bmm(&y, false, true)
            })),
            ("bmm_ta", Box::new(move |x| {
                let y = x.reshape(&[2, 3, 4]);
                y.bmm(&y, true, false)
            })),
        ];
        for (i, (name, op)) in cases.iter().enumerate() {
            let err = check_unary(&[6, 4], 50 + i as u64, op);
            assert!(err < TOL, "{name}: {err}");
        }
    }

    #[test]
    fn parameter_side_gradients_pass() {
        // gradient with respect to the second operand / affine parameters
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::new(random(&mut rng, &[5, 4]), &[5, 4]);
        let probe = Tensor::new(random(&mut rng, &[5, 4]), &[5, 4]);
        let beta = Tensor::new(random(&mut rng, &[4]), &[4]);
        let err = check_unary(&[4], 12, |g| x.layer_norm(g, &beta, 1e-5).mul(&probe));
        assert!(err < TOL, "layer_norm gamma: {err}");
        let gamma = Tensor::new(random(&mut rng, &[4]), &[4]);
        let err = check_unary(&[4], 13, |b| x.layer_norm(&gamma, b, 1e-5).mul(&probe));
        assert!(err < TOL, "layer_norm beta: {err}");
        let err = check_unary(&[4, 3], 14, |w| x.matmul(w));
        assert!(err < TOL, "matmul rhs: {err}");
        let a = Tensor::new(random(&mut rng, &[2, 3, 4]), &[2, 3, 4]);
        let err = check_unary(&[2, 5, 4], 15, |b| a.bmm(b, false, true));
        assert!(err < TOL, "bmm rhs transposed: {err}");
        let err = check_unary(&[2, 3, 5], 16, |b| a.bmm(b, true, false));
        assert!(err < TOL, "bmm rhs with lhs transposed: {err}");
    }

    #[test]
    fn convolutions_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let w3 = Tensor::new(random(&mut rng, &[3, 3, 2, 3]), &[3, 3, 2, 3]);
        let b3 = Tensor::new(random(&mut rng, &[3]), &[3]);
        let err = check_unary(&[2, 4, 4, 2], 22, |x| conv2d(x, &w3, &b3, 1, 1));
        assert!(err < TOL, "conv2d input: {err}");
        let x = Tensor::new(random(&mut rng, &[2, 4, 4, 2]), &[2, 4, 4, 2]);
        let err = check_unary(&[2, 2, 2, 3], 23, |w| conv2d(&x, w, &b3, 2, 0));
        assert!(err < TOL, "conv2d kernel: {err}");
        let err = check_unary(&[3], 24, |b| conv2d(&x, &w3, b, 1, 1));
        assert!(err < TOL, "conv2d bias: {err}");
        let wt = Tensor::new(random(&mut rng, &[2, 2, 2, 3]), &[2, 2, 2, 3]);
        let err = check_unary(&[1, 2, 3, 2], 25, |x| conv_transpose2d(x, &wt, &b3));
        assert!(err < TOL, "conv_transpose2d input: {err}");
        let xt = Tensor::new(random(&mut rng, &[1, 2, 3, 2]), &[1, 2, 3, 2]);
        let err = check_unary(&[2, 2, 2, 3], 26, |w| conv_transpose2d(&xt, w, &b3));
        assert!(err < TOL, "conv_transpose2d kernel: {err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn backward_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = random(&mut rng, &[3, 4]);
            let w = Tensor::new(random(&mut rng, &[4, 2]), &[4, 2]);
            let f = |x: &Tensor<f64>| x.matmul(&w).gelu().sum();
            let g = |x: &Tensor<f64>| x.softmax().square().mean();

            let x = Tensor::param(x0.clone(), &[3, 4]);
            f(&x).scale(a).add(&g(&x).scale(b)).backward().unwrap();
            let combined = x.grad().unwrap();

            let xf = Tensor::param(x0.clone(), &[3, 4]);
            f(&xf).backward().unwrap();
            let xg = Tensor::param(x0, &[3, 4]);
            g(&xg).backward().unwrap();
            for ((c, gf), gg) in combined.iter().zip(xf.grad().unwrap()).zip(xg.grad().unwrap()) {
                prop_assert!((c - (a * gf + b * gg)).abs() < 1e-12);
            }
        }

        #[test]
        fn reshape_permute_roundtrip(data in proptest::collection::vec(-1e6f64..1e6, 24)) {
            let x = Tensor::new(data.clone(), &[2, 3, 4]);
            let permuted = x.permute(&[1, 2, 0]).permute(&[2, 0, 1]);
            prop_assert_eq!(permuted.data(), &data[..]);
            let reshaped = x.reshape(&[4, 6]).reshape(&[2, 3, 4]);
            prop_assert_eq!(reshaped.data(), &data[..]);
        }
    }
}
