use crate::tensor::{Real, Tensor};

/// Base state, estimated time derivatives and the radius within which the
/// expansion is trusted. Fields are `(H, W, D)`, derivative `k` in field
/// units per time unitᵏ.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorJet {
    pub base: Vec<f64>,
    pub derivs: Vec<Vec<f64>>,
    /// `None` for the fixed-step variant, which has no radius head.
    pub radius: Option<f64>,
}

impl TaylorJet {
    pub fn order(&self) -> usize {
        self.derivs.len()
    }

    /// `u(0) + Σₖ u⁽ᵏ⁾(0)·tᵏ/k!`. Defined for any `t`; callers keep
    /// `t ≤ radius` for trusted predictions.
    pub fn evaluate(&self, t: f64) -> Vec<f64> {
        let mut out = self.base.clone();
        let mut coeff = 1.0;
        for (k, d) in self.derivs.iter().enumerate() {
            coeff *= t / (k + 1) as f64;
            if coeff == 0.0 {
                break;
            }
            out.iter_mut().zip(d).for_each(|(o, &v)| *o += coeff * v);
        }
        out
    }
}

/// Differentiable counterpart of [`TaylorJet`] produced during training.
#[derive(Debug, Clone)]
pub struct JetGraph<R: Real> {
    pub base: Tensor<R>,
    pub derivs: Vec<Tensor<R>>,
    pub radius: Option<Tensor<R>>,
}

impl<R: Real> JetGraph<R> {
    pub fn evaluate(&self, t: f64) -> Tensor<R> {
        let mut out = self.base.clone();
        let mut coeff = 1.0;
        for (k, d) in self.derivs.iter().enumerate() {
            coeff *= t / (k + 1) as f64;
            out = out.add(&d.scale(R::from_f64_lossy(coeff)));
        }
        out
    }

    pub fn to_jet(&self) -> TaylorJet {
        TaylorJet {
            base: self.base.to_f64_vec(),
            derivs: self.derivs.iter().map(Tensor::to_f64_vec).collect(),
            radius: self.radius.as_ref().map(|r| r.item().as_f64()),
        }
    }
}

/// Penalty on small radii: `(1 + ε − r)^m` for `r ≤ 1 + ε`, else 0.
pub fn regularization_loss(radius: f64, eps: f64, m: f64) -> f64 {
    if radius <= 1.0 + eps {
        (1.0 + eps - radius).powf(m)
    } else {
        0.0
    }
}

/// Graph form of [`regularization_loss`].
pub fn regularization<R: Real>(radius: &Tensor<R>, eps: f64, m: f64) -> Tensor<R> {
    radius
        .neg()
        .add_scalar(R::from_f64_lossy(1.0 + eps))
        .relu()
        .powf(R::from_f64_lossy(m))
}
