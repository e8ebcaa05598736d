use super::{numel, Real, Tensor};

fn same_shape<R: Real>(a: &Tensor<R>, b: &Tensor<R>, op: &str) {
    assert_eq!(
        a.shape(),
        b.shape(),
        "{op}: shape mismatch {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// For every output element (row-major over `out_shape`), the source offset
/// given per-axis source strides.
fn gather_index(out_shape: &[usize], src_strides: &[usize]) -> Vec<usize> {
    let n = numel(out_shape);
    let mut idx = Vec::with_capacity(n);
    let rank = out_shape.len();
    if n == 0 {
        return idx;
    }
    let mut counter = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..n {
        idx.push(offset);
        for ax in (0..rank).rev() {
            counter[ax] += 1;
            offset += src_strides[ax];
            if counter[ax] < out_shape[ax] {
                break;
            }
            offset -= src_strides[ax] * out_shape[ax];
            counter[ax] = 0;
        }
    }
    idx
}

impl<R: Real> Tensor<R> {
    fn map_unary(
        &self,
        f: impl Fn(R) -> R,
        df: impl Fn(R, R) -> R + 'static,
    ) -> Tensor<R> {
        let data = self.data().iter().map(|&x| f(x)).collect();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g, y, p| {
                let x = p[0].data();
                vec![Some(
                    g.iter()
                        .zip(x.iter().zip(y))
                        .map(|(&g, (&x, &y))| g * df(x, y))
                        .collect(),
                )]
            }),
        )
    }

    pub fn add(&self, other: &Tensor<R>) -> Tensor<R> {
        same_shape(self, other, "add");
        let data = self.data().iter().zip(other.data()).map(|(&a, &b)| a + b).collect();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            Box::new(|g, _, p| {
                vec![
                    p[0].requires_grad().then(|| g.to_vec()),
                    p[1].requires_grad().then(|| g.to_vec()),
                ]
            }),
        )
    }

    pub fn sub(&self, other: &Tensor<R>) -> Tensor<R> {
        same_shape(self, other, "sub");
        let data = self.data().iter().zip(other.data()).map(|(&a, &b)| a - b).collect();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            Box::new(|g, _, p| {
                vec![
                    p[0].requires_grad().then(|| g.to_vec()),
                    p[1].requires_grad().then(|| g.iter().map(|&v| -v).collect()),
                ]
            }),
        )
    }

    pub fn mul(&self, other: &Tensor<R>) -> Tensor<R> {
        same_shape(self, other, "mul");
        let data = self.data().iter().zip(other.data()).map(|(&a, &b)| a * b).collect();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            Box::new(|g, _, p| {
                let (a, b) = (p[0].data(), p[1].data());
                vec![
                    p[0].requires_grad()
                        .then(|| g.iter().zip(b).map(|(&g, &b)| g * b).collect()),
                    p[1].requires_grad()
                        .then(|| g.iter().zip(a).map(|(&g, &a)| g * a).collect()),
                ]
            }),
        )
    }

    pub fn div(&self, other: &Tensor<R>) -> Tensor<R> {
        same_shape(self, other, "div");
        let data = self.data().iter().zip(other.data()).map(|(&a, &b)| a / b).collect();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), other.clone()],
            Box::new(|g, y, p| {
                let b = p[1].data();
                vec![
                    p[0].requires_grad()
                        .then(|| g.iter().zip(b).map(|(&g, &b)| g / b).collect()),
                    p[1].requires_grad().then(|| {
                        g.iter()
                            .zip(y.iter().zip(b))
                            .map(|(&g, (&y, &b))| -g * y / b)
                            .collect()
                    }),
                ]
            }),
        )
    }

    pub fn scale(&self, s: R) -> Tensor<R> {
        self.map_unary(|x| x * s, move |_, _| s)
    }

    pub fn add_scalar(&self, s: R) -> Tensor<R> {
        self.map_unary(|x| x + s, |_, _| R::one())
    }

    pub fn neg(&self) -> Tensor<R> {
        self.scale(-R::one())
    }

    pub fn square(&self) -> Tensor<R> {
        let two = R::one() + R::one();
        self.map_unary(|x| x * x, move |x, _| two * x)
    }

    /// `x^p` for a constant exponent.
    pub fn powf(&self, p: R) -> Tensor<R> {
        self.map_unary(
            |x| x.powf(p),
            move |x, _| {
                if p == R::one() {
                    R::one()
                } else {
                    p * x.powf(p - R::one())
                }
            },
        )
    }

    pub fn exp(&self) -> Tensor<R> {
        self.map_unary(|x| x.exp(), |_, y| y)
    }

    pub fn sigmoid(&self) -> Tensor<R> {
        self.map_unary(
            |x| R::one() / (R::one() + (-x).exp()),
            |_, y| y * (R::one() - y),
        )
    }

    pub fn relu(&self) -> Tensor<R> {
        self.map_unary(
            |x| if x > R::zero() { x } else { R::zero() },
            |x, _| if x > R::zero() { R::one() } else { R::zero() },
        )
    }

    /// Exact Gaussian error linear unit, `x·Φ(x)`.
    pub fn gelu(&self) -> Tensor<R> {
        let half = R::from_f64_lossy(0.5);
        let inv_sqrt2 = R::from_f64_lossy(std::f64::consts::FRAC_1_SQRT_2);
        let inv_sqrt_2pi = R::from_f64_lossy(0.398_942_280_401_432_7);
        self.map_unary(
            move |x| half * x * (R::one() + (x * inv_sqrt2).erf()),
            move |x, _| {
                let cdf = half * (R::one() + (x * inv_sqrt2).erf());
                cdf + x * inv_sqrt_2pi * (-half * x * x).exp()
            },
        )
    }

    /// Values limited to `[lo, hi]`; the gradient passes where the input lies
    /// inside the closed interval.
    pub fn clamp(&self, lo: R, hi: R) -> Tensor<R> {
        assert!(lo <= hi);
        self.map_unary(
            move |x| x.max(lo).min(hi),
            move |x, _| if x >= lo && x <= hi { R::one() } else { R::zero() },
        )
    }

    pub fn sum(&self) -> Tensor<R> {
        let s = self.data().iter().copied().sum();
        let n = self.numel();
        Tensor::from_op(
            vec![s],
            vec![1],
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean(&self) -> Tensor<R> {
        let n = R::from_usize(self.numel()).unwrap();
        self.sum().scale(R::one() / n)
    }

    /// Reinterprets the data with a new shape of equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Tensor<R> {
        assert_eq!(
            numel(shape),
            self.numel(),
            "reshape {:?} -> {:?}",
            self.shape(),
            shape
        );
        Tensor::from_op(
            self.data().to_vec(),
            shape.to_vec(),
            vec![self.clone()],
            Box::new(|g, _, _| vec![Some(g.to_vec())]),
        )
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Tensor<R> {
        let rank = self.shape().len();
        assert_eq!(axes.len(), rank, "permute: need {rank} axes");
        let mut seen = vec![false; rank];
        for &a in axes {
            assert!(a < rank && !seen[a], "permute: invalid axes {axes:?}");
            seen[a] = true;
        }
        let in_strides = row_major_strides(self.shape());
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape()[a]).collect();
        let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let index = gather_index(&out_shape, &src_strides);
        let x = self.data();
        let data = index.iter().map(|&i| x[i]).collect();
        let n = self.numel();
        Tensor::from_op(
            data,
            out_shape,
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![R::zero(); n];
                for (&i, &gv) in index.iter().zip(g) {
                    gx[i] = gv;
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Expands axes of extent 1 to the given shape (same rank).
    pub fn broadcast_to(&self, shape: &[usize]) -> Tensor<R> {
        assert_eq!(shape.len(), self.shape().len(), "broadcast_to: rank mismatch");
        let in_strides = row_major_strides(self.shape());
        let src_strides: Vec<usize> = self
            .shape()
            .iter()
            .zip(shape)
            .zip(&in_strides)
            .map(|((&have, &want), &s)| {
                assert!(
                    have == want || have == 1,
                    "broadcast_to: cannot expand {:?} to {:?}",
                    self.shape(),
                    shape
                );
                if have == want {
                    s
                } else {
                    0
                }
            })
            .collect();
        let index = gather_index(shape, &src_strides);
        let x = self.data();
        let data = index.iter().map(|&i| x[i]).collect();
        let n = self.numel();
        Tensor::from_op(
            data,
            shape.to_vec(),
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![R::zero(); n];
                for (&i, &gv) in index.iter().zip(g) {
                    gx[i] = gx[i] + gv;
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Adds a bias vector along the last axis.
    pub fn add_bias(&self, bias: &Tensor<R>) -> Tensor<R> {
        let n = *self.shape().last().expect("add_bias on rank-0 tensor");
        assert_eq!(bias.shape(), [n], "add_bias: bias shape {:?}", bias.shape());
        let b = bias.data();
        let data = self
            .data()
            .chunks_exact(n)
            .flat_map(|row| row.iter().zip(b).map(|(&x, &b)| x + b))
            .collect();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), bias.clone()],
            Box::new(move |g, _, p| {
                let gb = p[1].requires_grad().then(|| {
                    let mut gb = vec![R::zero(); n];
                    for row in g.chunks_exact(n) {
                        gb.iter_mut().zip(row).for_each(|(a, &v)| *a = *a + v);
                    }
                    gb
                });
                vec![p[0].requires_grad().then(|| g.to_vec()), gb]
            }),
        )
    }

    /// `(…, k) · (k, n) -> (…, n)`.
    pub fn matmul(&self, w: &Tensor<R>) -> Tensor<R> {
        let k = *self.shape().last().expect("matmul on rank-0 tensor");
        assert_eq!(w.shape().len(), 2, "matmul: rhs must be 2-d");
        assert_eq!(w.shape()[0], k, "matmul: inner dims {:?} · {:?}", self.shape(), w.shape());
        let n = w.shape()[1];
        let m = self.numel() / k.max(1);
        let mut out = vec![R::zero(); m * n];
        R::gemm(m, k, n, self.data(), false, w.data(), false, &mut out, false);
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        Tensor::from_op(
            out,
            shape,
            vec![self.clone(), w.clone()],
            Box::new(move |g, _, p| {
                let (a, b) = (p[0].data(), p[1].data());
                let ga = p[0].requires_grad().then(|| {
                    let mut ga = vec![R::zero(); m * k];
                    R::gemm(m, n, k, g, false, b, true, &mut ga, false);
                    ga
                });
                let gb = p[1].requires_grad().then(|| {
                    let mut gb = vec![R::zero(); k * n];
                    R::gemm(k, m, n, a, true, g, false, &mut gb, false);
                    gb
                });
                vec![ga, gb]
            }),
        )
    }

    /// Batched matrix product of `(B, ·, ·)` tensors with optional
    /// transposition of the trailing two axes of either operand.
    pub fn bmm(&self, other: &Tensor<R>, trans_a: bool, trans_b: bool) -> Tensor<R> {
        let (sa, sb) = (self.shape(), other.shape());
        assert!(sa.len() == 3 && sb.len() == 3 && sa[0] == sb[0], "bmm: shapes {sa:?} {sb:?}");
        let batch = sa[0];
        let (m, k) = if trans_a { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
        let (k2, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        assert_eq!(k, k2, "bmm: inner dims {sa:?} {sb:?} (trans {trans_a} {trans_b})");
        let (a_sz, b_sz, c_sz) = (m * k, k * n, m * n);
        let mut out = vec![R::zero(); batch * c_sz];
        for i in 0..batch {
            R::gemm(
                m,
                k,
                n,
                &self.data()[i * a_sz..(i + 1) * a_sz],
                trans_a,
                &other.data()[i * b_sz..(i + 1) * b_sz],
                trans_b,
                &mut out[i * c_sz..(i + 1) * c_sz],
                false,
            );
        }
        Tensor::from_op(
            out,
            vec![batch, m, n],
            vec![self.clone(), other.clone()],
            Box::new(move |g, _, p| {
                let (a, b) = (p[0].data(), p[1].data());
                let ga = p[0].requires_grad().then(|| {
                    let mut ga = vec![R::zero(); batch * a_sz];
                    for i in 0..batch {
                        let gi = &g[i * c_sz..(i + 1) * c_sz];
                        let bi = &b[i * b_sz..(i + 1) * b_sz];
                        let dst = &mut ga[i * a_sz..(i + 1) * a_sz];
                        if trans_a {
                            // dA^T = op(B) · G^T  -> stored k×m
                            R::gemm(k, n, m, bi, trans_b, gi, true, dst, false);
                        } else {
                            // dA = G · op(B)^T
                            R::gemm(m, n, k, gi, false, bi, !trans_b, dst, false);
                        }
                    }
                    ga
                });
                let gb = p[1].requires_grad().then(|| {
                    let mut gb = vec![R::zero(); batch * b_sz];
                    for i in 0..batch {
                        let gi = &g[i * c_sz..(i + 1) * c_sz];
                        let ai = &a[i * a_sz..(i + 1) * a_sz];
                        let dst = &mut gb[i * b_sz..(i + 1) * b_sz];
                        if trans_b {
                            // dB^T = G^T · op(A)  -> stored n×k
                            R::gemm(n, m, k, gi, true, ai, trans_a, dst, false);
                        } else {
                            // dB = op(A)^T · G
                            R::gemm(k, m, n, ai, !trans_a, gi, false, dst, false);
                        }
                    }
                    gb
                });
                vec![ga, gb]
            }),
        )
    }

    /// `len` consecutive entries starting at `start` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Tensor<R> {
        let shape = self.shape();
        assert!(axis < shape.len() && start + len <= shape[axis], "slice out of range");
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let extent = shape[axis];
        let x = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            data.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let n = self.numel();
        Tensor::from_op(
            data,
            out_shape,
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let mut gx = vec![R::zero(); n];
                for o in 0..outer {
                    let base = (o * extent + start) * inner;
                    gx[base..base + len * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor<R>], axis: usize) -> Tensor<R> {
        assert!(!parts.is_empty(), "concat of nothing");
        let first = parts[0].shape();
        assert!(axis < first.len());
        for p in parts {
            assert_eq!(p.shape().len(), first.len());
            for (i, (&a, &b)) in p.shape().iter().zip(first).enumerate() {
                assert!(i == axis || a == b, "concat: shape mismatch {:?} vs {first:?}", p.shape());
            }
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let extents: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = extents.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &e) in parts.iter().zip(&extents) {
                data.extend_from_slice(&p.data()[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let mut shape = first.to_vec();
        shape[axis] = total;
        Tensor::from_op(
            data,
            shape,
            parts.to_vec(),
            Box::new(move |g, _, p| {
                let mut grads: Vec<Vec<R>> =
                    extents.iter().map(|&e| Vec::with_capacity(outer * e * inner)).collect();
                let mut off = 0;
                for _ in 0..outer {
                    for (gp, &e) in grads.iter_mut().zip(&extents) {
                        gp.extend_from_slice(&g[off..off + e * inner]);
                        off += e * inner;
                    }
                }
                grads
                    .into_iter()
                    .zip(p)
                    .map(|(g, t)| t.requires_grad().then_some(g))
                    .collect()
            }),
        )
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Tensor<R> {
        let n = *self.shape().last().expect("softmax on rank-0 tensor");
        let mut data = Vec::with_capacity(self.numel());
        for row in self.data().chunks_exact(n) {
            let max = row.iter().copied().fold(R::neg_infinity(), R::max);
            let start = data.len();
            let mut total = R::zero();
            for &v in row {
                let e = (v - max).exp();
                total = total + e;
                data.push(e);
            }
            data[start..].iter_mut().for_each(|v| *v = *v / total);
        }
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone()],
            Box::new(move |g, y, _| {
                let mut gx = Vec::with_capacity(g.len());
                for (gr, yr) in g.chunks_exact(n).zip(y.chunks_exact(n)) {
                    let dot: R = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    gx.extend(gr.iter().zip(yr).map(|(&g, &y)| y * (g - dot)));
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Layer normalisation over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&self, gamma: &Tensor<R>, beta: &Tensor<R>, eps: f64) -> Tensor<R> {
        let n = *self.shape().last().expect("layer_norm on rank-0 tensor");
        assert_eq!(gamma.shape(), [n]);
        assert_eq!(beta.shape(), [n]);
        let eps = R::from_f64_lossy(eps);
        let nr = R::from_usize(n).unwrap();
        let rows = self.numel() / n;
        let mut xhat = Vec::with_capacity(self.numel());
        let mut inv_std = Vec::with_capacity(rows);
        for row in self.data().chunks_exact(n) {
            let mean = row.iter().copied().sum::<R>() / nr;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<R>() / nr;
            let is = R::one() / (var + eps).sqrt();
            inv_std.push(is);
            xhat.extend(row.iter().map(|&v| (v - mean) * is));
        }
        let (gm, bt) = (gamma.data(), beta.data());
        let data = xhat
            .chunks_exact(n)
            .flat_map(|row| row.iter().zip(gm.iter().zip(bt)).map(|(&x, (&g, &b))| x * g + b))
            .collect();
        Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |g, _, p| {
                let gm = p[1].data();
                let gx = p[0].requires_grad().then(|| {
                    let mut gx = Vec::with_capacity(g.len());
                    for ((gr, xr), &is) in g.chunks_exact(n).zip(xhat.chunks_exact(n)).zip(&inv_std)
                    {
                        let mut mean_g = R::zero();
                        let mut mean_gx = R::zero();
                        for i in 0..n {
                            let gh = gr[i] * gm[i];
                            mean_g = mean_g + gh;
                            mean_gx = mean_gx + gh * xr[i];
                        }
                        mean_g = mean_g / nr;
                        mean_gx = mean_gx / nr;
                        for i in 0..n {
                            let gh = gr[i] * gm[i];
                            gx.push(is * (gh - mean_g - xr[i] * mean_gx));
                        }
                    }
                    gx
                });
                let (mut ggamma, mut gbeta) = (vec![R::zero(); n], vec![R::zero(); n]);
                for (gr, xr) in g.chunks_exact(n).zip(xhat.chunks_exact(n)) {
                    for i in 0..n {
                        ggamma[i] = ggamma[i] + gr[i] * xr[i];
                        gbeta[i] = gbeta[i] + gr[i];
                    }
                }
                vec![
                    gx,
                    p[1].requires_grad().then_some(ggamma),
                    p[2].requires_grad().then_some(gbeta),
                ]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f64], shape: &[usize]) -> Tensor<f64> {
        Tensor::new(data.to_vec(), shape)
    }

    #[test]
    fn permute_then_inverse_is_bit_exact() {
        let data: Vec<f64> = (0..24).map(|i| i as f64 * 0.1).collect();
        let x = t(&data, &[2, 3, 4]);
        let y = x.permute(&[2, 0, 1]);
        assert_eq!(y.shape(), [4, 2, 3]);
        // y[c, a, b] = x[a, b, c]
        assert_eq!(y.data()[1 * 6 + 1 * 3 + 2], x.data()[1 * 12 + 2 * 4 + 1]);
        let back = y.permute(&[1, 2, 0]);
        assert_eq!(back.data(), x.data());
        assert_eq!(x.reshape(&[6, 4]).reshape(&[2, 3, 4]).data(), x.data());
    }

    #[test]
    fn broadcast_expands_unit_axes() {
        let x = t(&[1.0, 2.0], &[1, 2]);
        let y = x.broadcast_to(&[3, 2]);
        assert_eq!(y.data(), [1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn slice_and_concat_roundtrip() {
        let data: Vec<f64> = (0..24).map(|i| i as f64).collect();
        let x = t(&data, &[2, 3, 4]);
        let a = x.slice(1, 0, 1);
        let b = x.slice(1, 1, 2);
        assert_eq!(a.data(), [0.0, 1.0, 2.0, 3.0, 12.0, 13.0, 14.0, 15.0]);
        let joined = Tensor::concat(&[a, b], 1);
        assert_eq!(joined.data(), x.data());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = t(&[1.0, 2.0, 3.0, -1.0, 0.0, 1000.0], &[2, 3]);
        let y = x.softmax();
        for row in y.data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((y.data()[5] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_standardises_rows() {
        let x = t(&[1.0, 2.0, 3.0, 4.0], &[1, 4]);
        let y = x.layer_norm(&t(&[1.0; 4], &[4]), &t(&[0.0; 4], &[4]), 0.0);
        let mean: f64 = y.data().iter().sum::<f64>() / 4.0;
        let var: f64 = y.data().iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gelu_known_values() {
        let y = t(&[0.0, 1.0, -1.0], &[3]).gelu();
        assert_eq!(y.data()[0], 0.0);
        assert!((y.data()[1] - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((y.data()[2] + 0.158_655_253_931_457_05).abs() < 1e-12);
    }

    #[test]
    fn bmm_matches_matmul_per_batch() {
        let a: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..12).map(|i| (i as f64).cos()).collect();
        let ab = t(&a, &[2, 2, 3]).bmm(&t(&b, &[2, 3, 2]), false, false);
        for i in 0..2 {
            let m = t(&a[i * 6..(i + 1) * 6], &[2, 3]).matmul(&t(&b[i * 6..(i + 1) * 6], &[3, 2]));
            assert_eq!(&ab.data()[i * 4..(i + 1) * 4], m.data());
        }
        // a · a^T through the transpose flag
        let x = t(&a, &[2, 2, 3]);
        let xxt = x.bmm(&x, false, true);
        let xt = x.permute(&[0, 2, 1]);
        let explicit = x.bmm(&xt, false, false);
        for (p, q) in xxt.data().iter().zip(explicit.data()) {
            assert!((p - q).abs() < 1e-14);
        }
    }
}
