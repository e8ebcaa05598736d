//! Channel-last 2-d convolutions built from a differentiable `im2col`
//! gather and a matrix product.

use super::{Real, Tensor};

#[derive(Clone, Copy)]
struct Geometry {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new(shape: &[usize], k: usize, stride: usize, pad: usize) -> Self {
        assert_eq!(shape.len(), 4, "conv input must be (N, H, W, C), got {shape:?}");
        let (n, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
        assert!(stride > 0 && k > 0);
        assert!(h + 2 * pad >= k && w + 2 * pad >= k, "kernel {k} larger than padded input {shape:?}");
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        Geometry { n, h, w, c, k, stride, pad, ho, wo }
    }

    fn cols(&self) -> usize {
        self.k * self.k * self.c
    }

    /// Calls `f(col_offset, src_offset)` for every in-bounds `C`-wide run.
    fn for_each_run(&self, mut f: impl FnMut(usize, usize)) {
        let g = *self;
        let cols = g.cols();
        for n in 0..g.n {
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let row = (n * g.ho + oy) * g.wo + ox;
                    for ky in 0..g.k {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for kx in 0..g.k {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix < 0 || ix >= g.w as isize {
                                continue;
                            }
                            let dst = row * cols + (ky * g.k + kx) * g.c;
                            let src = ((n * g.h + iy as usize) * g.w + ix as usize) * g.c;
                            f(dst, src);
                        }
                    }
                }
            }
        }
    }
}

fn im2col<R: Real>(x: &Tensor<R>, k: usize, stride: usize, pad: usize) -> Tensor<R> {
    let g = Geometry::new(x.shape(), k, stride, pad);
    let rows = g.n * g.ho * g.wo;
    let cols = g.cols();
    let mut data = vec![R::zero(); rows * cols];
    let src = x.data();
    g.for_each_run(|d, s| data[d..d + g.c].copy_from_slice(&src[s..s + g.c]));
    let n_in = x.numel();
    Tensor::from_op(
        data,
        vec![rows, cols],
        vec![x.clone()],
        Box::new(move |grad, _, _| {
            let mut gx = vec![R::zero(); n_in];
            g.for_each_run(|d, s| {
                for i in 0..g.c {
                    gx[s + i] = gx[s + i] + grad[d + i];
                }
            });
            vec![Some(gx)]
        }),
    )
}

/// 2-d convolution of `(N, H, W, Cin)` with a `(k, k, Cin, Cout)` kernel,
/// symmetric zero padding `pad` and the given stride.
pub fn conv2d<R: Real>(
    x: &Tensor<R>,
    weight: &Tensor<R>,
    bias: &Tensor<R>,
    stride: usize,
    pad: usize,
) -> Tensor<R> {
    let ws = weight.shape();
    assert!(ws.len() == 4 && ws[0] == ws[1], "conv2d kernel must be (k, k, Cin, Cout), got {ws:?}");
    let (k, cin, cout) = (ws[0], ws[2], ws[3]);
    assert_eq!(x.shape().get(3), Some(&cin), "conv2d: input channels {:?} vs kernel {ws:?}", x.shape());
    let g = Geometry::new(x.shape(), k, stride, pad);
    im2col(x, k, stride, pad)
        .matmul(&weight.reshape(&[k * k * cin, cout]))
        .add_bias(bias)
        .reshape(&[g.n, g.ho, g.wo, cout])
}

/// Transposed convolution whose kernel equals its stride, mapping
/// `(N, H, W, Cin)` to `(N, H·P, W·P, Cout)` with a `(Cin, P, P, Cout)` kernel.
pub fn conv_transpose2d<R: Real>(x: &Tensor<R>, weight: &Tensor<R>, bias: &Tensor<R>) -> Tensor<R> {
    let ws = weight.shape();
    assert!(ws.len() == 4 && ws[1] == ws[2], "conv_transpose2d kernel must be (Cin, P, P, Cout), got {ws:?}");
    let (cin, p, cout) = (ws[0], ws[1], ws[3]);
    let xs = x.shape();
    assert!(xs.len() == 4 && xs[3] == cin, "conv_transpose2d: input {xs:?} vs kernel {ws:?}");
    let (n, h, w) = (xs[0], xs[1], xs[2]);
    x.matmul(&weight.reshape(&[cin, p * p * cout]))
        .reshape(&[n, h, w, p, p, cout])
        .permute(&[0, 1, 3, 2, 4, 5])
        .reshape(&[n, h * p, w * p, cout])
        .add_bias(bias)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct-loop convolution used as an independent reference.
    fn conv_ref(x: &[f64], xs: [usize; 4], w: &[f64], k: usize, cout: usize, stride: usize, pad: usize) -> Vec<f64> {
        let [n, h, wd, c] = xs;
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let mut out = vec![0.0; n * ho * wo * cout];
        for b in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    for co in 0..cout {
                        let mut acc = 0.0;
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                for ci in 0..c {
                                    acc += x[((b * h + iy as usize) * wd + ix as usize) * c + ci]
                                        * w[((ky * k + kx) * c + ci) * cout + co];
                                }
                            }
                        }
                        out[((b * ho + oy) * wo + ox) * cout + co] = acc;
                    }
                }
            }
        }
        out
    }

    fn seq(n: usize, f: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + 1.0) * f).sin()).collect()
    }

    #[test]
    fn conv2d_matches_direct_loops() {
        for &(k, stride, pad) in &[(3, 1, 1), (2, 2, 0), (4, 4, 0), (3, 2, 1)] {
            let xs = [2, 8, 8, 3];
            let x = seq(2 * 8 * 8 * 3, 0.7);
            let w = seq(k * k * 3 * 5, 0.3);
            let out = conv2d(
                &Tensor::new(x.clone(), &xs),
                &Tensor::new(w.clone(), &[k, k, 3, 5]),
                &Tensor::zeros(&[5]),
                stride,
                pad,
            );
            let want = conv_ref(&x, xs, &w, k, 5, stride, pad);
            assert_eq!(out.numel(), want.len());
            for (a, b) in out.data().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "k={k} s={stride} p={pad}");
            }
        }
    }

    #[test]
    fn conv_transpose_scatters_each_token_to_its_patch() {
        // one input pixel, one channel: output patch equals the kernel slice
        let w = seq(2 * 2 * 2, 0.9);
        let x = Tensor::new(vec![2.0], &[1, 1, 1, 1]);
        let y = conv_transpose2d(&x, &Tensor::new(w.clone(), &[1, 2, 2, 2]), &Tensor::zeros(&[2]));
        assert_eq!(y.shape(), [1, 2, 2, 2]);
        for (a, b) in y.data().iter().zip(&w) {
            assert!((a - 2.0 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn conv_transpose_output_shape() {
        let x = Tensor::<f64>::zeros(&[3, 4, 5, 6]);
        let y = conv_transpose2d(&x, &Tensor::zeros(&[6, 8, 8, 2]), &Tensor::zeros(&[2]));
        assert_eq!(y.shape(), [3, 32, 40, 2]);
    }
}
