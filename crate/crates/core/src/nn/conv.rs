use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::{gemm, MatRef};
use super::Tensor;
use crate::error::{ensure, Result};

fn uniform_init(rng: &mut impl Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let bound = (1.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Gradients produced by a layer's backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Valid 1-D convolution in correlation orientation:
/// `y[m][i] = b[m] + Σ_c Σ_k w[m][c][k] · x[c][i·stride + k]`.
///
/// With one input channel this is the learned filterbank: each output
/// channel is a kernel of length `kernel` sliding over the raw waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Row-major `[out_channels][in_channels][kernel]`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

pub type FilterBank = Conv1d;

impl Conv1d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Result<Self> {
        ensure!(
            in_channels >= 1 && out_channels >= 1 && kernel >= 1 && stride >= 1,
            "conv1d dimensions must be positive"
        );
        ensure!(
            weights.len() == out_channels * in_channels * kernel,
            "conv1d expects {} weights, got {}",
            out_channels * in_channels * kernel,
            weights.len()
        );
        ensure!(
            biases.len() == out_channels,
            "conv1d expects {out_channels} biases, got {}",
            biases.len()
        );
        ensure!(
            weights.iter().chain(&biases).all(|v| v.is_finite()),
            "conv1d parameters must be finite"
        );
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weights,
            biases,
        })
    }

    /// Uniform `±√(1/(in·kernel))` weights and zero biases.
    pub fn init(
        rng: &mut impl Rng,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel;
        let weights = uniform_init(rng, fan_in.max(1), out_channels * fan_in);
        Self::new(
            in_channels,
            out_channels,
            kernel,
            stride,
            weights,
            vec![0.0; out_channels],
        )
    }

    /// Builds a single-input-channel bank from explicit kernel rows.
    pub fn from_kernels(kernels: &[Vec<f64>], biases: Vec<f64>, stride: usize) -> Result<Self> {
        ensure!(!kernels.is_empty(), "filterbank needs at least one kernel");
        let kernel = kernels[0].len();
        ensure!(
            kernels.iter().all(|k| k.len() == kernel),
            "filterbank kernels must share one length"
        );
        Self::new(1, kernels.len(), kernel, stride, kernels.concat(), biases)
    }

    /// Weights of output channel `m` (all input channels, concatenated).
    pub fn kernel_row(&self, m: usize) -> &[f64] {
        let len = self.in_channels * self.kernel;
        &self.weights[m * len..(m + 1) * len]
    }

    pub fn kernels(&self) -> Vec<Vec<f64>> {
        (0..self.out_channels)
            .map(|m| self.kernel_row(m).to_vec())
            .collect()
    }

    pub fn out_len(&self, input_len: usize) -> Result<usize> {
        ensure!(
            input_len >= self.kernel,
            "input length {input_len} shorter than kernel {}",
            self.kernel
        );
        Ok((input_len - self.kernel) / self.stride + 1)
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        ensure!(
            x.shape().len() == 2 && x.shape()[0] == self.in_channels,
            "conv1d expects [{} × L] input, got {:?}",
            self.in_channels,
            x.shape()
        );
        self.out_len(x.shape()[1])
    }

    /// `[in·kernel × out_len]` patch matrix.
    fn im2col(&self, x: &Tensor, out_len: usize) -> Vec<f64> {
        let len = x.shape()[1];
        let data = x.data();
        let mut col = vec![0.0; self.in_channels * self.kernel * out_len];
        for c in 0..self.in_channels {
            let chan = &data[c * len..(c + 1) * len];
            for k in 0..self.kernel {
                let row = &mut col[(c * self.kernel + k) * out_len..][..out_len];
                if self.stride == 1 {
                    row.copy_from_slice(&chan[k..k + out_len]);
                } else {
                    for (i, r) in row.iter_mut().enumerate() {
                        *r = chan[i * self.stride + k];
                    }
                }
            }
        }
        col
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_len = self.check_input(x)?;
        let fan_in = self.in_channels * self.kernel;
        let col = self.im2col(x, out_len);
        let mut out = vec![0.0; self.out_channels * out_len];
        for (row, &b) in out.chunks_exact_mut(out_len).zip(&self.biases) {
            row.fill(b);
        }
        gemm(
            MatRef::row_major(&self.weights, self.out_channels, fan_in),
            MatRef::row_major(&col, fan_in, out_len),
            1.0,
            &mut out,
        );
        Tensor::new(vec![self.out_channels, out_len], out)
    }

    pub fn backward(
        &self,
        x: &Tensor,
        grad_out: &Tensor,
        need_input_grad: bool,
    ) -> Result<ConvGrads> {
        let out_len = self.check_input(x)?;
        ensure!(
            grad_out.shape() == [self.out_channels, out_len],
            "conv1d grad shape {:?} does not match output [{}, {out_len}]",
            grad_out.shape(),
            self.out_channels
        );
        let fan_in = self.in_channels * self.kernel;
        let g = grad_out.data();
        let col = self.im2col(x, out_len);

        let biases = g.chunks_exact(out_len).map(|r| r.iter().sum()).collect();
        let mut weights = vec![0.0; self.weights.len()];
        gemm(
            MatRef::row_major(g, self.out_channels, out_len),
            MatRef::row_major(&col, fan_in, out_len).t(),
            0.0,
            &mut weights,
        );

        let input = if need_input_grad {
            let mut gcol = vec![0.0; fan_in * out_len];
            gemm(
                MatRef::row_major(&self.weights, self.out_channels, fan_in).t(),
                MatRef::row_major(g, self.out_channels, out_len),
                0.0,
                &mut gcol,
            );
            let len = x.shape()[1];
            let mut gx = vec![0.0; self.in_channels * len];
            for c in 0..self.in_channels {
                let chan = &mut gx[c * len..(c + 1) * len];
                for k in 0..self.kernel {
                    let row = &gcol[(c * self.kernel + k) * out_len..][..out_len];
                    for (i, &v) in row.iter().enumerate() {
                        chan[i * self.stride + k] += v;
                    }
                }
            }
            Some(Tensor::new(vec![self.in_channels, len], gx)?)
        } else {
            None
        };
        Ok(ConvGrads {
            input,
            weights,
            biases,
        })
    }
}

/// 2-D convolution with symmetric zero padding, correlation orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    /// Row-major `[out][in][kh][kw]`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
    ) -> Result<Self> {
        ensure!(
            in_channels >= 1 && out_channels >= 1 && kernel_h >= 1 && kernel_w >= 1 && stride >= 1,
            "conv2d dimensions must be positive"
        );
        let n = out_channels * in_channels * kernel_h * kernel_w;
        ensure!(
            weights.len() == n,
            "conv2d expects {n} weights, got {}",
            weights.len()
        );
        ensure!(
            biases.len() == out_channels,
            "conv2d expects {out_channels} biases"
        );
        Ok(Self {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
            weights,
            biases,
        })
    }

    pub fn init(
        rng: &mut impl Rng,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel;
        let weights = uniform_init(rng, fan_in, out_channels * fan_in);
        Self::new(
            in_channels,
            out_channels,
            kernel,
            kernel,
            1,
            padding,
            weights,
            vec![0.0; out_channels],
        )
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        ensure!(
            ph >= self.kernel_h && pw >= self.kernel_w,
            "padded input {ph}×{pw} smaller than kernel {}×{}",
            self.kernel_h,
            self.kernel_w
        );
        Ok((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize, usize)> {
        ensure!(
            x.shape().len() == 3 && x.shape()[0] == self.in_channels,
            "conv2d expects [{} × H × W] input, got {:?}",
            self.in_channels,
            x.shape()
        );
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let (oh, ow) = self.out_hw(h, w)?;
        Ok((h, w, oh, ow))
    }

    /// Calls `f(patch_index, input_index)` for every patch entry that lies
    /// inside the input; padded positions are skipped.
    fn for_each_patch(
        &self,
        h: usize,
        w: usize,
        oh: usize,
        ow: usize,
        mut f: impl FnMut(usize, usize),
    ) {
        let n_out = oh * ow;
        for c in 0..self.in_channels {
            for ky in 0..self.kernel_h {
                for kx in 0..self.kernel_w {
                    let row = (c * self.kernel_h + ky) * self.kernel_w + kx;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            f(
                                row * n_out + oy * ow + ox,
                                (c * h + iy as usize) * w + ix as usize,
                            );
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (h, w, oh, ow) = self.check_input(x)?;
        let fan_in = self.in_channels * self.kernel_h * self.kernel_w;
        let n_out = oh * ow;
        let mut col = vec![0.0; fan_in * n_out];
        let data = x.data();
        self.for_each_patch(h, w, oh, ow, |dst, src| col[dst] = data[src]);
        let mut out = vec![0.0; self.out_channels * n_out];
        for (row, &b) in out.chunks_exact_mut(n_out).zip(&self.biases) {
            row.fill(b);
        }
        gemm(
            MatRef::row_major(&self.weights, self.out_channels, fan_in),
            MatRef::row_major(&col, fan_in, n_out),
            1.0,
            &mut out,
        );
        Tensor::new(vec![self.out_channels, oh, ow], out)
    }

    pub fn backward(
        &self,
        x: &Tensor,
        grad_out: &Tensor,
        need_input_grad: bool,
    ) -> Result<ConvGrads> {
        let (h, w, oh, ow) = self.check_input(x)?;
        ensure!(
            grad_out.shape() == [self.out_channels, oh, ow],
            "conv2d grad shape {:?} does not match output",
            grad_out.shape()
        );
        let fan_in = self.in_channels * self.kernel_h * self.kernel_w;
        let n_out = oh * ow;
        let g = grad_out.data();
        let mut col = vec![0.0; fan_in * n_out];
        let data = x.data();
        self.for_each_patch(h, w, oh, ow, |dst, src| col[dst] = data[src]);

        let biases = g.chunks_exact(n_out).map(|r| r.iter().sum()).collect();
        let mut weights = vec![0.0; self.weights.len()];
        gemm(
            MatRef::row_major(g, self.out_channels, n_out),
            MatRef::row_major(&col, fan_in, n_out).t(),
            0.0,
            &mut weights,
        );
        let input = if need_input_grad {
            let mut gcol = vec![0.0; fan_in * n_out];
            gemm(
                MatRef::row_major(&self.weights, self.out_channels, fan_in).t(),
                MatRef::row_major(g, self.out_channels, n_out),
                0.0,
                &mut gcol,
            );
            let mut gx = vec![0.0; x.len()];
            self.for_each_patch(h, w, oh, ow, |src, dst| gx[dst] += gcol[src]);
            Some(Tensor::new(x.shape().to_vec(), gx)?)
        } else {
            None
        };
        Ok(ConvGrads {
            input,
            weights,
            biases,
        })
    }
}
