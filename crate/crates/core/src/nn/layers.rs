//! Layers with hand-written backward passes. Each layer has a training
//! forward (`&mut self`, caches what backward needs) and an inference
//! forward (`&self`, no caching).

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::{col2im, im2col, Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Trainable values and their accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    fn new(value: Vec<T>) -> Self {
        let grad = vec![T::zero(); value.len()];
        Param { value, grad }
    }

    fn he_normal<R: Rng + ?Sized>(len: usize, fan_in: usize, rng: &mut R) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        Self::new(
            (0..len)
                .map(|_| T::of(std * Distribution::<f64>::sample(&StandardNormal, rng)))
                .collect::<Vec<T>>(),
        )
    }

    fn filled(len: usize, v: f64) -> Self {
        Self::new(vec![T::of(v); len])
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// 3x3 convolution, stride 1, zero padding 1, no bias.
#[derive(Clone, Debug)]
pub struct Conv3x3<T> {
    pub cin: usize,
    pub cout: usize,
    /// `cout x (cin * 9)`, row-major.
    pub weight: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv3x3<T> {
    pub fn new<R: Rng + ?Sized>(cin: usize, cout: usize, rng: &mut R) -> Self {
        Conv3x3 {
            cin,
            cout,
            weight: Param::he_normal(cout * cin * 9, cin * 9, rng),
            input: None,
        }
    }

    fn apply(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.cin, "conv3x3: channel mismatch");
        let k = self.cin * 9;
        let p = x.plane();
        let col = im2col(x);
        let mut y = Tensor::zeros(self.cout, x.n, x.h, x.w);
        T::gemm(self.cout, k, p, T::one(), &self.weight.value, (k, 1), &col, (p, 1), T::zero(), &mut y.data, (p, 1));
        y
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        self.apply(x)
    }

    pub fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        let y = self.apply(&x);
        self.input = Some(x);
        y
    }

    /// Accumulates the weight gradient; returns the input gradient when
    /// `need_dx`.
    pub fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let x = self.input.take().expect("conv3x3: backward without forward");
        let k = self.cin * 9;
        let p = x.plane();
        let col = im2col(&x);
        // dW += dY colᵀ
        T::gemm(self.cout, p, k, T::one(), &dy.data, (p, 1), &col, (1, p), T::one(), &mut self.weight.grad, (k, 1));
        if !need_dx {
            return None;
        }
        // dcol = Wᵀ dY, reusing the patch buffer
        let mut dcol = col;
        T::gemm(k, self.cout, p, T::one(), &self.weight.value, (1, k), &dy.data, (p, 1), T::zero(), &mut dcol, (p, 1));
        Some(col2im(&dcol, x.c, x.n, x.h, x.w))
    }
}

/// Batch normalization over `(n, h, w)` per channel, followed by ReLU.
#[derive(Clone, Debug)]
pub struct BnRelu<T> {
    pub channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    cache: Option<BnCache<T>>,
}

#[derive(Clone, Debug)]
struct BnCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BnRelu<T> {
    pub fn new(channels: usize) -> Self {
        BnRelu {
            channels,
            gamma: Param::filled(channels, 1.0),
            beta: Param::filled(channels, 0.0),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            cache: None,
        }
    }

    /// Uses the running statistics.
    pub fn forward(&self, mut x: Tensor<T>) -> Tensor<T> {
        let eps = T::of(BN_EPS);
        for c in 0..self.channels {
            let scale = self.gamma.value[c] / (self.running_var[c] + eps).sqrt();
            let shift = self.beta.value[c] - self.running_mean[c] * scale;
            for v in x.channel_mut(c) {
                *v = (*v * scale + shift).max(T::zero());
            }
        }
        x
    }

    /// Uses batch statistics and updates the running ones.
    pub fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.channels, "batchnorm: channel mismatch");
        let m = x.plane();
        let mf = T::of(m as f64);
        let eps = T::of(BN_EPS);
        let mom = T::of(BN_MOMENTUM);
        let mut xhat = x;
        let mut out = Tensor::zeros(xhat.c, xhat.n, xhat.h, xhat.w);
        let mut inv_std = vec![T::zero(); self.channels];
        for c in 0..self.channels {
            let ch = xhat.channel_mut(c);
            let mean = ch.iter().copied().sum::<T>() / mf;
            let var = ch.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / mf;
            let is = T::one() / (var + eps).sqrt();
            inv_std[c] = is;
            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
            let dst = out.channel_mut(c);
            for (v, o) in ch.iter_mut().zip(dst) {
                *v = (*v - mean) * is;
                *o = (*v * g + b).max(T::zero());
            }
            let unbiased = if m > 1 { var * mf / T::of((m - 1) as f64) } else { var };
            self.running_mean[c] = (T::one() - mom) * self.running_mean[c] + mom * mean;
            self.running_var[c] = (T::one() - mom) * self.running_var[c] + mom * unbiased;
        }
        self.cache = Some(BnCache { xhat, inv_std });
        out
    }

    pub fn backward(&mut self, mut dy: Tensor<T>) -> Tensor<T> {
        let BnCache { xhat, inv_std } = self.cache.take().expect("batchnorm: backward without forward");
        let mf = T::of(xhat.plane() as f64);
        for c in 0..self.channels {
            let xh = xhat.channel(c);
            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
            let d = dy.channel_mut(c);
            // ReLU mask, then dβ and dγ
            let (mut sum_d, mut sum_dx) = (T::zero(), T::zero());
            for (dv, &xv) in d.iter_mut().zip(xh) {
                if xv * g + b <= T::zero() {
                    *dv = T::zero();
                }
                sum_d = sum_d + *dv;
                sum_dx = sum_dx + *dv * xv;
            }
            self.beta.grad[c] = self.beta.grad[c] + sum_d;
            self.gamma.grad[c] = self.gamma.grad[c] + sum_dx;
            let k = self.gamma.value[c] * inv_std[c] / mf;
            for (dv, &xv) in d.iter_mut().zip(xh) {
                *dv = k * (mf * *dv - sum_d - xv * sum_dx);
            }
        }
        dy
    }
}

/// 2x2 max pooling, stride 2.
#[derive(Clone, Debug, Default)]
pub struct MaxPool2 {
    argmax: Option<(Vec<u32>, [usize; 4])>,
}

impl MaxPool2 {
    fn apply<T: Scalar>(x: &Tensor<T>, mut argmax: Option<&mut Vec<u32>>) -> Tensor<T> {
        assert!(x.h.is_multiple_of(2) && x.w.is_multiple_of(2), "maxpool: odd spatial size {}x{}", x.h, x.w);
        let (ho, wo) = (x.h / 2, x.w / 2);
        let mut y = Tensor::zeros(x.c, x.n, ho, wo);
        if let Some(a) = argmax.as_deref_mut() {
            a.clear();
            a.reserve(y.data.len());
        }
        let w = x.w;
        for c in 0..x.c {
            let src = x.channel(c);
            let dst = y.channel_mut(c);
            for n in 0..x.n {
                for i in 0..ho {
                    for j in 0..wo {
                        let base = (n * x.h + 2 * i) * w + 2 * j;
                        let mut best = base;
                        for idx in [base + 1, base + w, base + w + 1] {
                            if src[idx] > src[best] {
                                best = idx;
                            }
                        }
                        dst[(n * ho + i) * wo + j] = src[best];
                        if let Some(a) = argmax.as_deref_mut() {
                            a.push(best as u32);
                        }
                    }
                }
            }
        }
        y
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Tensor<T> {
        Self::apply(x, None)
    }

    pub fn forward_train<T: Scalar>(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let mut idx = Vec::new();
        let y = Self::apply(x, Some(&mut idx));
        self.argmax = Some((idx, [x.c, x.n, x.h, x.w]));
        y
    }

    pub fn backward<T: Scalar>(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let (idx, [c, n, h, w]) = self.argmax.take().expect("maxpool: backward without forward");
        let mut dx = Tensor::zeros(c, n, h, w);
        let per = dy.plane();
        for ch in 0..c {
            let d = dy.channel(ch);
            let dst = dx.channel_mut(ch);
            for (k, &g) in d.iter().enumerate() {
                let t = idx[ch * per + k] as usize;
                dst[t] = dst[t] + g;
            }
        }
        dx
    }
}

/// 2x2 transposed convolution, stride 2, with bias. Doubles the spatial size.
#[derive(Clone, Debug)]
pub struct ConvT2<T> {
    pub cin: usize,
    pub cout: usize,
    /// `cin x (cout * 4)`: entry `(ci, co * 4 + a * 2 + b)` connects input
    /// pixel `(i, j)` to output pixel `(2i + a, 2j + b)`.
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> ConvT2<T> {
    pub fn new<R: Rng + ?Sized>(cin: usize, cout: usize, rng: &mut R) -> Self {
        ConvT2 {
            cin,
            cout,
            weight: Param::he_normal(cin * cout * 4, cin, rng),
            bias: Param::filled(cout, 0.0),
            input: None,
        }
    }

    fn apply(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.cin, "convT: channel mismatch");
        let (p, q) = (x.plane(), self.cout * 4);
        // Z = Wᵀ X, rows (co, a, b), columns input pixels
        let mut z = vec![T::zero(); q * p];
        T::gemm(q, self.cin, p, T::one(), &self.weight.value, (1, q), &x.data, (p, 1), T::zero(), &mut z, (p, 1));
        let (h, w) = (x.h, x.w);
        let mut y = Tensor::zeros(self.cout, x.n, 2 * h, 2 * w);
        for co in 0..self.cout {
            let bias = self.bias.value[co];
            let dst = y.channel_mut(co);
            for a in 0..2 {
                for b in 0..2 {
                    let zr = &z[(co * 4 + a * 2 + b) * p..][..p];
                    for n in 0..x.n {
                        for i in 0..h {
                            let row = &mut dst[((n * 2 * h) + 2 * i + a) * 2 * w..][..2 * w];
                            let src = &zr[(n * h + i) * w..][..w];
                            for j in 0..w {
                                row[2 * j + b] = src[j] + bias;
                            }
                        }
                    }
                }
            }
        }
        y
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        self.apply(x)
    }

    pub fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        let y = self.apply(&x);
        self.input = Some(x);
        y
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("convT: backward without forward");
        let (p, q, h, w) = (x.plane(), self.cout * 4, x.h, x.w);
        let mut dz = vec![T::zero(); q * p];
        for co in 0..self.cout {
            let src = dy.channel(co);
            self.bias.grad[co] = self.bias.grad[co] + src.iter().copied().sum::<T>();
            for a in 0..2 {
                for b in 0..2 {
                    let zr = &mut dz[(co * 4 + a * 2 + b) * p..][..p];
                    for n in 0..x.n {
                        for i in 0..h {
                            let row = &src[((n * 2 * h) + 2 * i + a) * 2 * w..][..2 * w];
                            let d = &mut zr[(n * h + i) * w..][..w];
                            for j in 0..w {
                                d[j] = row[2 * j + b];
                            }
                        }
                    }
                }
            }
        }
        // dW += X dZᵀ ; dX = W dZ
        T::gemm(self.cin, p, q, T::one(), &x.data, (p, 1), &dz, (1, p), T::one(), &mut self.weight.grad, (q, 1));
        let mut dx = Tensor::zeros(self.cin, x.n, h, w);
        T::gemm(self.cin, q, p, T::one(), &self.weight.value, (q, 1), &dz, (p, 1), T::zero(), &mut dx.data, (p, 1));
        dx
    }
}

/// 1x1 convolution with bias.
#[derive(Clone, Debug)]
pub struct Conv1x1<T> {
    pub cin: usize,
    pub cout: usize,
    /// `cout x cin`.
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv1x1<T> {
    pub fn new<R: Rng + ?Sized>(cin: usize, cout: usize, bias: f64, rng: &mut R) -> Self {
        let std = (1.0 / cin as f64).sqrt();
        Conv1x1 {
            cin,
            cout,
            weight: Param::new((0..cin * cout).map(|_| T::of(std * Distribution::<f64>::sample(&StandardNormal, rng))).collect::<Vec<T>>()),
            bias: Param::filled(cout, bias),
            input: None,
        }
    }

    fn apply(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.cin, "conv1x1: channel mismatch");
        let p = x.plane();
        let mut y = Tensor::zeros(self.cout, x.n, x.h, x.w);
        for co in 0..self.cout {
            let b = self.bias.value[co];
            y.channel_mut(co).iter_mut().for_each(|v| *v = b);
        }
        T::gemm(self.cout, self.cin, p, T::one(), &self.weight.value, (self.cin, 1), &x.data, (p, 1), T::one(), &mut y.data, (p, 1));
        y
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        self.apply(x)
    }

    pub fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        let y = self.apply(&x);
        self.input = Some(x);
        y
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let x = self.input.take().expect("conv1x1: backward without forward");
        let p = x.plane();
        for co in 0..self.cout {
            self.bias.grad[co] = self.bias.grad[co] + dy.channel(co).iter().copied().sum::<T>();
        }
        T::gemm(self.cout, p, self.cin, T::one(), &dy.data, (p, 1), &x.data, (1, p), T::one(), &mut self.weight.grad, (self.cin, 1));
        let mut dx = Tensor::zeros(self.cin, x.n, x.h, x.w);
        T::gemm(self.cin, self.cout, p, T::one(), &self.weight.value, (1, self.cin), &dy.data, (p, 1), T::zero(), &mut dx.data, (p, 1));
        dx
    }
}

/// `[3x3 conv, batch norm, ReLU] x 2`.
#[derive(Clone, Debug)]
pub struct ConvBlock<T> {
    pub conv1: Conv3x3<T>,
    pub bn1: BnRelu<T>,
    pub conv2: Conv3x3<T>,
    pub bn2: BnRelu<T>,
}

impl<T: Scalar> ConvBlock<T> {
    pub fn new<R: Rng + ?Sized>(cin: usize, cout: usize, rng: &mut R) -> Self {
        ConvBlock {
            conv1: Conv3x3::new(cin, cout, rng),
            bn1: BnRelu::new(cout),
            conv2: Conv3x3::new(cout, cout, rng),
            bn2: BnRelu::new(cout),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let h = self.bn1.forward(self.conv1.forward(x));
        self.bn2.forward(self.conv2.forward(&h))
    }

    pub fn forward_train(&mut self, x: Tensor<T>) -> Tensor<T> {
        let h = self.conv1.forward_train(x);
        let h = self.bn1.forward_train(h);
        let h = self.conv2.forward_train(h);
        self.bn2.forward_train(h)
    }

    pub fn backward(&mut self, dy: Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let d = self.bn2.backward(dy);
        let d = self.conv2.backward(&d, true).expect("inner gradient");
        let d = self.bn1.backward(d);
        self.conv1.backward(&d, need_dx)
    }

    pub(crate) fn params(&self) -> [&Param<T>; 6] {
        [
            &self.conv1.weight,
            &self.bn1.gamma,
            &self.bn1.beta,
            &self.conv2.weight,
            &self.bn2.gamma,
            &self.bn2.beta,
        ]
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Param<T>; 6] {
        [
            &mut self.conv1.weight,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.conv2.weight,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
        ]
    }
}
