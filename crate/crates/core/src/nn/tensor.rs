//! Channel-major activations and the GEMM/im2col kernels the layers use.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::raster::{ImageRole, WpcImage, CHANNELS};

/// Element type of the network. `f32` for training and inference, `f64`
/// for gradient checks.
pub trait Scalar: Float + Default + Send + Sync + std::fmt::Debug + std::iter::Sum + 'static {
    /// `C = alpha * A B + beta * C` with `A: m x k`, `B: k x n`, `C: m x n`
    /// given as (row stride, column stride) views.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        beta: Self,
        c: &mut [Self],
        c_strides: (usize, usize),
    );

    fn of(v: f64) -> Self {
        Self::from(v).expect("representable constant")
    }
}

fn span(rows: usize, cols: usize, (rs, cs): (usize, usize)) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

macro_rules! impl_scalar {
    ($t:ty, $kernel:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (usize, usize),
                b: &[Self],
                b_strides: (usize, usize),
                beta: Self,
                c: &mut [Self],
                c_strides: (usize, usize),
            ) {
                assert!(a.len() >= span(m, k, a_strides), "gemm: A too short");
                assert!(b.len() >= span(k, n, b_strides), "gemm: B too short");
                assert!(c.len() >= span(m, n, c_strides), "gemm: C too short");
                // SAFETY: the asserts above keep every strided access in bounds,
                // and `c` is uniquely borrowed.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0 as isize,
                        a_strides.1 as isize,
                        b.as_ptr(),
                        b_strides.0 as isize,
                        b_strides.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0 as isize,
                        c_strides.1 as isize,
                    )
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Activations stored as `[channel][batch][row][column]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(c: usize, n: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            n,
            h,
            w,
            data: vec![T::zero(); c * n * h * w],
        }
    }

    /// Elements per channel, `n * h * w`.
    pub fn plane(&self) -> usize {
        self.n * self.h * self.w
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let p = self.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        (self.c, self.n, self.h, self.w) == (other.c, other.n, other.h, other.w)
    }

    /// Stacks `a` on top of `b` along the channel axis.
    pub fn concat(a: &Self, b: &Self) -> Self {
        assert_eq!((a.n, a.h, a.w), (b.n, b.h, b.w), "concat: spatial shapes differ");
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Tensor {
            c: a.c + b.c,
            n: a.n,
            h: a.h,
            w: a.w,
            data,
        }
    }

    /// Inverse of [`Tensor::concat`]: the first `c` channels and the rest.
    pub fn split(self, c: usize) -> (Self, Self) {
        let p = self.plane();
        let mut data = self.data;
        let tail = data.split_off(c * p);
        (
            Tensor {
                c,
                n: self.n,
                h: self.h,
                w: self.w,
                data,
            },
            Tensor {
                c: self.c - c,
                n: self.n,
                h: self.h,
                w: self.w,
                data: tail,
            },
        )
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert!(self.same_shape(other), "add_assign: shapes differ");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }
}

/// Packs RGB images into a tensor. All images must share one size.
pub fn images_to_tensor<T: Scalar>(images: &[&WpcImage]) -> Result<Tensor<T>> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidInput("empty image batch".into()))?;
    let (h, w, n) = (first.height, first.width, images.len());
    let mut t = Tensor::zeros(CHANNELS, n, h, w);
    for (i, img) in images.iter().enumerate() {
        if (img.height, img.width) != (h, w) || img.pixels.len() != h * w * CHANNELS {
            return Err(Error::DimensionMismatch {
                expected: format!("{w}x{h}x3"),
                actual: format!("{}x{}x{}", img.width, img.height, img.pixels.len() / (img.width * img.height).max(1)),
            });
        }
        for c in 0..CHANNELS {
            let dst = &mut t.channel_mut(c)[i * h * w..(i + 1) * h * w];
            for (d, px) in dst.iter_mut().zip(img.pixels.chunks_exact(CHANNELS)) {
                *d = T::of(px[c] as f64);
            }
        }
    }
    Ok(t)
}

/// Unpacks a 3-channel tensor into images, clamping to `[0, 1]` if asked.
pub fn tensor_to_images<T: Scalar>(t: &Tensor<T>, role: ImageRole, clamp: bool) -> Vec<WpcImage> {
    assert_eq!(t.c, CHANNELS, "expected a 3-channel tensor");
    let hw = t.h * t.w;
    (0..t.n)
        .map(|i| {
            let mut pixels = vec![0.0f32; hw * CHANNELS];
            for c in 0..CHANNELS {
                let src = &t.channel(c)[i * hw..(i + 1) * hw];
                for (px, &v) in pixels.chunks_exact_mut(CHANNELS).zip(src) {
                    let v = v.to_f32().unwrap_or(f32::NAN);
                    px[c] = if clamp { v.clamp(0.0, 1.0) } else { v };
                }
            }
            WpcImage {
                width: t.w,
                height: t.h,
                pixels,
                role,
            }
        })
        .collect()
}

/// 3x3, padding 1 patch matrix: row `ci * 9 + ky * 3 + kx`, column
/// `(n, y, x)` flattened.
pub(crate) fn im2col<T: Scalar>(x: &Tensor<T>) -> Vec<T> {
    let (h, w, p) = (x.h, x.w, x.plane());
    let mut col = vec![T::zero(); x.c * 9 * p];
    for ci in 0..x.c {
        let src = x.channel(ci);
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * p..][..p];
                for n in 0..x.n {
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let s = &src[(n * h + sy as usize) * w..][..w];
                        let d = &mut row[(n * h + y) * w..][..w];
                        match kx {
                            0 => d[1..].copy_from_slice(&s[..w - 1]),
                            1 => d.copy_from_slice(s),
                            _ => d[..w - 1].copy_from_slice(&s[1..]),
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
pub(crate) fn col2im<T: Scalar>(col: &[T], c: usize, n: usize, h: usize, w: usize) -> Tensor<T> {
    let mut x = Tensor::zeros(c, n, h, w);
    let p = x.plane();
    for ci in 0..c {
        let dst = x.channel_mut(ci);
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * p..][..p];
                for b in 0..n {
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let d = &mut dst[(b * h + sy as usize) * w..][..w];
                        let s = &row[(b * h + y) * w..][..w];
                        match kx {
                            0 => d[..w - 1].iter_mut().zip(&s[1..]).for_each(|(a, &v)| *a = *a + v),
                            1 => d.iter_mut().zip(s).for_each(|(a, &v)| *a = *a + v),
                            _ => d[1..].iter_mut().zip(&s[..w - 1]).for_each(|(a, &v)| *a = *a + v),
                        }
                    }
                }
            }
        }
    }
    x
}
