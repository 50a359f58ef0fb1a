//! Direct 2-D convolution kernels on channel-major (`c × h × w`) buffers.
//!
//! The forward map excludes the bias; [`conv2d_transpose`] is its exact
//! adjoint and [`conv2d_kernel_grad`] its derivative with respect to the
//! kernel.

use crate::scalar::Scalar;

/// Static geometry of one convolution applied to one input shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Returns `None` when the kernel does not fit the padded input or the
    /// stride is zero.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_channels: usize,
        in_h: usize,
        in_w: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
    ) -> Option<Self> {
        if stride == 0 || kernel_h == 0 || kernel_w == 0 {
            return None;
        }
        let ph = in_h + 2 * padding;
        let pw = in_w + 2 * padding;
        if ph < kernel_h || pw < kernel_w {
            return None;
        }
        Some(Self {
            in_channels,
            in_h,
            in_w,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
            out_h: (ph - kernel_h) / stride + 1,
            out_w: (pw - kernel_w) / stride + 1,
        })
    }

    pub fn in_len(&self) -> usize {
        self.in_channels * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_channels * self.out_h * self.out_w
    }

    pub fn kernel_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_h * self.kernel_w
    }

    /// Input coordinate hit by output `(oy, ox)` and tap `(ky, kx)`, if it
    /// falls inside the unpadded input.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ky).checked_sub(self.padding)?;
        let ix = (ox * self.stride + kx).checked_sub(self.padding)?;
        (iy < self.in_h && ix < self.in_w).then_some((iy, ix))
    }
}

/// `out[o, y, x] = Σ_{c, ky, kx} k[o, c, ky, kx] · in[c, y·s + ky − p, x·s + kx − p]`
pub fn conv2d_forward<T: Scalar>(kernel: &[T], g: &ConvGeometry, input: &[T]) -> Vec<T> {
    debug_assert_eq!(kernel.len(), g.kernel_len());
    debug_assert_eq!(input.len(), g.in_len());
    let mut out = vec![T::zero(); g.out_len()];
    let plane = g.in_h * g.in_w;
    for o in 0..g.out_channels {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let mut acc = 0.0f64;
                for c in 0..g.in_channels {
                    let kbase = (o * g.in_channels + c) * g.kernel_h * g.kernel_w;
                    for ky in 0..g.kernel_h {
                        for kx in 0..g.kernel_w {
                            if let Some((iy, ix)) = g.source(oy, ox, ky, kx) {
                                acc += kernel[kbase + ky * g.kernel_w + kx].widen()
                                    * input[c * plane + iy * g.in_w + ix].widen();
                            }
                        }
                    }
                }
                out[(o * g.out_h + oy) * g.out_w + ox] = T::narrow(acc);
            }
        }
    }
    out
}

/// Adjoint of [`conv2d_forward`]: scatters each output cotangent back over
/// its receptive field.
pub fn conv2d_transpose<T: Scalar>(kernel: &[T], g: &ConvGeometry, grad_out: &[T]) -> Vec<T> {
    debug_assert_eq!(grad_out.len(), g.out_len());
    let mut acc = vec![0.0f64; g.in_len()];
    let plane = g.in_h * g.in_w;
    for o in 0..g.out_channels {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let go = grad_out[(o * g.out_h + oy) * g.out_w + ox].widen();
                if go == 0.0 {
                    continue;
                }
                for c in 0..g.in_channels {
                    let kbase = (o * g.in_channels + c) * g.kernel_h * g.kernel_w;
                    for ky in 0..g.kernel_h {
                        for kx in 0..g.kernel_w {
                            if let Some((iy, ix)) = g.source(oy, ox, ky, kx) {
                                acc[c * plane + iy * g.in_w + ix] +=
                                    kernel[kbase + ky * g.kernel_w + kx].widen() * go;
                            }
                        }
                    }
                }
            }
        }
    }
    acc.into_iter().map(T::narrow).collect()
}

/// Gradient of `⟨grad_out, conv(kernel, input)⟩` with respect to the kernel.
pub fn conv2d_kernel_grad<T: Scalar>(g: &ConvGeometry, input: &[T], grad_out: &[T]) -> Vec<T> {
    let mut acc = vec![0.0f64; g.kernel_len()];
    let plane = g.in_h * g.in_w;
    for o in 0..g.out_channels {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let go = grad_out[(o * g.out_h + oy) * g.out_w + ox].widen();
                if go == 0.0 {
                    continue;
                }
                for c in 0..g.in_channels {
                    let kbase = (o * g.in_channels + c) * g.kernel_h * g.kernel_w;
                    for ky in 0..g.kernel_h {
                        for kx in 0..g.kernel_w {
                            if let Some((iy, ix)) = g.source(oy, ox, ky, kx) {
                                acc[kbase + ky * g.kernel_w + kx] +=
                                    input[c * plane + iy * g.in_w + ix].widen() * go;
                            }
                        }
                    }
                }
            }
        }
    }
    acc.into_iter().map(T::narrow).collect()
}
