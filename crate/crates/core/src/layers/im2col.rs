//! Patch unfolding shared by convolution and transposed convolution.

use crate::numcore::Scalar;

/// Geometry of one strided, zero-padded square-kernel correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl Geometry {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.out_height * self.out_width
    }

    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Output columns `[lo, hi)` whose stride-1 tap `kj` lands inside a row of
/// length `width`.
fn valid_span(width: usize, out_width: usize, kj: usize, padding: usize) -> (usize, usize) {
    let lo = padding.saturating_sub(kj);
    let hi = (width + padding).saturating_sub(kj).min(out_width);
    (lo, hi.max(lo))
}

/// Unfolds `image` (`[C x H x W]`) into `cols` (`[C*k*k x Ho*Wo]`).
pub(crate) fn im2col<T: Scalar>(g: &Geometry, image: &[T], cols: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.padding as isize);
    let n_out = g.cols();
    for c in 0..g.channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * n_out..(row + 1) * n_out];
                for oi in 0..g.out_height {
                    let ii = (oi * s + ki) as isize - p;
                    let line = &mut dst[oi * g.out_width..(oi + 1) * g.out_width];
                    if ii < 0 || ii >= g.height as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[ii as usize * g.width..(ii as usize + 1) * g.width];
                    if s == 1 {
                        let (lo, hi) = valid_span(g.width, g.out_width, kj, g.padding);
                        line[..lo].fill(T::zero());
                        line[hi..].fill(T::zero());
                        if lo < hi {
                            let start = lo + kj - g.padding;
                            line[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                        }
                        continue;
                    }
                    for (oj, v) in line.iter_mut().enumerate() {
                        let jj = (oj * s + kj) as isize - p;
                        *v = if jj < 0 || jj >= g.width as isize {
                            T::zero()
                        } else {
                            src[jj as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `cols` back into `image`, accumulating.
pub(crate) fn col2im<T: Scalar>(g: &Geometry, cols: &[T], image: &mut [T]) {
    let (k, s, p) = (g.kernel, g.stride, g.padding as isize);
    let n_out = g.cols();
    for c in 0..g.channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * n_out..(row + 1) * n_out];
                for oi in 0..g.out_height {
                    let ii = (oi * s + ki) as isize - p;
                    if ii < 0 || ii >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * g.width..(ii as usize + 1) * g.width];
                    let line = &src[oi * g.out_width..(oi + 1) * g.out_width];
                    if s == 1 {
                        let (lo, hi) = valid_span(g.width, g.out_width, kj, g.padding);
                        if lo < hi {
                            let start = lo + kj - g.padding;
                            for (d, &v) in dst[start..start + hi - lo].iter_mut().zip(&line[lo..hi]) {
                                *d += v;
                            }
                        }
                        continue;
                    }
                    for oj in 0..g.out_width {
                        let jj = (oj * s + kj) as isize - p;
                        if jj >= 0 && jj < g.width as isize {
                            dst[jj as usize] += src[oi * g.out_width + oj];
                        }
                    }
                }
            }
        }
    }
}
