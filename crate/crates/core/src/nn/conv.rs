//! im2col convolution kernels over `(channel, row, column)` tensors.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn output_side(&self, side: usize) -> usize {
        (side + 2 * self.pad - self.kernel) / self.stride + 1
    }
}

/// Unfolds `x` into a `(C·k·k) × (H_out·W_out)` patch matrix.
pub fn im2col<F: Scalar>(x: ArrayView3<'_, F>, g: ConvGeometry) -> Array2<F> {
    let (c, h, w) = x.dim();
    let (ho, wo) = (g.output_side(h), g.output_side(w));
    let k = g.kernel;
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let mut col = Array2::zeros((c * k * k, ho * wo));
    let cs = col.as_slice_mut().expect("fresh array");
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cs[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = (ci * h + iy as usize) * w;
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[oy * wo + ox] = xs[src_row + ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: folds patch gradients back onto a `(C, H, W)` grid.
pub fn col2im<F: Scalar>(col: ArrayView2<'_, F>, shape: (usize, usize, usize), g: ConvGeometry) -> Array3<F> {
    let (c, h, w) = shape;
    let (ho, wo) = (g.output_side(h), g.output_side(w));
    let k = g.kernel;
    let col = col.as_standard_layout();
    let cs = col.as_slice().expect("standard layout");
    let mut x = Array3::zeros(shape);
    let xs = x.as_slice_mut().expect("fresh array");
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cs[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = (ci * h + iy as usize) * w;
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            xs[dst_row + ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn direct_conv(x: &Array3<f64>, w: &Array2<f64>, cout: usize, g: ConvGeometry) -> Array3<f64> {
        let (c, h, wd) = x.dim();
        let (ho, wo) = (g.output_side(h), g.output_side(wd));
        let k = g.kernel;
        Array3::from_shape_fn((cout, ho, wo), |(o, oy, ox)| {
            let mut acc = 0.0;
            for ci in 0..c {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                            acc += w[[o, (ci * k + ky) * k + kx]] * x[[ci, iy as usize, ix as usize]];
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn matches_direct_convolution() {
        for &(stride, pad) in &[(1, 1), (2, 1), (1, 0)] {
            let g = ConvGeometry { kernel: 3, stride, pad };
            let x = Array3::from_shape_fn((2, 7, 6), |(c, y, x)| ((c * 31 + y * 7 + x * 3) % 11) as f64 - 5.0);
            let w = Array2::from_shape_fn((4, 18), |(o, i)| ((o * 5 + i) % 7) as f64 * 0.25 - 0.7);
            let col = im2col(x.view(), g);
            let got = w.dot(&col);
            let want = direct_conv(&x, &w, 4, g);
            let ho = g.output_side(7);
            let wo = g.output_side(6);
            let got = got.into_shape_with_order((4, ho, wo)).unwrap();
            for (a, b) in got.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeometry { kernel: 3, stride: 2, pad: 1 };
        let x = Array3::from_shape_fn((3, 9, 8), |(c, y, x)| (c as f64 + 1.0) * (y as f64 - x as f64 * 0.5));
        let col = im2col(x.view(), g);
        let y = Array2::from_shape_fn(col.dim(), |(i, j)| ((i * 13 + j * 7) % 5) as f64 - 2.0);
        let lhs: f64 = col.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let back = col2im(y.view(), x.dim(), g);
        let rhs: f64 = x.iter().zip(back.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
