//! Raw convolution kernels over flat slices: im2col/col2im and small GEMMs
//! with 64-bit accumulators.

/// Geometry of one forward convolution over a single `[C, H, W]` sample.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    pub padding: [usize; 2],
    pub out_height: usize,
    pub out_width: usize,
}

impl Geometry {
    /// Rows of the column matrix: `C * kh * kw`.
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel[0] * self.kernel[1]
    }

    /// Columns of the column matrix: `out_h * out_w`.
    pub fn col_cols(&self) -> usize {
        self.out_height * self.out_width
    }

    /// Visits every (column-matrix index, image index) pair that lands inside
    /// the unpadded image.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let [kh, kw] = self.kernel;
        let [sh, sw] = self.stride;
        let [ph, pw] = self.padding;
        let cols = self.col_cols();
        for c in 0..self.channels {
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (c * kh + ki) * kw + kj;
                    for oy in 0..self.out_height {
                        let iy = (oy * sh + ki) as isize - ph as isize;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        let img_row = (c * self.height + iy as usize) * self.width;
                        let col_row = row * cols + oy * self.out_width;
                        for ox in 0..self.out_width {
                            let ix = (ox * sw + kj) as isize - pw as isize;
                            if ix < 0 || ix >= self.width as isize {
                                continue;
                            }
                            f(col_row + ox, img_row + ix as usize);
                        }
                    }
                }
            }
        }
    }
}

/// Unfolds a `[C, H, W]` image into a `[C*kh*kw, out_h*out_w]` matrix.
pub(crate) fn im2col(image: &[f32], geom: &Geometry) -> Vec<f32> {
    let mut col = vec![0.0f32; geom.col_rows() * geom.col_cols()];
    geom.for_each_tap(|ci, ii| col[ci] = image[ii]);
    col
}

/// Scatter-adds a column matrix back onto a `[C, H, W]` image (adjoint of
/// [`im2col`]).
pub(crate) fn col2im(col: &[f64], geom: &Geometry) -> Vec<f64> {
    let mut image = vec![0.0f64; geom.channels * geom.height * geom.width];
    geom.for_each_tap(|ci, ii| image[ii] += col[ci]);
    image
}

/// `C[m, n] = A[m, k] * B[k, n]`.
pub(crate) fn gemm_nn(m: usize, k: usize, n: usize, a: &[f32], b: &[f32]) -> Vec<f64> {
    let mut c = vec![0.0f64; m * n];
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p] as f64;
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_ip * bv as f64;
            }
        }
    }
    c
}

/// `C[m, n] = A[k, m]^T * B[k, n]`.
pub(crate) fn gemm_tn(m: usize, k: usize, n: usize, a: &[f32], b: &[f32]) -> Vec<f64> {
    let mut c = vec![0.0f64; m * n];
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let a_pi = a[p * m + i] as f64;
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_pi * bv as f64;
            }
        }
    }
    c
}

/// `C[m, n] = A[m, k] * B[n, k]^T`.
pub(crate) fn gemm_nt(m: usize, k: usize, n: usize, a: &[f32], b: &[f32]) -> Vec<f64> {
    let mut c = vec![0.0f64; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            c[i * n + j] = a_row.iter().zip(b_row).map(|(&x, &y)| x as f64 * y as f64).sum();
        }
    }
    c
}
