use super::{Graph, Op, Var};
use crate::error::{Error, Result};
use crate::kernels::{col2im, gemm_nn, gemm_nt, gemm_tn, im2col, Geometry};
use crate::runtime::map_ordered;
use crate::tensor::Tensor;

/// Kernel, stride and padding of a 2-D (transposed) convolution.
///
/// `output_padding` only affects [`Graph::conv_transpose2d`]: it adds rows and
/// columns at the bottom/right so that a transposed convolution can restore
/// the exact input size of the forward convolution it mirrors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    pub padding: [usize; 2],
    pub output_padding: [usize; 2],
}

impl ConvSpec {
    pub fn square(kernel: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            kernel: [kernel; 2],
            stride: [stride; 2],
            padding: [padding; 2],
            output_padding: [0; 2],
        }
    }

    pub fn with_output_padding(mut self, output_padding: [usize; 2]) -> Self {
        self.output_padding = output_padding;
        self
    }

    /// `floor((in + 2p - k) / s) + 1` per axis; must be strictly positive.
    pub fn conv_output_size(&self, input: [usize; 2]) -> Result<[usize; 2]> {
        let mut out = [0; 2];
        for axis in 0..2 {
            if self.kernel[axis] == 0 || self.stride[axis] == 0 {
                return Err(Error::dim(
                    "conv2d",
                    format!("kernel and stride must be positive: {self:?}"),
                ));
            }
            let padded = input[axis] + 2 * self.padding[axis];
            if padded < self.kernel[axis] {
                return Err(Error::dim(
                    "conv2d",
                    format!(
                        "spatial axis {} of size {} (padded {padded}) is smaller than kernel {}",
                        axis + 2,
                        input[axis],
                        self.kernel[axis]
                    ),
                ));
            }
            out[axis] = (padded - self.kernel[axis]) / self.stride[axis] + 1;
        }
        Ok(out)
    }

    /// `(in - 1) * s - 2p + k + output_padding` per axis.
    pub fn transpose_output_size(&self, input: [usize; 2]) -> Result<[usize; 2]> {
        let mut out = [0; 2];
        for axis in 0..2 {
            if self.kernel[axis] == 0 || self.stride[axis] == 0 || input[axis] == 0 {
                return Err(Error::dim("conv_transpose2d", format!("degenerate geometry {self:?}")));
            }
            if self.output_padding[axis] >= self.stride[axis] {
                return Err(Error::dim(
                    "conv_transpose2d",
                    format!(
                        "output padding {} on axis {} must be smaller than stride {}",
                        self.output_padding[axis],
                        axis + 2,
                        self.stride[axis]
                    ),
                ));
            }
            let grown = (input[axis] - 1) * self.stride[axis] + self.kernel[axis] + self.output_padding[axis];
            if grown <= 2 * self.padding[axis] {
                return Err(Error::dim(
                    "conv_transpose2d",
                    format!(
                        "axis {} collapses to zero size with padding {}",
                        axis + 2,
                        self.padding[axis]
                    ),
                ));
            }
            out[axis] = grown - 2 * self.padding[axis];
        }
        Ok(out)
    }
}

fn check_bias(op: &'static str, bias: &Tensor, channels: usize) -> Result<()> {
    if bias.shape() != [channels] {
        return Err(Error::dim(
            op,
            format!(
                "bias shape {:?} does not match {channels} output channels (axis 1)",
                bias.shape()
            ),
        ));
    }
    Ok(())
}

fn check_kernel(op: &'static str, weight: [usize; 4], spec: &ConvSpec) -> Result<()> {
    if [weight[2], weight[3]] != spec.kernel {
        return Err(Error::dim(
            op,
            format!(
                "weight kernel axes 2,3 are {}x{} but spec says {}x{}",
                weight[2], weight[3], spec.kernel[0], spec.kernel[1]
            ),
        ));
    }
    Ok(())
}

fn conv_geometry(x: [usize; 4], spec: &ConvSpec, out: [usize; 2]) -> Geometry {
    Geometry {
        channels: x[1],
        height: x[2],
        width: x[3],
        kernel: spec.kernel,
        stride: spec.stride,
        padding: spec.padding,
        out_height: out[0],
        out_width: out[1],
    }
}

impl Graph {
    /// Cross-correlation of `[N, C, H, W]` input with `[O, C, kh, kw]` weights.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, spec: ConvSpec) -> Result<Var> {
        const OP: &str = "conv2d";
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let xd = x.dims4(OP)?;
        let wd = w.dims4(OP)?;
        if xd[1] != wd[1] {
            return Err(Error::dim(
                OP,
                format!(
                    "input axis 1 has {} channels but weight axis 1 expects {}",
                    xd[1], wd[1]
                ),
            ));
        }
        check_kernel(OP, wd, &spec)?;
        check_bias(OP, b, wd[0])?;
        let out = spec.conv_output_size([xd[2], xd[3]])?;
        let geom = conv_geometry(xd, &spec, out);
        let (k, p, o) = (geom.col_rows(), geom.col_cols(), wd[0]);
        let in_len = xd[1] * xd[2] * xd[3];
        let mut data = vec![0.0f32; xd[0] * o * p];
        map_ordered(
            xd[0],
            |i| {
                let col = im2col(&x.data()[i * in_len..(i + 1) * in_len], &geom);
                gemm_nn(o, k, p, w.data(), &col)
            },
            |i, acc| {
                let dst = &mut data[i * o * p..(i + 1) * o * p];
                for (oc, (d_row, a_row)) in dst.chunks_mut(p).zip(acc.chunks(p)).enumerate() {
                    let bias = b.data()[oc] as f64;
                    for (d, a) in d_row.iter_mut().zip(a_row) {
                        *d = (a + bias) as f32;
                    }
                }
            },
        );
        let value = Tensor::new(vec![xd[0], o, out[0], out[1]], data)?;
        self.push(
            OP,
            Op::Conv2d {
                input,
                weight,
                bias,
                spec,
            },
            value,
            &[input, weight, bias],
        )
    }

    /// Transposed convolution: `[N, Cin, H, W]` input with `[Cin, Cout, kh, kw]`
    /// weights. Its linear part is the exact adjoint of [`Graph::conv2d`] with
    /// the same weights and spec.
    pub fn conv_transpose2d(&mut self, input: Var, weight: Var, bias: Var, spec: ConvSpec) -> Result<Var> {
        const OP: &str = "conv_transpose2d";
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        let xd = x.dims4(OP)?;
        let wd = w.dims4(OP)?;
        if xd[1] != wd[0] {
            return Err(Error::dim(
                OP,
                format!(
                    "input axis 1 has {} channels but weight axis 0 expects {}",
                    xd[1], wd[0]
                ),
            ));
        }
        check_kernel(OP, wd, &spec)?;
        check_bias(OP, b, wd[1])?;
        let out = spec.transpose_output_size([xd[2], xd[3]])?;
        let geom = Geometry {
            channels: wd[1],
            height: out[0],
            width: out[1],
            kernel: spec.kernel,
            stride: spec.stride,
            padding: spec.padding,
            out_height: xd[2],
            out_width: xd[3],
        };
        let (k, p, cin, cout) = (geom.col_rows(), geom.col_cols(), xd[1], wd[1]);
        let plane = out[0] * out[1];
        let mut data = vec![0.0f32; xd[0] * cout * plane];
        map_ordered(
            xd[0],
            |i| {
                let col = gemm_tn(k, cin, p, w.data(), &x.data()[i * cin * p..(i + 1) * cin * p]);
                col2im(&col, &geom)
            },
            |i, img| {
                let dst = &mut data[i * cout * plane..(i + 1) * cout * plane];
                for (oc, (d_row, a_row)) in dst.chunks_mut(plane).zip(img.chunks(plane)).enumerate() {
                    let bias = b.data()[oc] as f64;
                    for (d, a) in d_row.iter_mut().zip(a_row) {
                        *d = (a + bias) as f32;
                    }
                }
            },
        );
        let value = Tensor::new(vec![xd[0], cout, out[0], out[1]], data)?;
        self.push(
            OP,
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                spec,
            },
            value,
            &[input, weight, bias],
        )
    }
}

fn bias_grad(gy: &[f32], n: usize, channels: usize, plane: usize) -> Vec<f32> {
    (0..channels)
        .map(|c| {
            let mut s = 0.0f64;
            for i in 0..n {
                let start = (i * channels + c) * plane;
                s += gy[start..start + plane].iter().map(|&v| v as f64).sum::<f64>();
            }
            s as f32
        })
        .collect()
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

pub(super) fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    spec: &ConvSpec,
    gy: &[f32],
    needs: [bool; 3],
) -> [Option<Vec<f32>>; 3] {
    let xd = x.dims4("conv2d").expect("validated in forward");
    let wd = w.dims4("conv2d").expect("validated in forward");
    let out = spec.conv_output_size([xd[2], xd[3]]).expect("validated in forward");
    let geom = conv_geometry(xd, spec, out);
    let (k, p, o) = (geom.col_rows(), geom.col_cols(), wd[0]);
    let in_len = xd[1] * xd[2] * xd[3];

    let mut dx = needs[0].then(|| vec![0.0f32; x.numel()]);
    let mut dw = needs[1].then(|| vec![0.0f64; w.numel()]);
    if needs[0] || needs[1] {
        map_ordered(
            xd[0],
            |i| {
                let gy_i = &gy[i * o * p..(i + 1) * o * p];
                let col = im2col(&x.data()[i * in_len..(i + 1) * in_len], &geom);
                let dw_i = needs[1].then(|| gemm_nt(o, p, k, gy_i, &col));
                let dx_i = needs[0].then(|| col2im(&gemm_tn(k, o, p, w.data(), gy_i), &geom));
                (dx_i, dw_i)
            },
            |i, (dx_i, dw_i)| {
                if let (Some(dx), Some(dx_i)) = (dx.as_mut(), dx_i) {
                    for (d, v) in dx[i * in_len..(i + 1) * in_len].iter_mut().zip(dx_i) {
                        *d = v as f32;
                    }
                }
                if let (Some(dw), Some(dw_i)) = (dw.as_mut(), dw_i) {
                    dw.iter_mut().zip(dw_i).for_each(|(a, v)| *a += v);
                }
            },
        );
    }
    let db = needs[2].then(|| bias_grad(gy, xd[0], o, p));
    [dx, dw.map(|d| to_f32(&d)), db]
}

pub(super) fn conv_transpose2d_backward(
    x: &Tensor,
    w: &Tensor,
    spec: &ConvSpec,
    gy: &[f32],
    needs: [bool; 3],
) -> [Option<Vec<f32>>; 3] {
    let xd = x.dims4("conv_transpose2d").expect("validated in forward");
    let wd = w.dims4("conv_transpose2d").expect("validated in forward");
    let out = spec
        .transpose_output_size([xd[2], xd[3]])
        .expect("validated in forward");
    let geom = Geometry {
        channels: wd[1],
        height: out[0],
        width: out[1],
        kernel: spec.kernel,
        stride: spec.stride,
        padding: spec.padding,
        out_height: xd[2],
        out_width: xd[3],
    };
    let (k, p, cin, cout) = (geom.col_rows(), geom.col_cols(), xd[1], wd[1]);
    let out_len = cout * out[0] * out[1];

    let mut dx = needs[0].then(|| vec![0.0f32; x.numel()]);
    let mut dw = needs[1].then(|| vec![0.0f64; w.numel()]);
    if needs[0] || needs[1] {
        map_ordered(
            xd[0],
            |i| {
                let dcol = im2col(&gy[i * out_len..(i + 1) * out_len], &geom);
                let dx_i = needs[0].then(|| gemm_nn(cin, k, p, w.data(), &dcol));
                let dw_i = needs[1].then(|| gemm_nt(cin, p, k, &x.data()[i * cin * p..(i + 1) * cin * p], &dcol));
                (dx_i, dw_i)
            },
            |i, (dx_i, dw_i)| {
                if let (Some(dx), Some(dx_i)) = (dx.as_mut(), dx_i) {
                    for (d, v) in dx[i * cin * p..(i + 1) * cin * p].iter_mut().zip(dx_i) {
                        *d = v as f32;
                    }
                }
                if let (Some(dw), Some(dw_i)) = (dw.as_mut(), dw_i) {
                    dw.iter_mut().zip(dw_i).for_each(|(a, v)| *a += v);
                }
            },
        );
    }
    let db = needs[2].then(|| bias_grad(gy, xd[0], cout, out[0] * out[1]));
    [dx, dw.map(|d| to_f32(&d)), db]
}
