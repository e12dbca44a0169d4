use super::{shape_err, Result, Tensor};

/// 2-D cross-correlation with zero padding. `input` is `[C_in,H,W]`,
/// `kernel` is `[C_out,C_in,kh,kw]`, `bias` is `[C_out]`.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    if input.rank() != 3 || kernel.rank() != 4 || bias.rank() != 1 {
        return shape_err(format!(
            "conv2d ranks: input {:?}, kernel {:?}, bias {:?}",
            input.dims(),
            kernel.dims(),
            bias.dims()
        ));
    }
    if stride == 0 {
        return shape_err("conv2d stride must be positive");
    }
    let (c_in, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    let (c_out, k_in, kh, kw) = (kernel.dims()[0], kernel.dims()[1], kernel.dims()[2], kernel.dims()[3]);
    if k_in != c_in || bias.dims()[0] != c_out {
        return shape_err(format!(
            "conv2d channels: input {:?}, kernel {:?}, bias {:?}",
            input.dims(),
            kernel.dims(),
            bias.dims()
        ));
    }
    let (hp, wp) = (h + 2 * padding, w + 2 * padding);
    if kh > hp || kw > wp {
        return shape_err(format!("conv2d kernel {kh}x{kw} larger than padded input {hp}x{wp}"));
    }
    let out_h = (hp - kh) / stride + 1;
    let out_w = (wp - kw) / stride + 1;

    let x = input.data();
    let k = kernel.data();
    let mut out = vec![0f32; c_out * out_h * out_w];
    for oc in 0..c_out {
        let b = bias.data()[oc];
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = b;
                for ic in 0..c_in {
                    let k_base = (oc * c_in + ic) * kh * kw;
                    let x_base = ic * h * w;
                    for ky in 0..kh {
                        // padded coordinates; skip rows that fall in the zero border
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = x_base + iy as usize * w;
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += k[k_base + ky * kw + kx] * x[row + ix as usize];
                        }
                    }
                }
                out[(oc * out_h + oy) * out_w + ox] = acc;
            }
        }
    }
    Tensor::new(vec![c_out, out_h, out_w], out)
}

/// `out[m] = Σ_n weight[m,n]·input[n] + bias[m]`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if input.rank() != 1
        || weight.rank() != 2
        || bias.rank() != 1
        || weight.dims()[1] != input.dims()[0]
        || weight.dims()[0] != bias.dims()[0]
    {
        return shape_err(format!(
            "linear: input {:?}, weight {:?}, bias {:?}",
            input.dims(),
            weight.dims(),
            bias.dims()
        ));
    }
    let n = input.len();
    let out = weight
        .data()
        .chunks_exact(n)
        .zip(bias.data())
        .map(|(row, b)| row.iter().zip(input.data()).map(|(w, x)| w * x).sum::<f32>() + b)
        .collect();
    Tensor::from_vec(out)
}

/// Plain `[M,K]·[K,N]` matrix product.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.dims()[1] != b.dims()[0] {
        return shape_err(format!("matmul {:?} x {:?}", a.dims(), b.dims()));
    }
    let (m, k, n) = (a.dims()[0], a.dims()[1], b.dims()[1]);
    let mut out = vec![0f32; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a.data()[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b.data()[p * n..(p + 1) * n];
            for (o, bv) in out[i * n..(i + 1) * n].iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Numerically stable softmax over a rank-1 tensor.
pub fn softmax(input: &Tensor) -> Result<Tensor> {
    if input.rank() != 1 {
        return shape_err(format!("softmax expects rank 1, got {:?}", input.dims()));
    }
    let mut out = input.data().to_vec();
    softmax_in_place(&mut out);
    Tensor::from_vec(out)
}

/// Applies a shared linear map to every row: `[T,In]·Wᵀ + b → [T,Out]`.
pub(crate) fn project(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if x.rank() != 2
        || weight.rank() != 2
        || bias.rank() != 1
        || weight.dims()[1] != x.dims()[1]
        || weight.dims()[0] != bias.dims()[0]
    {
        return shape_err(format!(
            "project: input {:?}, weight {:?}, bias {:?}",
            x.dims(),
            weight.dims(),
            bias.dims()
        ));
    }
    let (t, n) = (x.dims()[0], x.dims()[1]);
    let m = weight.dims()[0];
    let mut out = Vec::with_capacity(t * m);
    for row in x.data().chunks_exact(n) {
        for (wrow, b) in weight.data().chunks_exact(n).zip(bias.data()) {
            out.push(wrow.iter().zip(row).map(|(w, v)| w * v).sum::<f32>() + b);
        }
    }
    Tensor::new(vec![t, m], out)
}

/// Row-wise softmax over a flat `[rows, width]` buffer.
pub(crate) fn softmax_rows(data: &mut [f32], width: usize) {
    for row in data.chunks_exact_mut(width) {
        softmax_in_place(row);
    }
}

pub(crate) fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut total = 0f32;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

/// Non-overlapping `size`×`size` average pooling on `[C,H,W]`; trailing
/// rows/columns that do not fill a window are dropped.
pub fn avg_pool2d(input: &Tensor, size: usize) -> Result<Tensor> {
    if input.rank() != 3 || size == 0 {
        return shape_err(format!("avg_pool2d on {:?}", input.dims()));
    }
    let (c, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    if h < size || w < size {
        return shape_err(format!("avg_pool2d window {size} larger than {h}x{w}"));
    }
    let (oh, ow) = (h / size, w / size);
    let norm = (size * size) as f32;
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0f32;
                for dy in 0..size {
                    let row = (ch * h + oy * size + dy) * w + ox * size;
                    acc += x[row..row + size].iter().sum::<f32>();
                }
                out.push(acc / norm);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Splits `len` into `parts` contiguous windows whose sizes differ by at most
/// one, longer windows first. Returns `(start, size)` pairs.
pub fn adaptive_windows(len: usize, parts: usize) -> Vec<(usize, usize)> {
    assert!(parts > 0 && parts <= len, "cannot split {len} into {parts}");
    let base = len / parts;
    let extra = len % parts;
    let mut start = 0;
    (0..parts)
        .map(|i| {
            let size = base + usize::from(i < extra);
            let win = (start, size);
            start += size;
            win
        })
        .collect()
}

/// Averages each row of a `[rows, T]` matrix (or each channel row of a
/// `[C, rows, T]` map) down to `t_out` time steps.
pub fn adaptive_avg_pool_time(input: &Tensor, t_out: usize) -> Result<Tensor> {
    let t_in = *input.dims().last().expect("rank >= 1");
    if t_out == 0 || t_out > t_in {
        return shape_err(format!("cannot pool time axis {t_in} to {t_out}"));
    }
    let windows = adaptive_windows(t_in, t_out);
    let out: Vec<f32> = input
        .data()
        .chunks_exact(t_in)
        .flat_map(|row| {
            windows
                .iter()
                .map(move |&(start, size)| row[start..start + size].iter().sum::<f32>() / size as f32)
        })
        .collect();
    let mut dims = input.dims().to_vec();
    *dims.last_mut().unwrap() = t_out;
    Tensor::new(dims, out)
}

/// Adaptive average pooling of `[C,H,W]` to `[C,out_h,out_w]` using the same
/// window rule as [`adaptive_avg_pool_time`] on both spatial axes.
pub fn adaptive_avg_pool2d(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if input.rank() != 3 {
        return shape_err(format!("adaptive_avg_pool2d on {:?}", input.dims()));
    }
    let (c, h, w) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    if out_h == 0 || out_w == 0 || out_h > h || out_w > w {
        return shape_err(format!("cannot pool {h}x{w} to {out_h}x{out_w}"));
    }
    let rows = adaptive_windows(h, out_h);
    let cols = adaptive_windows(w, out_w);
    let x = input.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        for &(ry, sy) in &rows {
            for &(rx, sx) in &cols {
                let mut acc = 0f32;
                for y in ry..ry + sy {
                    let row = (ch * h + y) * w;
                    acc += x[row + rx..row + rx + sx].iter().sum::<f32>();
                }
                out.push(acc / (sy * sx) as f32);
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> Option<usize> {
    let mut best: Option<(usize, f32)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
