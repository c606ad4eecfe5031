//! Dense building blocks: 3x3 convolution via im2col + GEMM, 2x2 average
//! pooling, global average pooling and linear layers.

/// `c = alpha * a(m x k) * b(k x n) + beta * c`, all row-major, with
/// optional transposition of `a` or `b` given as strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slice lengths match the stated dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfolds a `c x h x w` input into `(c * 9) x (h * w)` patches with zero
/// padding of one pixel.
pub fn im2col(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut col = vec![0.0; c * 9 * hw];
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            dst[xx] = src[sx as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`].
pub fn col2im(col: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut x = vec![0.0; c * hw];
    for ch in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            x[ch * hw + sy as usize * w + sx as usize] += row[y * w + xx];
                        }
                    }
                }
            }
        }
    }
    x
}

/// `y(o, p) = sum_k w(o, k) col(k, p) + b(o)`.
pub fn conv_forward(col: &[f64], weight: &[f64], bias: &[f64], cout: usize, hw: usize) -> Vec<f64> {
    let k = weight.len() / cout;
    let mut y = vec![0.0; cout * hw];
    for (o, b) in bias.iter().enumerate() {
        y[o * hw..(o + 1) * hw].fill(*b);
    }
    gemm(cout, k, hw, weight, false, col, false, 1.0, &mut y);
    y
}

/// Accumulates weight and bias gradients; returns `d col` if requested.
pub fn conv_backward(
    dy: &[f64],
    col: &[f64],
    weight: &[f64],
    cout: usize,
    hw: usize,
    dweight: &mut [f64],
    dbias: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let k = weight.len() / cout;
    gemm(cout, hw, k, dy, false, col, true, 1.0, dweight);
    for o in 0..cout {
        dbias[o] += dy[o * hw..(o + 1) * hw].iter().sum::<f64>();
    }
    want_input.then(|| {
        let mut dcol = vec![0.0; k * hw];
        gemm(k, cout, hw, weight, true, dy, false, 0.0, &mut dcol);
        dcol
    })
}

/// 2x2 average pooling of a `c x h x w` map (h and w even).
pub fn avgpool2(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let base = ch * h * w + 2 * y * w + 2 * xx;
                out[ch * oh * ow + y * ow + xx] = 0.25 * (x[base] + x[base + 1] + x[base + w] + x[base + w + 1]);
            }
        }
    }
    out
}

pub fn avgpool2_backward(dout: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let g = 0.25 * dout[ch * oh * ow + y * ow + xx];
                let base = ch * h * w + 2 * y * w + 2 * xx;
                dx[base] = g;
                dx[base + 1] = g;
                dx[base + w] = g;
                dx[base + w + 1] = g;
            }
        }
    }
    dx
}

/// `y = W x + b` with `W` stored `out x in`.
pub fn linear(weight: &[f64], bias: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, b)| b + weight[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect()
}

/// Accumulates `dW += dy x^T`, `db += dy` and adds `W^T dy` into `dx`.
pub fn linear_backward(weight: &[f64], x: &[f64], dy: &[f64], dweight: &mut [f64], dbias: &mut [f64], dx: &mut [f64]) {
    let n_in = x.len();
    for (o, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        dbias[o] += g;
        let row = &weight[o * n_in..(o + 1) * n_in];
        let drow = &mut dweight[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            drow[i] += g * x[i];
            dx[i] += g * row[i];
        }
    }
}
