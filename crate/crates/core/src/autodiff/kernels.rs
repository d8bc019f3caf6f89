//! Dense kernels behind the tape ops. All images are channel-major `[C, H, W]`.

use super::tensor::Real;

pub(crate) const NORM_EPS: f64 = 1e-6;

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Unfolds `x` into `[C·k·k, H·W]` columns with zero padding `k/2`.
fn im2col<T: Real>(x: &[T], (c, h, w): (usize, usize, usize), k: usize) -> Vec<T> {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut cols = vec![T::zero(); c * k * k * hw];
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let out = &mut dst[y * w..(y + 1) * w];
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    for xx in x0..x1 {
                        out[xx] = src[(xx as isize + dx) as usize];
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], (c, h, w): (usize, usize, usize), k: usize) -> Vec<T> {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut x = vec![T::zero(); c * hw];
    for ch in 0..c {
        let plane = &mut x[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    for xx in x0..x1 {
                        let t = &mut plane[sy as usize * w + (xx as isize + dx) as usize];
                        *t = *t + src[y * w + xx];
                    }
                }
            }
        }
    }
    x
}

pub(crate) fn conv2d_forward<T: Real>(
    x: &[T],
    dims: (usize, usize, usize),
    weight: &[T],
    bias: &[T],
    cout: usize,
    k: usize,
) -> Vec<T> {
    let (cin, h, w) = dims;
    let hw = h * w;
    let kk = cin * k * k;
    let cols = im2col(x, dims, k);
    let mut out = Vec::with_capacity(cout * hw);
    for b in bias {
        out.extend(std::iter::repeat_n(*b, hw));
    }
    T::gemm(
        cout,
        kk,
        hw,
        T::one(),
        weight,
        (kk as isize, 1),
        &cols,
        (hw as isize, 1),
        T::one(),
        &mut out,
        (hw as isize, 1),
    );
    out
}

/// Returns `(dx, dweight, dbias)`; the first two only when requested.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Real>(
    x: &[T],
    dims: (usize, usize, usize),
    weight: &[T],
    cout: usize,
    k: usize,
    grad: &[T],
    want_dx: bool,
    want_dw: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Vec<T>) {
    let (cin, h, w) = dims;
    let hw = h * w;
    let kk = cin * k * k;
    let dw = want_dw.then(|| {
        let cols = im2col(x, dims, k);
        let mut dw = vec![T::zero(); cout * kk];
        T::gemm(
            cout,
            hw,
            kk,
            T::one(),
            grad,
            (hw as isize, 1),
            &cols,
            (1, hw as isize),
            T::zero(),
            &mut dw,
            (kk as isize, 1),
        );
        dw
    });
    let db = (0..cout)
        .map(|o| grad[o * hw..(o + 1) * hw].iter().copied().sum())
        .collect();
    let dx = want_dx.then(|| {
        let mut dcols = vec![T::zero(); kk * hw];
        T::gemm(
            kk,
            cout,
            hw,
            T::one(),
            weight,
            (1, kk as isize),
            grad,
            (hw as isize, 1),
            T::zero(),
            &mut dcols,
            (hw as isize, 1),
        );
        col2im(&dcols, dims, k)
    });
    (dx, dw, db)
}

/// Returns `(y, xhat, rstd)`.
pub(crate) fn instance_norm_forward<T: Real>(
    x: &[T],
    c: usize,
    plane: usize,
    gamma: &[T],
    beta: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = T::of(plane as f64);
    let eps = T::of(NORM_EPS);
    let mut y = Vec::with_capacity(x.len());
    let mut xhat = Vec::with_capacity(x.len());
    let mut rstd = Vec::with_capacity(c);
    for ch in 0..c {
        let p = &x[ch * plane..(ch + 1) * plane];
        let mean = p.iter().copied().sum::<T>() / n;
        let var = p.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let r = T::one() / (var + eps).sqrt();
        rstd.push(r);
        for &v in p {
            let h = (v - mean) * r;
            xhat.push(h);
            y.push(h * gamma[ch] + beta[ch]);
        }
    }
    (y, xhat, rstd)
}

pub(crate) fn instance_norm_backward<T: Real>(
    grad: &[T],
    xhat: &[T],
    rstd: &[T],
    gamma: &[T],
    c: usize,
    plane: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = T::of(plane as f64);
    let mut dx = Vec::with_capacity(grad.len());
    let mut dgamma = Vec::with_capacity(c);
    let mut dbeta = Vec::with_capacity(c);
    for ch in 0..c {
        let g = &grad[ch * plane..(ch + 1) * plane];
        let h = &xhat[ch * plane..(ch + 1) * plane];
        let sum_g: T = g.iter().copied().sum();
        let sum_gh: T = g.iter().zip(h).map(|(a, b)| *a * *b).sum();
        dgamma.push(sum_gh);
        dbeta.push(sum_g);
        let scale = gamma[ch] * rstd[ch] / n;
        for (gi, hi) in g.iter().zip(h) {
            dx.push(scale * (n * *gi - sum_g - *hi * sum_gh));
        }
    }
    (dx, dgamma, dbeta)
}

/// Normalizes across channels at every pixel. Returns `(y, xhat, rstd)`
/// with one `rstd` per pixel.
pub(crate) fn channel_norm_forward<T: Real>(
    x: &[T],
    c: usize,
    plane: usize,
    gamma: &[T],
    beta: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = T::of(c as f64);
    let eps = T::of(NORM_EPS);
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = Vec::with_capacity(plane);
    for p in 0..plane {
        let mean = (0..c).map(|ch| x[ch * plane + p]).sum::<T>() / n;
        let var = (0..c).map(|ch| (x[ch * plane + p] - mean) * (x[ch * plane + p] - mean)).sum::<T>() / n;
        let r = T::one() / (var + eps).sqrt();
        rstd.push(r);
        for ch in 0..c {
            let i = ch * plane + p;
            let h = (x[i] - mean) * r;
            xhat[i] = h;
            y[i] = h * gamma[ch] + beta[ch];
        }
    }
    (y, xhat, rstd)
}

pub(crate) fn channel_norm_backward<T: Real>(
    grad: &[T],
    xhat: &[T],
    rstd: &[T],
    gamma: &[T],
    c: usize,
    plane: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = T::of(c as f64);
    let mut dx = vec![T::zero(); grad.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for p in 0..plane {
        let mut sum_d = T::zero();
        let mut sum_dh = T::zero();
        for ch in 0..c {
            let i = ch * plane + p;
            let d = grad[i] * gamma[ch];
            sum_d = sum_d + d;
            sum_dh = sum_dh + d * xhat[i];
            dgamma[ch] = dgamma[ch] + grad[i] * xhat[i];
            dbeta[ch] = dbeta[ch] + grad[i];
        }
        let scale = rstd[p] / n;
        for ch in 0..c {
            let i = ch * plane + p;
            dx[i] = scale * (n * grad[i] * gamma[ch] - sum_d - xhat[i] * sum_dh);
        }
    }
    (dx, dgamma, dbeta)
}

pub(crate) fn avg_pool2<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let q = T::of(0.25);
    let mut y = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let p = &x[ch * h * w..(ch + 1) * h * w];
        for r in 0..oh {
            for col in 0..ow {
                let i = 2 * r * w + 2 * col;
                y.push((p[i] + p[i + 1] + p[i + w] + p[i + w + 1]) * q);
            }
        }
    }
    y
}

pub(crate) fn avg_pool2_backward<T: Real>(g: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let q = T::of(0.25);
    let mut dx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for r in 0..oh {
            for col in 0..ow {
                let v = g[(ch * oh + r) * ow + col] * q;
                let i = ch * h * w + 2 * r * w + 2 * col;
                dx[i] = v;
                dx[i + 1] = v;
                dx[i + w] = v;
                dx[i + w + 1] = v;
            }
        }
    }
    dx
}

pub(crate) fn upsample2<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let ow = 2 * w;
    let mut y = vec![T::zero(); c * 4 * h * w];
    for ch in 0..c {
        for r in 0..2 * h {
            for col in 0..ow {
                y[(ch * 2 * h + r) * ow + col] = x[(ch * h + r / 2) * w + col / 2];
            }
        }
    }
    y
}

/// `dims` are those of the (smaller) input.
pub(crate) fn upsample2_backward<T: Real>(g: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let ow = 2 * w;
    let mut dx = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for r in 0..2 * h {
            for col in 0..ow {
                let t = &mut dx[(ch * h + r / 2) * w + col / 2];
                *t = *t + g[(ch * 2 * h + r) * ow + col];
            }
        }
    }
    dx
}

pub(crate) fn transpose<T: Real>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut y = vec![T::zero(); x.len()];
    for r in 0..rows {
        for c in 0..cols {
            y[c * rows + r] = x[r * cols + c];
        }
    }
    y
}

pub(crate) fn softmax_rows<T: Real>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut y = Vec::with_capacity(x.len());
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = y.len();
        y.extend(row.iter().map(|&v| (v - m).exp()));
        let s: T = y[start..].iter().copied().sum();
        for v in &mut y[start..] {
            *v = *v / s;
        }
    }
    y
}
