//! Batched layer primitives over row-major matrices.

pub(crate) const LN_EPS: f64 = 1e-5;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[r] += W x[r]` for `W: d_out × d_in`.
pub(crate) fn dense_accumulate(w: &[f64], x: &[f64], rows: usize, d_in: usize, d_out: usize, out: &mut [f64]) {
    for r in 0..rows {
        let xr = &x[r * d_in..(r + 1) * d_in];
        let or = &mut out[r * d_out..(r + 1) * d_out];
        for (o, val) in or.iter_mut().enumerate() {
            *val += dot(&w[o * d_in..(o + 1) * d_in], xr);
        }
    }
}

/// `out[r] = W x[r] + b`.
pub(crate) fn dense_forward(
    w: &[f64],
    b: &[f64],
    x: &[f64],
    rows: usize,
    d_in: usize,
    d_out: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * d_out);
    for _ in 0..rows {
        out.extend_from_slice(b);
    }
    dense_accumulate(w, x, rows, d_in, d_out, &mut out);
    out
}

/// Accumulates weight (and optionally bias) gradients, and optionally the
/// input gradient, for `z = W x + b` given `dz`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    w: &[f64],
    x: &[f64],
    dz: &[f64],
    rows: usize,
    d_in: usize,
    d_out: usize,
    gw: &mut [f64],
    mut gb: Option<&mut [f64]>,
    mut dx: Option<&mut [f64]>,
) {
    for r in 0..rows {
        let xr = &x[r * d_in..(r + 1) * d_in];
        let dzr = &dz[r * d_out..(r + 1) * d_out];
        for (o, &g) in dzr.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            axpy(g, xr, &mut gw[o * d_in..(o + 1) * d_in]);
            if let Some(dx) = dx.as_deref_mut() {
                axpy(g, &w[o * d_in..(o + 1) * d_in], &mut dx[r * d_in..(r + 1) * d_in]);
            }
        }
        if let Some(gb) = gb.as_deref_mut() {
            for (b, &g) in gb.iter_mut().zip(dzr) {
                *b += g;
            }
        }
    }
}

/// Layer norm with learnable gain/offset. Fills `normed` and `inv_std` for the
/// backward pass and returns the affine output.
pub(crate) fn layer_norm_forward(
    z: &[f64],
    rows: usize,
    d: usize,
    gain: &[f64],
    offset: &[f64],
    normed: &mut Vec<f64>,
    inv_std: &mut Vec<f64>,
) -> Vec<f64> {
    normed.clear();
    inv_std.clear();
    normed.reserve(rows * d);
    let mut out = Vec::with_capacity(rows * d);
    for r in 0..rows {
        let zr = &z[r * d..(r + 1) * d];
        let mean = zr.iter().sum::<f64>() / d as f64;
        let var = zr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(is);
        for (j, &v) in zr.iter().enumerate() {
            let n = (v - mean) * is;
            normed.push(n);
            out.push(gain[j] * n + offset[j]);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_norm_backward(
    dy: &[f64],
    normed: &[f64],
    inv_std: &[f64],
    gain: &[f64],
    rows: usize,
    d: usize,
    g_gain: &mut [f64],
    g_offset: &mut [f64],
) -> Vec<f64> {
    let mut dz = vec![0.0; rows * d];
    let inv_d = 1.0 / d as f64;
    let mut dn = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let nr = &normed[r * d..(r + 1) * d];
        let mut sum_dn = 0.0;
        let mut sum_dn_n = 0.0;
        for j in 0..d {
            g_gain[j] += dyr[j] * nr[j];
            g_offset[j] += dyr[j];
            dn[j] = dyr[j] * gain[j];
            sum_dn += dn[j];
            sum_dn_n += dn[j] * nr[j];
        }
        let is = inv_std[r];
        let dzr = &mut dz[r * d..(r + 1) * d];
        for j in 0..d {
            dzr[j] = is * (dn[j] - inv_d * sum_dn - nr[j] * inv_d * sum_dn_n);
        }
    }
    dz
}

pub(crate) fn tanh_inplace(v: &mut [f64]) {
    for x in v {
        *x = x.tanh();
    }
}

/// `d_pre = d_act * (1 - act^2)`.
pub(crate) fn tanh_backward(act: &[f64], d_act: &[f64]) -> Vec<f64> {
    act.iter().zip(d_act).map(|(a, g)| g * (1.0 - a * a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_output_is_standardized() {
        let z = vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 5.0, 2.0];
        let (mut n, mut s) = (Vec::new(), Vec::new());
        let y = layer_norm_forward(&z, 2, 4, &[1.0; 4], &[0.0; 4], &mut n, &mut s);
        for r in 0..2 {
            let row = &y[r * 4..(r + 1) * 4];
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
