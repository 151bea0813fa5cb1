//! Channel-last 3D feature grids and trilinear sampling.

/// Cell-centered sampling weights along one axis for a normalized coordinate
/// `u` in `[0, 1]` over `res` cells: `(lower index, upper index, upper weight)`.
/// Coordinates beyond the outer cell centers clamp to the border.
#[inline]
pub fn axis_weights(u: f64, res: usize) -> (usize, usize, f64) {
    let x = (u * res as f64 - 0.5).clamp(0.0, (res - 1) as f64);
    let i0 = (x.floor() as usize).min(res - 1);
    let i1 = (i0 + 1).min(res - 1);
    (i0, i1, x - i0 as f64)
}

/// The 8 corner cells and weights of a trilinear lookup.
pub fn corners(u: [f64; 3], res: usize) -> [(usize, f64); 8] {
    let ax = axis_weights(u[0], res);
    let ay = axis_weights(u[1], res);
    let az = axis_weights(u[2], res);
    let mut out = [(0usize, 0.0f64); 8];
    let mut n = 0;
    for (i, wi) in [(ax.0, 1.0 - ax.2), (ax.1, ax.2)] {
        for (j, wj) in [(ay.0, 1.0 - ay.2), (ay.1, ay.2)] {
            for (k, wk) in [(az.0, 1.0 - az.2), (az.1, az.2)] {
                out[n] = ((i * res + j) * res + k, wi * wj * wk);
                n += 1;
            }
        }
    }
    out
}

/// Resamples a `[src^3, channels]` grid to `[dst^3, channels]` with
/// cell-centered trilinear interpolation.
pub fn resample(src: &[f64], src_res: usize, channels: usize, dst_res: usize) -> Vec<f64> {
    let mut out = vec![0.0; dst_res.pow(3) * channels];
    for_each_target(src_res, dst_res, |t, cs| {
        let dst = &mut out[t * channels..(t + 1) * channels];
        for (s, w) in cs {
            if *w == 0.0 {
                continue;
            }
            for (d, v) in dst.iter_mut().zip(&src[s * channels..(s + 1) * channels]) {
                *d += w * v;
            }
        }
    });
    out
}

/// Adjoint of [`resample`]: scatters target gradients back to the source grid.
pub fn resample_backward(d_dst: &[f64], src_res: usize, channels: usize, dst_res: usize) -> Vec<f64> {
    let mut d_src = vec![0.0; src_res.pow(3) * channels];
    for_each_target(src_res, dst_res, |t, cs| {
        let g = &d_dst[t * channels..(t + 1) * channels];
        for (s, w) in cs {
            if *w == 0.0 {
                continue;
            }
            for (d, v) in d_src[s * channels..(s + 1) * channels].iter_mut().zip(g) {
                *d += w * v;
            }
        }
    });
    d_src
}

fn for_each_target(src_res: usize, dst_res: usize, mut f: impl FnMut(usize, &[(usize, f64); 8])) {
    for i in 0..dst_res {
        for j in 0..dst_res {
            for k in 0..dst_res {
                let u = [i, j, k].map(|c| (c as f64 + 0.5) / dst_res as f64);
                let cs = corners(u, src_res);
                f((i * dst_res + j) * dst_res + k, &cs);
            }
        }
    }
}
