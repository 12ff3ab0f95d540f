use std::f64::consts::PI;

/// Geometric Fourier features of a normalised time `u`:
/// `[sin(π 2^k u), cos(π 2^k u)]` for `k = 0..n_freq`, interleaved per frequency.
///
/// `u` is clamped into `[0, 1]`.
pub fn fourier_time_features(u: f64, n_freq: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * n_freq];
    write_fourier_time_features(u, &mut out);
    out
}

pub(crate) fn write_fourier_time_features(u: f64, out: &mut [f64]) {
    let u = u.clamp(0.0, 1.0);
    for (k, pair) in out.chunks_exact_mut(2).enumerate() {
        let angle = PI * (1u64 << k) as f64 * u;
        pair[0] = angle.sin();
        pair[1] = angle.cos();
    }
}

/// Transformer-style sinusoidal encoding of an integer position.
pub fn sinusoidal_position(pos: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    write_sinusoidal_position(pos, &mut out);
    out
}

pub(crate) fn write_sinusoidal_position(pos: usize, out: &mut [f64]) {
    let dim = out.len();
    for (i, pair) in out.chunks_mut(2).enumerate() {
        let rate = 10000f64.powf(-((2 * i) as f64) / dim as f64);
        let angle = pos as f64 * rate;
        pair[0] = angle.sin();
        if pair.len() > 1 {
            pair[1] = angle.cos();
        }
    }
}
