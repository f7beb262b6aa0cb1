//! Causal discrete convolution on a shared uniform grid.
//!
//! `y[n] = dt · Σ_{k=0..=n} a[k]·b[n-k]`, truncated to the grid length.
//! Short inputs use direct summation, long ones go through an FFT.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Grid length at or above which the FFT path is used.
pub const FFT_THRESHOLD: usize = 4096;

/// Full linear convolution by direct summation, length `a.len() + b.len() - 1`.
pub fn direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (o, &y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

/// Full linear convolution through a zero-padded complex FFT.
pub fn fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let n_out = a.len() + b.len() - 1;
    let n = n_out.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);

    // Pack both real inputs into one complex transform. Each is scaled to
    // unit peak first so neither drowns in the other's roundoff.
    let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (sa, sb) = (peak(a), peak(b));
    if sa == 0.0 || sb == 0.0 {
        return vec![0.0; n_out];
    }
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|i| Complex::new(a.get(i).map_or(0.0, |x| x / sa), b.get(i).map_or(0.0, |x| x / sb)))
        .collect();
    forward.process(&mut buf);
    let mut prod = vec![Complex::new(0.0, 0.0); n];
    for k in 0..n {
        let zk = buf[k];
        let zn = buf[(n - k) % n].conj();
        let fa = (zk + zn) * 0.5;
        let fb = (zk - zn) * Complex::new(0.0, -0.5);
        prod[k] = fa * fb;
    }
    inverse.process(&mut prod);
    let scale = sa * sb / n as f64;
    prod.truncate(n_out);
    prod.into_iter().map(|c| c.re * scale).collect()
}

/// Grid convolution truncated to `len` samples and scaled by `dt`.
pub fn causal(a: &[f64], b: &[f64], dt: f64, len: usize) -> Vec<f64> {
    let a = &a[..a.len().min(len)];
    let b = &b[..b.len().min(len)];
    let mut full = if len >= FFT_THRESHOLD {
        fft(a, b)
    } else {
        direct(a, b)
    };
    full.resize(len, 0.0);
    for v in &mut full {
        *v *= dt;
    }
    full
}
