//! Trapezoidal quadrature and linear interpolation helpers.

pub fn trapezoid_uniform(y: &[f64], h: f64) -> f64 {
    match y {
        [] | [_] => 0.0,
        [first, inner @ .., last] => h * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Trapezoid rule on an arbitrary increasing grid.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Linear interpolation on an increasing grid; `None` outside `[x0, xn]`.
pub fn interpolate(x: &[f64], y: &[f64], at: f64) -> Option<f64> {
    let (&lo, &hi) = (x.first()?, x.last()?);
    if !(at >= lo && at <= hi) {
        return None;
    }
    let k = x.partition_point(|&v| v <= at);
    if k == 0 {
        return Some(y[0]);
    }
    if k == x.len() {
        return Some(y[x.len() - 1]);
    }
    let (x0, x1) = (x[k - 1], x[k]);
    let w = (at - x0) / (x1 - x0);
    Some(y[k - 1] + w * (y[k] - y[k - 1]))
}

/// `n` equally spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { b } else { a + i as f64 * h })
                .collect()
        }
    }
}
