use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    PerMeter,
    PerSecond,
    Hertz,
    Henry,
    Unitless,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::PerMeter => "1/m",
            Unit::PerSecond => "1/s",
            Unit::Hertz => "Hz",
            Unit::Henry => "H",
            Unit::Unitless => "1",
        })
    }
}

/// Uniform time grid `t_k = k·dt`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, len: usize) -> Self {
        assert!(dt.is_finite() && dt > 0.0, "time step must be positive");
        Self { dt, len }
    }

    /// Smallest grid with step `dt` that reaches `horizon`.
    pub fn covering(dt: f64, horizon: f64) -> Self {
        Self::new(dt, (horizon / dt).ceil() as usize + 1)
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.len.saturating_sub(1))
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|k| self.time(k))
    }
}

/// Uniformly sampled function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
    pub unit: Unit,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>, unit: Unit) -> Self {
        assert!(dt.is_finite() && dt > 0.0, "time step must be positive");
        debug_assert!(samples.iter().all(|x| x.is_finite()), "non-finite sample");
        Self {
            t0,
            dt,
            samples,
            unit,
        }
    }

    pub fn on_grid(grid: TimeGrid, samples: Vec<f64>, unit: Unit) -> Self {
        debug_assert_eq!(grid.len, samples.len());
        Self::new(0.0, grid.dt, samples, unit)
    }

    pub fn from_fn(grid: TimeGrid, unit: Unit, f: impl Fn(f64) -> f64) -> Self {
        Self::on_grid(grid, grid.times().map(f).collect(), unit)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.time(k))
    }

    pub fn map(&self, unit: Unit, f: impl Fn(f64) -> f64) -> Self {
        Self::new(
            self.t0,
            self.dt,
            self.samples.iter().map(|&x| f(x)).collect(),
            unit,
        )
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(self.unit, |x| factor * x)
    }

    /// `dt · Σ samples`; equals the trapezoid rule whenever both end samples
    /// vanish.
    pub fn integral(&self) -> f64 {
        self.dt * self.samples.iter().sum::<f64>()
    }

    pub fn trapezoid(&self) -> f64 {
        crate::quadrature::trapezoid_uniform(&self.samples, self.dt)
    }
}
