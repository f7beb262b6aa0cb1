//! Receivers: the generic weighted-integral receiver, the perfect-counting
//! special case, and the planar-coil / LC-oscillator chain that turns SPION
//! concentration into a resonance-frequency shift.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{interpolate, linspace, trapezoid};
use crate::series::{TimeGrid, TimeSeries, Unit};
use crate::transport::{ConcentrationField, PipeKinetics};

/// Manufacturer inductance of the unloaded coil, H.
pub const DEFAULT_L0: f64 = 206.227e-6;
/// Oscillator capacitance, F.
pub const DEFAULT_CAPACITANCE: f64 = 68e-12;
/// SPION reference susceptibility (SI, unitless).
pub const DEFAULT_CHI_REF: f64 = 3e-3;
/// Fitted proportionality constant of the coil weighting.
pub const DEFAULT_BETA: f64 = 5e-12;
/// Sensor noise variance, Hz² (0.3822 kHz²).
pub const DEFAULT_NOISE_VARIANCE: f64 = 0.3822e3;
/// SNR window threshold, Hz.
pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Default number of positions sampled across the receiver domain.
pub const DEFAULT_Z_POINTS: usize = 201;

#[derive(Debug, Error)]
pub enum ReceiverError {
    #[error("field profile: {0}")]
    Profile(String),
    #[error("field profile line {line}: {msg}")]
    ProfileLine { line: usize, msg: String },
    #[error("position {z} m is outside the weighting domain [{lo}, {hi}]")]
    OutsideDomain { z: f64, lo: f64, hi: f64 },
    #[error("concentration grid [{have_lo}, {have_hi}] does not cover the receiver domain [{lo}, {hi}]")]
    Coverage {
        have_lo: f64,
        have_hi: f64,
        lo: f64,
        hi: f64,
    },
    #[error("receiver domain does not overlap the receiver pipe")]
    EmptyDomain,
    #[error("{what} must be positive and finite, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("noise variance must be non-negative, got {0}")]
    NegativeVariance(f64),
    #[error("signal never falls to |Δf| <= {epsilon:e} Hz {side} (searched [{from:e}, {to:e}] s)")]
    ThresholdNotReached {
        epsilon: f64,
        side: &'static str,
        from: f64,
        to: f64,
    },
    #[error("series is empty or flat; no peak to measure")]
    NoPeak,
    #[error("peak at {time:e} s is not resolved: the series ends above half height")]
    UnresolvedPeak { time: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn positive(what: &'static str, value: f64) -> Result<f64, ReceiverError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ReceiverError::NonPositive { what, value })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProfileSource {
    File { path: String },
    Analytic { coil_radius: f64, standoff: f64 },
}

/// Peak-normalized field magnitude `|Υ(z)|` against position relative to the
/// coil center.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldProfile {
    z: Vec<f64>,
    magnitude: Vec<f64>,
    pub source: ProfileSource,
}

impl FieldProfile {
    /// Validates and peak-normalizes a sampled profile.
    pub fn new(z: Vec<f64>, magnitude: Vec<f64>, source: ProfileSource) -> Result<Self, ReceiverError> {
        if z.len() != magnitude.len() {
            return Err(ReceiverError::Profile("column lengths differ".into()));
        }
        if z.len() < 2 {
            return Err(ReceiverError::Profile("need at least two samples".into()));
        }
        if z.iter().chain(&magnitude).any(|v| !v.is_finite()) {
            return Err(ReceiverError::Profile("non-finite value".into()));
        }
        if let Some(k) = z.windows(2).position(|w| w[1] <= w[0]) {
            return Err(ReceiverError::Profile(format!(
                "z is not strictly increasing at sample {}",
                k + 1
            )));
        }
        if magnitude.iter().any(|&m| m < 0.0) {
            return Err(ReceiverError::Profile("negative field magnitude".into()));
        }
        let peak = magnitude.iter().copied().fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(ReceiverError::Profile("field is identically zero".into()));
        }
        let magnitude = magnitude.into_iter().map(|m| m / peak).collect();
        Ok(Self { z, magnitude, source })
    }

    /// Single-loop falloff `a² / (a² + d² + (z - z_c)²)^{3/2}`, normalized to
    /// one at the coil center.
    pub fn analytic(coil_radius: f64, standoff: f64, center: f64, z: &[f64]) -> Result<Self, ReceiverError> {
        positive("coil radius", coil_radius)?;
        positive("standoff", standoff)?;
        let a2 = coil_radius * coil_radius;
        let s2 = a2 + standoff * standoff;
        let field = |x: f64| a2 / (s2 + (x - center).powi(2)).powf(1.5);
        let peak = field(center);
        let magnitude = z.iter().map(|&x| field(x) / peak).collect();
        let mut profile = Self::new(
            z.to_vec(),
            magnitude,
            ProfileSource::Analytic {
                coil_radius,
                standoff,
            },
        )?;
        // keep the exact closed-form normalization even if the grid misses z_c
        profile.magnitude = z.iter().map(|&x| field(x) / peak).collect();
        Ok(profile)
    }

    /// Reads a two-column CSV (`z_m`, `magnitude`) with a header line.
    pub fn read_csv(reader: impl Read, path: &str) -> Result<Self, ReceiverError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let header_line = |msg: String| ReceiverError::ProfileLine { line: 1, msg };
        let header = rdr.headers().map_err(|e| header_line(e.to_string()))?;
        if header.len() != 2 || header.iter().any(|h| h.parse::<f64>().is_ok()) {
            return Err(header_line("expected a header line `z_m,magnitude`".into()));
        }
        let (mut z, mut m) = (Vec::new(), Vec::new());
        for record in rdr.records() {
            let record = record.map_err(|e| ReceiverError::ProfileLine {
                line: e.position().map_or(0, |p| p.line() as usize),
                msg: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| ReceiverError::ProfileLine {
                    line,
                    msg: format!("{s:?}: {e}"),
                })
            };
            let zi = parse(&record[0])?;
            if z.last().is_some_and(|&prev| zi <= prev) {
                return Err(ReceiverError::ProfileLine {
                    line,
                    msg: "z is not strictly increasing".into(),
                });
            }
            z.push(zi);
            m.push(parse(&record[1])?);
        }
        if z.is_empty() {
            return Err(ReceiverError::Profile("no samples".into()));
        }
        Self::new(z, m, ProfileSource::File { path: path.into() })
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "z_m,magnitude")?;
        for (z, m) in self.z.iter().zip(&self.magnitude) {
            writeln!(w, "{z:e},{m:e}")?;
        }
        Ok(())
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn magnitude(&self) -> &[f64] {
        &self.magnitude
    }

    /// `(first z, last z)` relative to the coil center.
    pub fn domain(&self) -> (f64, f64) {
        (self.z[0], self.z[self.z.len() - 1])
    }

    /// Linearly interpolated magnitude.
    pub fn value(&self, z: f64) -> Result<f64, ReceiverError> {
        let (lo, hi) = self.domain();
        // absorb rounding from shifting positions into the coil frame
        let slack = 1e-9 * (hi - lo);
        let at = if z < lo && z >= lo - slack {
            lo
        } else if z > hi && z <= hi + slack {
            hi
        } else {
            z
        };
        interpolate(&self.z, &self.magnitude, at).ok_or(ReceiverError::OutsideDomain { z, lo, hi })
    }
}

/// Planar coil in an LC oscillator, with its additive sensor noise.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilReceiver {
    pub field: FieldProfile,
    pub beta: f64,
    pub chi_ref: f64,
    /// L₀, H
    pub inductance: f64,
    /// C, F
    pub capacitance: f64,
    /// σ², Hz²
    pub noise_variance: f64,
    /// ξ, Hz
    pub noise_mean: f64,
}

impl CoilReceiver {
    pub fn new(field: FieldProfile) -> Self {
        Self {
            field,
            beta: DEFAULT_BETA,
            chi_ref: DEFAULT_CHI_REF,
            inductance: DEFAULT_L0,
            capacitance: DEFAULT_CAPACITANCE,
            noise_variance: DEFAULT_NOISE_VARIANCE,
            noise_mean: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ReceiverError> {
        positive("beta", self.beta)?;
        positive("reference susceptibility", self.chi_ref)?;
        positive("coil inductance", self.inductance)?;
        positive("capacitance", self.capacitance)?;
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(ReceiverError::NegativeVariance(self.noise_variance));
        }
        Ok(())
    }

    /// `w(z) = β χ_ref |Υ(z)|`, with `z` relative to the coil center.
    pub fn weighting(&self, z: f64) -> Result<f64, ReceiverError> {
        Ok(self.beta * self.chi_ref * self.field.value(z)?)
    }

    /// Unloaded resonance frequency `f_res,0`.
    pub fn base_frequency(&self) -> f64 {
        resonance_frequency(self.inductance, self.capacitance)
    }

    /// The coil's weighting placed with its center at `center` in the
    /// receiver pipe.
    pub fn placed(&self, center: f64) -> CoilWeighting<'_> {
        CoilWeighting { rx: self, center }
    }
}

/// A weighting function over positions in the receiver pipe.
pub trait Weighting {
    /// Closed interval outside which the weight vanishes.
    fn domain(&self) -> (f64, f64);
    fn weight(&self, z: f64) -> Result<f64, ReceiverError>;
}

#[derive(Debug, Clone, Copy)]
pub struct CoilWeighting<'a> {
    rx: &'a CoilReceiver,
    center: f64,
}

impl Weighting for CoilWeighting<'_> {
    fn domain(&self) -> (f64, f64) {
        let (lo, hi) = self.rx.field.domain();
        (self.center + lo, self.center + hi)
    }

    fn weight(&self, z: f64) -> Result<f64, ReceiverError> {
        self.rx.weighting(z - self.center)
    }
}

/// Unit weight over `[lo, hi]`: with identity conversion the received
/// signal is the number of molecules in that window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfectCounting {
    pub lo: f64,
    pub hi: f64,
}

impl Weighting for PerfectCounting {
    fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn weight(&self, z: f64) -> Result<f64, ReceiverError> {
        if (self.lo..=self.hi).contains(&z) {
            Ok(1.0)
        } else {
            Err(ReceiverError::OutsideDomain {
                z,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }
}

/// The weighting domain intersected with the pipe `[0, length]`.
pub fn clipped_domain(w: &dyn Weighting, pipe_length: f64) -> Result<(f64, f64), ReceiverError> {
    let (lo, hi) = w.domain();
    let (lo, hi) = (lo.max(0.0), hi.min(pipe_length));
    if lo >= hi {
        return Err(ReceiverError::EmptyDomain);
    }
    Ok((lo, hi))
}

/// Position grid across the clipped weighting domain.
pub fn receiver_positions(
    w: &dyn Weighting,
    pipe_length: f64,
    points: usize,
) -> Result<Vec<f64>, ReceiverError> {
    let (lo, hi) = clipped_domain(w, pipe_length)?;
    Ok(linspace(lo, hi, points.max(2)))
}

/// `∫ w(z) c(z, t) dz` over the weighting domain, trapezoidal in z. With a
/// coil weighting this is the volume susceptibility χᵥ(t).
pub fn susceptibility(c: &ConcentrationField, w: &dyn Weighting) -> Result<TimeSeries, ReceiverError> {
    let (lo, hi) = clipped_domain(w, c.pipe_length)?;
    let (have_lo, have_hi) = match (c.z.first(), c.z.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => {
            return Err(ReceiverError::Coverage {
                have_lo: f64::NAN,
                have_hi: f64::NAN,
                lo,
                hi,
            })
        }
    };
    let slack = 1e-12 * (hi - lo).abs().max(hi.abs());
    if have_lo > lo + slack || have_hi < hi - slack {
        return Err(ReceiverError::Coverage {
            have_lo,
            have_hi,
            lo,
            hi,
        });
    }
    let lo = lo.max(have_lo);
    let hi = hi.min(have_hi);

    // Quadrature nodes: domain ends plus every grid position strictly inside.
    let inner: Vec<usize> = (0..c.z.len()).filter(|&i| c.z[i] > lo && c.z[i] < hi).collect();
    let mut nodes = Vec::with_capacity(inner.len() + 2);
    nodes.push(lo);
    nodes.extend(inner.iter().map(|&i| c.z[i]));
    nodes.push(hi);
    let weights = nodes
        .iter()
        .map(|&z| w.weight(z))
        .collect::<Result<Vec<_>, _>>()?;

    let row_at = |z: f64, k: usize| -> f64 {
        let j = c.z.partition_point(|&v| v < z);
        if j < c.z.len() && c.z[j] == z {
            return c.rows[j][k];
        }
        let (a, b) = (j.saturating_sub(1), j.min(c.z.len() - 1));
        if a == b {
            return c.rows[a][k];
        }
        let f = (z - c.z[a]) / (c.z[b] - c.z[a]);
        c.rows[a][k] + f * (c.rows[b][k] - c.rows[a][k])
    };

    let samples = (0..c.grid.len)
        .map(|k| {
            let integrand: Vec<f64> = nodes
                .iter()
                .zip(&weights)
                .map(|(&z, &wz)| wz * row_at(z, k))
                .collect();
            trapezoid(&nodes, &integrand)
        })
        .collect();
    Ok(TimeSeries::on_grid(c.grid, samples, Unit::Unitless))
}

/// Receiver-pipe kernel `g(t) = ∫ w(z) h(z, t) dz` on the position grid;
/// convolving it with the receiver-pipe inflow gives the same χᵥ as
/// [`susceptibility`] on the full concentration field, per molecule.
pub fn weighted_kernel(
    pipe: &PipeKinetics,
    w: &dyn Weighting,
    z: &[f64],
    grid: TimeGrid,
) -> Result<Vec<f64>, ReceiverError> {
    let weights = z.iter().map(|&zi| w.weight(zi)).collect::<Result<Vec<_>, _>>()?;
    Ok(grid
        .times()
        .map(|t| {
            let integrand: Vec<f64> = z
                .iter()
                .zip(&weights)
                .map(|(&zi, &wz)| wz * pipe.gaussian(zi, t))
                .collect();
            trapezoid(z, &integrand)
        })
        .collect())
}

/// `L(t) = (1 + χᵥ(t)) L₀`.
pub fn inductance(chi: &TimeSeries, l0: f64) -> TimeSeries {
    chi.map(Unit::Henry, |x| (1.0 + x) * l0)
}

/// `f = 1 / (2π √(L C))`.
pub fn resonance_frequency(inductance: f64, capacitance: f64) -> f64 {
    1.0 / (2.0 * PI * (inductance * capacitance).sqrt())
}

/// `Δf = f_res(L) − f_res(L₀) = (√L₀ − √L) / (2π √(L₀ L C))`, with the
/// numerator evaluated as `(L₀ − L) / (√L + √L₀)` to avoid cancellation.
pub fn resonance_shift(inductance: &TimeSeries, l0: f64, capacitance: f64) -> TimeSeries {
    inductance.map(Unit::Hertz, |l| shift(l, l0, capacitance))
}

fn shift(l: f64, l0: f64, capacitance: f64) -> f64 {
    let numerator = (l0 - l) / (l.sqrt() + l0.sqrt());
    numerator / (2.0 * PI * (l0 * l * capacitance).sqrt())
}

/// Adds i.i.d. Gaussian noise with the given mean and variance.
pub fn add_noise(
    signal: &TimeSeries,
    variance: f64,
    mean: f64,
    seed: u64,
) -> Result<TimeSeries, ReceiverError> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(ReceiverError::NegativeVariance(variance));
    }
    if variance == 0.0 {
        return Ok(signal.map(signal.unit, |x| x + mean));
    }
    let normal = Normal::new(mean, variance.sqrt()).expect("validated standard deviation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = signal
        .samples
        .iter()
        .map(|&x| x + normal.sample(&mut rng))
        .collect();
    Ok(TimeSeries::new(signal.t0, signal.dt, samples, signal.unit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    pub snr_db: f64,
    /// integration window start, s
    pub t0: f64,
    /// integration window end, s
    pub t1: f64,
    pub epsilon: f64,
}

/// Time-average SNR of the noiseless shift over the window bounded by the
/// last sample with `|Δf| ≤ ε` before the first path peak and the first
/// such sample after the last path peak.
pub fn snr(
    delta_f: &TimeSeries,
    noise_variance: f64,
    epsilon: f64,
    first_peak: f64,
    last_peak: f64,
) -> Result<SnrReport, ReceiverError> {
    positive("noise variance", noise_variance)?;
    positive("threshold", epsilon)?;
    let quiet = |k: usize| delta_f.samples[k].abs() <= epsilon;
    let n = delta_f.len();
    let k0 = (0..n)
        .rev()
        .filter(|&k| delta_f.time(k) < first_peak)
        .find(|&k| quiet(k))
        .ok_or(ReceiverError::ThresholdNotReached {
            epsilon,
            side: "before the first path peak",
            from: delta_f.t0,
            to: first_peak,
        })?;
    let k1 = (0..n)
        .filter(|&k| delta_f.time(k) > last_peak)
        .find(|&k| quiet(k))
        .ok_or(ReceiverError::ThresholdNotReached {
            epsilon,
            side: "after the last path peak",
            from: last_peak,
            to: delta_f.time(n.saturating_sub(1)),
        })?;
    let window = &delta_f.samples[k0..=k1];
    let power: Vec<f64> = window.iter().map(|x| x * x).collect();
    let energy = crate::quadrature::trapezoid_uniform(&power, delta_f.dt);
    let (t0, t1) = (delta_f.time(k0), delta_f.time(k1));
    Ok(SnrReport {
        snr_db: 10.0 * (energy / (t1 - t0) / noise_variance).log10(),
        t0,
        t1,
        epsilon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakStats {
    /// Extremal |value|, refined by a three-point parabola through the
    /// largest sample and its neighbours.
    pub height: f64,
    pub time: f64,
    pub fwhm: f64,
}

/// Peak height, peak time, and FWHM of `|series|`, with linear interpolation
/// at the half-height crossings.
pub fn signal_stats(series: &TimeSeries) -> Result<PeakStats, ReceiverError> {
    let mag: Vec<f64> = series.samples.iter().map(|x| x.abs()).collect();
    let k = (0..mag.len())
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
        .ok_or(ReceiverError::NoPeak)?;
    let top = mag[k];
    if top.is_nan() || top <= 0.0 || mag.iter().all(|&v| v == top) {
        return Err(ReceiverError::NoPeak);
    }

    let (mut height, mut time) = (top, series.time(k));
    if k > 0 && k + 1 < mag.len() {
        let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
        let curvature = a - 2.0 * b + c;
        if curvature < 0.0 {
            let offset = 0.5 * (a - c) / curvature;
            height = b - 0.25 * (a - c) * offset;
            time += offset * series.dt;
        }
    }

    let half = 0.5 * height;
    let unresolved = ReceiverError::UnresolvedPeak { time };
    let left = (0..k).rev().find(|&i| mag[i] < half).ok_or(unresolved)?;
    let right = (k + 1..mag.len())
        .find(|&i| mag[i] < half)
        .ok_or(ReceiverError::UnresolvedPeak { time })?;
    let cross = |i: usize, j: usize| {
        // crossing between samples i (below) and j (above or equal)
        let f = (half - mag[i]) / (mag[j] - mag[i]);
        series.time(i) + f * (series.time(j) - series.time(i))
    };
    let t_left = cross(left, left + 1);
    let t_right = cross(right, right - 1);
    Ok(PeakStats {
        height,
        time,
        fwhm: t_right - t_left,
    })
}
