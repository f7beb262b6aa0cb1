//! Scenario configuration and the end-to-end pipeline from network to
//! received signal, plus the batch runs built on it.

use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydraulics::{solve_flows, FlowSolution, HydraulicsError};
use crate::io::{CsvTable, IoError};
use crate::metrics::{DispersionPoint, TopologyMetrics};
use crate::network::{Network, NetworkError, PipeId};
use crate::quadrature::linspace;
use crate::receiver::{
    self, add_noise, inductance, resonance_frequency, resonance_shift, signal_stats, snr, weighted_kernel,
    CoilReceiver, FieldProfile, PeakStats, ReceiverError, SnrReport, Weighting,
};
use crate::series::{TimeSeries, Unit};
use crate::transport::{Channel, DiffusionParams, GridConfig, Realization, TransportError, TransportParams};

/// Testbed flow rate, 10 mL/min.
pub const DEFAULT_FLOW_RATE: f64 = 10e-6 / 60.0;
pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_TEMPERATURE: f64 = 293.0;
pub const DEFAULT_VISCOSITY: f64 = 1e-3;
pub const DEFAULT_PARTICLE_RADIUS: f64 = 24.5e-9;
pub const DEFAULT_MOLECULES: f64 = 2e12;
pub const DEFAULT_COIL_RADIUS: f64 = 4e-3;
pub const DEFAULT_STANDOFF: f64 = 1e-3;
pub const DEFAULT_HALF_WIDTH: f64 = 8e-3;
/// How many times the horizon may double while searching for the end of
/// the SNR window.
const SNR_HORIZON_DOUBLINGS: usize = 6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Hydraulics(#[from] HydraulicsError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Receiver(#[from] ReceiverError),
}

impl SimError {
    /// Errors caused by the inputs rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        match self {
            SimError::Config(_) | SimError::Io(_) | SimError::Network(_) => true,
            SimError::Hydraulics(e) => matches!(
                e,
                HydraulicsError::InvalidFlow(_)
                    | HydraulicsError::InvalidViscosity(_)
                    | HydraulicsError::Network(_)
            ),
            SimError::Transport(e) => matches!(
                e,
                TransportError::AlphaOutOfRange(_)
                    | TransportError::NonPositive { .. }
                    | TransportError::OutsidePipe { .. }
                    | TransportError::NoPath { .. }
                    | TransportError::AmbiguousReceiver(..)
                    | TransportError::Network(_)
            ),
            SimError::Receiver(e) => matches!(
                e,
                ReceiverError::Profile(_)
                    | ReceiverError::ProfileLine { .. }
                    | ReceiverError::NonPositive { .. }
                    | ReceiverError::NegativeVariance(_)
                    | ReceiverError::EmptyDomain
                    | ReceiverError::Io(_)
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProfileConfig {
    /// Single-loop falloff sampled over `±half_width_m` around the coil.
    Analytic {
        coil_radius_m: f64,
        standoff_m: f64,
        half_width_m: f64,
        points: usize,
    },
    /// Two-column CSV (`z_m`, `magnitude`), z relative to the coil center.
    File { path: PathBuf },
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig::Analytic {
            coil_radius_m: DEFAULT_COIL_RADIUS,
            standoff_m: DEFAULT_STANDOFF,
            half_width_m: DEFAULT_HALF_WIDTH,
            points: receiver::DEFAULT_Z_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverConfig {
    pub profile: ProfileConfig,
    /// Coil center measured from the receiver pipe's inlet; by default the
    /// field domain ends at the pipe outlet.
    pub coil_center_m: Option<f64>,
    /// Positions sampled across the weighting domain.
    pub z_points: usize,
    pub beta: f64,
    pub chi_ref: f64,
    pub l0_h: f64,
    pub capacitance_f: f64,
    pub noise_variance_hz2: f64,
    pub noise_mean_hz: f64,
    pub epsilon_hz: f64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            profile: ProfileConfig::default(),
            coil_center_m: None,
            z_points: receiver::DEFAULT_Z_POINTS,
            beta: receiver::DEFAULT_BETA,
            chi_ref: receiver::DEFAULT_CHI_REF,
            l0_h: receiver::DEFAULT_L0,
            capacitance_f: receiver::DEFAULT_CAPACITANCE,
            noise_variance_hz2: receiver::DEFAULT_NOISE_VARIANCE,
            noise_mean_hz: 0.0,
            epsilon_hz: receiver::DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridOverrides {
    pub dt_s: Option<f64>,
    pub horizon_s: Option<f64>,
    pub max_horizon_s: Option<f64>,
}

/// Everything needed to reproduce a run. Missing fields take the testbed
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub network: Option<PathBuf>,
    pub flow_rate_m3_s: f64,
    pub temperature_k: f64,
    pub viscosity_pa_s: f64,
    pub particle_radius_m: f64,
    pub alpha: f64,
    pub molecules: f64,
    pub seed: u64,
    pub noise: bool,
    pub receiver: ReceiverConfig,
    pub grid: GridOverrides,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            network: None,
            flow_rate_m3_s: DEFAULT_FLOW_RATE,
            temperature_k: DEFAULT_TEMPERATURE,
            viscosity_pa_s: DEFAULT_VISCOSITY,
            particle_radius_m: DEFAULT_PARTICLE_RADIUS,
            alpha: DEFAULT_ALPHA,
            molecules: DEFAULT_MOLECULES,
            seed: 0,
            noise: true,
            receiver: ReceiverConfig::default(),
            grid: GridOverrides::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            SimError::Io(IoError::Syntax {
                origin: origin.into(),
                line: e
                    .span()
                    .map(|s| text[..s.start].matches('\n').count() + 1)
                    .unwrap_or(1),
                msg: e.message().trim().to_string(),
            })
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a scenario file; relative paths inside resolve against its
    /// directory.
    pub fn read(path: &FsPath) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
            path: path.into(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(FsPath::new(""));
        if let Some(n) = &mut cfg.network {
            if n.is_relative() {
                *n = base.join(&*n);
            }
        }
        if let ProfileConfig::File { path: p } = &mut cfg.receiver.profile {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// The fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("flow_rate_m3_s", self.flow_rate_m3_s),
            ("temperature_k", self.temperature_k),
            ("viscosity_pa_s", self.viscosity_pa_s),
            ("particle_radius_m", self.particle_radius_m),
            ("molecules", self.molecules),
            ("receiver.beta", self.receiver.beta),
            ("receiver.chi_ref", self.receiver.chi_ref),
            ("receiver.l0_h", self.receiver.l0_h),
            ("receiver.capacitance_f", self.receiver.capacitance_f),
            ("receiver.noise_variance_hz2", self.receiver.noise_variance_hz2),
            ("receiver.epsilon_hz", self.receiver.epsilon_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=2.0).contains(&self.alpha) {
            return Err(SimError::Config(format!(
                "alpha must lie in [0, 2], got {}",
                self.alpha
            )));
        }
        if !self.receiver.noise_mean_hz.is_finite() {
            return Err(SimError::Config("receiver.noise_mean_hz must be finite".into()));
        }
        if self.receiver.z_points < 2 {
            return Err(SimError::Config("receiver.z_points must be at least 2".into()));
        }
        if let ProfileConfig::Analytic {
            coil_radius_m,
            standoff_m,
            half_width_m,
            points,
        } = self.receiver.profile
        {
            for (name, v) in [
                ("coil_radius_m", coil_radius_m),
                ("standoff_m", standoff_m),
                ("half_width_m", half_width_m),
            ] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(SimError::Config(format!(
                        "receiver.profile.{name} must be positive, got {v}"
                    )));
                }
            }
            if points < 2 {
                return Err(SimError::Config(
                    "receiver.profile.points must be at least 2".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn transport(&self) -> TransportParams {
        TransportParams {
            alpha: self.alpha,
            temperature: self.temperature_k,
            viscosity: self.viscosity_pa_s,
            particle_radius: self.particle_radius_m,
        }
    }

    pub fn grid_config(&self) -> GridConfig {
        GridConfig {
            dt: self.grid.dt_s,
            horizon: self.grid.horizon_s,
            max_horizon: self.grid.max_horizon_s,
        }
    }

    pub fn field_profile(&self) -> Result<FieldProfile, SimError> {
        Ok(match &self.receiver.profile {
            ProfileConfig::Analytic {
                coil_radius_m,
                standoff_m,
                half_width_m,
                points,
            } => FieldProfile::analytic(
                *coil_radius_m,
                *standoff_m,
                0.0,
                &linspace(-half_width_m, *half_width_m, *points),
            )?,
            ProfileConfig::File { path } => {
                let file = std::fs::File::open(path).map_err(|source| IoError::Read {
                    path: path.clone(),
                    source,
                })?;
                FieldProfile::read_csv(file, &path.display().to_string())?
            }
        })
    }

    pub fn coil(&self, field: FieldProfile) -> CoilReceiver {
        let r = &self.receiver;
        CoilReceiver {
            field,
            beta: r.beta,
            chi_ref: r.chi_ref,
            inductance: r.l0_h,
            capacitance: r.capacitance_f,
            noise_variance: r.noise_variance_hz2,
            noise_mean: r.noise_mean_hz,
        }
    }
}

/// Scalar results of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: Option<String>,
    pub base_frequency_hz: f64,
    pub snr: SnrReport,
    /// Peak statistics of |Δf_res|.
    pub peak: PeakStats,
    pub delay_s: f64,
    pub spread_s: f64,
    pub path_count: usize,
    pub receiver_pipe: PipeId,
    pub coil_center_m: f64,
    pub dt_s: f64,
    pub horizon_s: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub flows: FlowSolution,
    pub metrics: TopologyMetrics,
    /// End-to-end CIR at the coil center, 1/m.
    pub cir: TimeSeries,
    /// `N ×` CIR, 1/m.
    pub concentration: TimeSeries,
    pub chi: TimeSeries,
    pub delta_f: TimeSeries,
    /// Noisy realization (equal to `delta_f` without noise).
    pub delta_f_noisy: TimeSeries,
    pub summary: Summary,
}

impl Simulation {
    pub fn signal_table(&self) -> CsvTable {
        let mut t = CsvTable::new([
            "t_s",
            "cir_per_m",
            "concentration_per_m",
            "chi_v",
            "delta_f_hz",
            "delta_F_hz",
        ]);
        for k in 0..self.cir.len() {
            t.push_numbers(&[
                self.cir.time(k),
                self.cir.samples[k],
                self.concentration.samples[k],
                self.chi.samples[k],
                self.delta_f.samples[k],
                self.delta_f_noisy.samples[k],
            ]);
        }
        t
    }
}

struct Received {
    real: Realization,
    cir: TimeSeries,
    chi: TimeSeries,
    delta_f: TimeSeries,
    snr: SnrReport,
}

/// Runs the full chain for the inlet-to-outlet channel of `net`.
pub fn simulate(net: &Network, cfg: &ScenarioConfig, field: &FieldProfile) -> Result<Simulation, SimError> {
    cfg.validate()?;
    let flows = solve_flows(net, cfg.flow_rate_m3_s, cfg.viscosity_pa_s)?;
    let kinetics = DiffusionParams::compute(net, &flows, cfg.transport())?;
    let (from, to) = (net.inlet(), net.outlet());
    let metrics = TopologyMetrics::compute(net, &flows, &kinetics, from, to)?;
    let channel = Channel::new(net, &flows, &kinetics, from, to)?;
    let coil = cfg.coil(field.clone());
    coil.validate()?;

    let rx = *channel.receiver();
    let center = cfg.receiver.coil_center_m.unwrap_or(rx.length - field.domain().1);
    let weighting = coil.placed(center);
    let z = receiver::receiver_positions(&weighting, rx.length, cfg.receiver.z_points)?;

    let mut grid = cfg.grid_config();
    let mut attempt = 0;
    let received = loop {
        let real = channel.realize(&grid)?;
        match receive(&channel, &real, &coil, &weighting, &z, center, cfg, &metrics) {
            Ok(r) => break r,
            Err(SimError::Receiver(ReceiverError::ThresholdNotReached { side, .. }))
                if side.starts_with("after") && attempt < SNR_HORIZON_DOUBLINGS =>
            {
                attempt += 1;
                let horizon = 2.0 * real.grid.horizon();
                log::info!("extending horizon to {horizon:e} s to close the SNR window");
                grid.horizon = Some(horizon);
                grid.max_horizon = Some(grid.max_horizon.unwrap_or(0.0).max(horizon));
            }
            Err(e) => return Err(e),
        }
    };

    let concentration = received.cir.scaled(cfg.molecules);
    let delta_f_noisy = if cfg.noise {
        add_noise(&received.delta_f, coil.noise_variance, coil.noise_mean, cfg.seed)?
    } else {
        received.delta_f.clone()
    };
    let peak = signal_stats(&received.delta_f)?;
    let summary = Summary {
        label: net.label().map(str::to_string),
        base_frequency_hz: coil.base_frequency(),
        snr: received.snr,
        peak,
        delay_s: metrics.delay,
        spread_s: metrics.spread,
        path_count: metrics.paths.len(),
        receiver_pipe: rx.id,
        coil_center_m: center,
        dt_s: received.real.grid.dt,
        horizon_s: received.real.grid.horizon(),
        converged: received.real.converged,
    };
    Ok(Simulation {
        flows,
        metrics,
        cir: received.cir,
        concentration,
        chi: received.chi,
        delta_f: received.delta_f,
        delta_f_noisy,
        summary,
    })
}

#[allow(clippy::too_many_arguments)]
fn receive(
    channel: &Channel<'_>,
    real: &Realization,
    coil: &CoilReceiver,
    weighting: &dyn Weighting,
    z: &[f64],
    center: f64,
    cfg: &ScenarioConfig,
    metrics: &TopologyMetrics,
) -> Result<Received, SimError> {
    let rx = channel.receiver();
    let cir = channel.cir(real, center.clamp(0.0, rx.length))?;
    let kernel = weighted_kernel(rx, weighting, z, real.grid)?;
    let chi = TimeSeries::on_grid(
        real.grid,
        channel
            .respond(real, &kernel)
            .into_iter()
            .map(|v| cfg.molecules * v)
            .collect(),
        Unit::Unitless,
    );
    let delta_f = resonance_shift(
        &inductance(&chi, coil.inductance),
        coil.inductance,
        coil.capacitance,
    );
    let snr = snr(
        &delta_f,
        coil.noise_variance,
        cfg.receiver.epsilon_hz,
        metrics.first_peak(),
        metrics.last_peak(),
    )?;
    Ok(Received {
        real: real.clone(),
        cir,
        chi,
        delta_f,
        snr,
    })
}

/// Unloaded resonance frequency for a configuration.
pub fn base_frequency(cfg: &ScenarioConfig) -> f64 {
    resonance_frequency(cfg.receiver.l0_h, cfg.receiver.capacitance_f)
}

/// Parameters a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    /// Inlet flow rate, m³/s.
    Q,
    Alpha,
    Beta,
    /// Injected molecule count.
    N,
    /// Length of the receiver pipe (the whole channel for a single pipe), m.
    Length,
}

impl std::str::FromStr for SweepParameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Q" | "q" => Ok(Self::Q),
            "alpha" => Ok(Self::Alpha),
            "beta" => Ok(Self::Beta),
            "N" | "n" => Ok(Self::N),
            "length" => Ok(Self::Length),
            _ => Err(format!(
                "unknown sweep parameter {s:?} (Q, alpha, beta, N, length)"
            )),
        }
    }
}

/// Applies one sweep value, returning the modified network and scenario.
pub fn apply_sweep(
    net: &Network,
    cfg: &ScenarioConfig,
    param: SweepParameter,
    value: f64,
) -> Result<(Network, ScenarioConfig), SimError> {
    let mut cfg = cfg.clone();
    let mut net = net.clone();
    match param {
        SweepParameter::Q => cfg.flow_rate_m3_s = value,
        SweepParameter::Alpha => cfg.alpha = value,
        SweepParameter::Beta => cfg.receiver.beta = value,
        SweepParameter::N => cfg.molecules = value,
        SweepParameter::Length => {
            let rx = match net.inflows(net.outlet())?.as_slice() {
                [p] => *p,
                other => return Err(TransportError::AmbiguousReceiver(net.outlet(), other.len()).into()),
            };
            let mut spec = net.to_spec();
            for p in &mut spec.pipes {
                if p.id == rx {
                    p.length = value;
                }
            }
            net = Network::build(spec)?;
        }
    }
    cfg.validate()?;
    Ok((net, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub peak_height_hz: f64,
    pub fwhm_s: f64,
    pub snr_db: f64,
    pub chi_peak: f64,
}

/// One row per value, evaluated in parallel, in input order.
pub fn sweep(
    net: &Network,
    cfg: &ScenarioConfig,
    field: &FieldProfile,
    param: SweepParameter,
    values: &[f64],
) -> Result<Vec<SweepRow>, SimError> {
    values
        .par_iter()
        .map(|&value| {
            let (net, cfg) = apply_sweep(net, cfg, param, value)?;
            let sim = simulate(&net, &cfg, field)?;
            let chi_peak = sim.chi.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Ok(SweepRow {
                value,
                peak_height_hz: sim.summary.peak.height,
                fwhm_s: sim.summary.peak.fwhm,
                snr_db: sim.summary.snr.snr_db,
                chi_peak,
            })
        })
        .collect()
}

pub fn sweep_table(param: SweepParameter, rows: &[SweepRow]) -> CsvTable {
    let name = match param {
        SweepParameter::Q => "flow_rate_m3_s",
        SweepParameter::Alpha => "alpha",
        SweepParameter::Beta => "beta",
        SweepParameter::N => "molecules",
        SweepParameter::Length => "length_m",
    };
    let mut t = CsvTable::new([name, "peak_height_hz", "fwhm_s", "snr_db", "chi_peak"]);
    for r in rows {
        t.push_numbers(&[r.value, r.peak_height_hz, r.fwhm_s, r.snr_db, r.chi_peak]);
    }
    t
}

/// Places each network in dispersion space and attaches its noiseless SNR.
/// Results come back sorted by label; failures are returned per network.
pub fn dispersion_space(
    networks: &[(String, Network)],
    cfg: &ScenarioConfig,
    field: &FieldProfile,
) -> Vec<(String, Result<DispersionPoint, SimError>)> {
    let mut cfg = cfg.clone();
    cfg.noise = false;
    let mut out: Vec<(String, Result<DispersionPoint, SimError>)> = networks
        .par_iter()
        .map(|(label, net)| {
            let point = simulate(net, &cfg, field).map(|sim| DispersionPoint {
                label: label.clone(),
                delay: sim.metrics.delay,
                spread: sim.metrics.spread,
                snr_db: Some(sim.summary.snr.snr_db),
                path_count: sim.metrics.paths.len(),
            });
            (label.clone(), point)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

pub fn dispersion_table(points: &[DispersionPoint]) -> CsvTable {
    let mut t = CsvTable::new(["label", "delay_s", "spread_s", "snr_db"]);
    for p in points {
        t.push(vec![
            p.label.clone(),
            crate::io::num(p.delay),
            crate::io::num(p.spread),
            p.snr_db.map(crate::io::num).unwrap_or_default(),
        ]);
    }
    t
}
