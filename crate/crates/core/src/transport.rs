//! Advection–diffusion transport: diffusion coefficients, per-pipe impulse
//! responses and fluxes, junction partitioning, and the end-to-end channel
//! response built by chaining pipe fluxes along every inlet-to-receiver path.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convolution;
use crate::hydraulics::FlowSolution;
use crate::network::{Network, NetworkError, NodeId, Path, PipeId};
use crate::series::{TimeGrid, TimeSeries, Unit};

/// Boltzmann constant, m²·kg/(s²·K).
pub const BOLTZMANN: f64 = 1.380649e-23;

/// Samples per narrowest flux FWHM in the default time step.
pub const SAMPLES_PER_FWHM: f64 = 50.0;
/// A user time step coarser than FWHM / this is rejected.
pub const MIN_SAMPLES_PER_FWHM: f64 = 10.0;
/// Default horizon as a multiple of the latest path peak time.
pub const HORIZON_FACTOR: f64 = 3.0;
/// Default ceiling for horizon auto-extension, as a multiple of the initial horizon.
pub const MAX_HORIZON_FACTOR: f64 = 16.0;
/// Every path must deliver at least this fraction of its mass within the horizon.
pub const MASS_TARGET: f64 = 1.0 - 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("eddy proportionality constant must lie in [0, 2], got {0}")]
    AlphaOutOfRange(f64),
    #[error("{what} must be positive and finite, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("position z = {z} m lies outside pipe {pipe} of length {length} m")]
    OutsidePipe { pipe: PipeId, z: f64, length: f64 },
    #[error("pipe {pipe} is not an inflow of junction {junction}")]
    NotAnInflow { pipe: PipeId, junction: NodeId },
    #[error("no path from {from} to {to}")]
    NoPath { from: NodeId, to: NodeId },
    #[error("receiver node {0} has {1} inflow pipes; the receiver pipe must be unique")]
    AmbiguousReceiver(NodeId, usize),
    #[error(
        "time step {dt:e} s is too coarse: narrowest flux FWHM is {fwhm:e} s; use dt <= {suggested:e} s"
    )]
    GridTooCoarse { dt: f64, fwhm: f64, suggested: f64 },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

fn positive(what: &'static str, value: f64) -> Result<f64, TransportError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(TransportError::NonPositive { what, value })
    }
}

/// Stokes–Einstein coefficient `k_B T / (6 π μ R)`.
pub fn molecular_diffusion(temperature: f64, viscosity: f64, particle_radius: f64) -> f64 {
    BOLTZMANN * temperature / (6.0 * PI * viscosity * particle_radius)
}

/// Eddy coefficient `K = α ū r`.
pub fn eddy_diffusion(alpha: f64, velocity: f64, radius: f64) -> Result<f64, TransportError> {
    if !(0.0..=2.0).contains(&alpha) {
        return Err(TransportError::AlphaOutOfRange(alpha));
    }
    Ok(alpha * velocity * radius)
}

/// Aris–Taylor coefficient `r² ū² / (48 D_tot) + D_tot`.
pub fn effective_diffusion(radius: f64, velocity: f64, total: f64) -> f64 {
    radius * radius * velocity * velocity / (48.0 * total) + total
}

/// Physical constants that, together with the flow field, fix transport.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportParams {
    /// eddy proportionality constant, in [0, 2]
    pub alpha: f64,
    /// K
    pub temperature: f64,
    /// kg/(m·s)
    pub viscosity: f64,
    /// m
    pub particle_radius: f64,
}

impl TransportParams {
    pub fn molecular_diffusion(&self) -> f64 {
        molecular_diffusion(self.temperature, self.viscosity, self.particle_radius)
    }
}

/// Transport state of one pipe: geometry, flow, and its diffusion
/// coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipeKinetics {
    pub id: PipeId,
    pub length: f64,
    pub radius: f64,
    pub velocity: f64,
    pub eddy: f64,
    pub total: f64,
    pub effective: f64,
}

impl PipeKinetics {
    pub fn new(
        id: PipeId,
        length: f64,
        radius: f64,
        velocity: f64,
        molecular: f64,
        alpha: f64,
    ) -> Result<Self, TransportError> {
        positive("length", length)?;
        positive("radius", radius)?;
        positive("velocity", velocity)?;
        positive("molecular diffusion coefficient", molecular)?;
        let eddy = eddy_diffusion(alpha, velocity, radius)?;
        let total = molecular + eddy;
        Ok(Self {
            id,
            length,
            radius,
            velocity,
            eddy,
            total,
            effective: effective_diffusion(radius, velocity, total),
        })
    }

    /// Impulse response `h(z, t)` in 1/m; zero for `t <= 0`.
    pub fn cir(&self, z: f64, t: f64) -> Result<f64, TransportError> {
        if !(0.0..=self.length).contains(&z) {
            return Err(TransportError::OutsidePipe {
                pipe: self.id,
                z,
                length: self.length,
            });
        }
        Ok(self.gaussian(z, t))
    }

    /// The free-space kernel, without the domain check.
    pub(crate) fn gaussian(&self, z: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let spread = 4.0 * self.effective * t;
        let d = z - self.velocity * t;
        (-d * d / spread).exp() / (PI * spread).sqrt()
    }

    /// Net molecule flux `J(z, t)` in 1/s; zero for `t <= 0`.
    pub fn flux(&self, z: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        ((z - self.velocity * t) / (2.0 * t) + self.velocity) * self.gaussian(z, t)
    }

    pub fn outlet_flux(&self, t: f64) -> f64 {
        self.flux(self.length, t)
    }

    /// Time at which `h(l, ·)` peaks.
    pub fn peak_time(&self) -> f64 {
        let (d, u, l) = (self.effective, self.velocity, self.length);
        (-d + (d * d + u * u * l * l).sqrt()) / (u * u)
    }

    /// Outlet flux sampled on a grid; the `t = 0` sample is zero.
    pub fn sampled_outlet_flux(&self, grid: TimeGrid) -> Vec<f64> {
        grid.times().map(|t| self.outlet_flux(t)).collect()
    }

    /// `h(z, ·)` sampled on a grid; the `t = 0` sample is zero.
    pub fn sampled_cir(&self, z: f64, grid: TimeGrid) -> Vec<f64> {
        grid.times().map(|t| self.gaussian(z, t)).collect()
    }

    /// Full width at half maximum of the outlet flux over time, by
    /// golden-section search for the peak and bisection for the crossings.
    pub fn outlet_flux_fwhm(&self) -> f64 {
        let f = |t: f64| self.outlet_flux(t);
        let guess = self.peak_time();
        // Bracket by the diffusive width so narrow pulses are not missed.
        let width = (2.0 * self.effective * guess).sqrt() / self.velocity;
        let lo = (guess - 20.0 * width).max(1e-3 * guess);
        let (t_max, f_max) = golden_max(&f, lo, guess + 20.0 * width);
        let half = 0.5 * f_max;
        let mut lo = t_max;
        while f(lo) >= half {
            lo *= 0.5;
        }
        let mut hi = t_max;
        while f(hi) >= half {
            hi *= 2.0;
        }
        let left = bisect(&f, half, lo, t_max);
        let right = bisect(&f, half, t_max, hi);
        right - left
    }
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > 1e-13 * (a.abs() + b.abs()) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Root of `f(t) = level` in `[lo, hi]`, assuming one crossing.
fn bisect(f: &impl Fn(f64) -> f64, level: f64, mut lo: f64, mut hi: f64) -> f64 {
    let rising = f(lo) < f(hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < level) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs() {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Diffusion coefficients for every pipe of a network under a flow field.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionParams {
    pub params: TransportParams,
    /// molecular diffusion coefficient D, m²/s
    pub molecular: f64,
    /// In network pipe order.
    pub pipes: Vec<PipeKinetics>,
}

impl DiffusionParams {
    pub fn compute(
        net: &Network,
        flows: &FlowSolution,
        params: TransportParams,
    ) -> Result<Self, TransportError> {
        positive("temperature", params.temperature)?;
        positive("viscosity", params.viscosity)?;
        positive("particle radius", params.particle_radius)?;
        let molecular = params.molecular_diffusion();
        let pipes = net
            .pipes()
            .iter()
            .zip(&flows.velocities)
            .map(|(p, &u)| PipeKinetics::new(p.id, p.length, p.radius, u, molecular, params.alpha))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            params,
            molecular,
            pipes,
        })
    }

    pub fn pipe(&self, net: &Network, id: PipeId) -> Result<&PipeKinetics, NetworkError> {
        Ok(&self.pipes[net.pipe_position(id)?])
    }
}

/// Flow-ratio weight of entering junction `junction` through `via`.
pub fn junction_weight(
    net: &Network,
    flows: &FlowSolution,
    junction: NodeId,
    via: PipeId,
) -> Result<f64, TransportError> {
    let inflows = net.inflow_set(junction)?;
    if !inflows.contains(&via) {
        return Err(TransportError::NotAnInflow { pipe: via, junction });
    }
    let total: f64 = inflows
        .iter()
        .map(|&p| flows.flow(net, p))
        .sum::<Result<f64, _>>()?;
    Ok(flows.flow(net, via)? / total)
}

/// Fraction of molecules taking `path`: the product of its junction weights.
pub fn path_fraction(net: &Network, flows: &FlowSolution, path: &Path) -> Result<f64, TransportError> {
    path.junctions.iter().try_fold(1.0, |acc, j| {
        Ok(acc * junction_weight(net, flows, j.junction, j.via)?)
    })
}

/// `c = N · h`.
pub fn concentration(molecules: f64, h: &TimeSeries) -> TimeSeries {
    h.scaled(molecules)
}

/// Optional overrides for the simulation time grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub max_horizon: Option<f64>,
}

/// Molecules entering the receiver pipe, per unit injected molecule.
#[derive(Debug, Clone, PartialEq)]
pub enum Inflow {
    /// The transmitter sits at the receiver pipe's inlet: the inflow is a
    /// unit Dirac at `t = 0`.
    Direct,
    /// Sampled inflow flux (1/s) on the grid.
    Sampled(Vec<f64>),
}

/// The channel between a transmitter node and the pipe feeding a receiver
/// node, with everything that does not depend on the time grid.
#[derive(Debug, Clone)]
pub struct Channel<'a> {
    net: &'a Network,
    kinetics: &'a DiffusionParams,
    from: NodeId,
    to: NodeId,
    paths: Vec<Path>,
    fractions: Vec<f64>,
    receiver: PipeKinetics,
}

/// A channel evaluated on a concrete time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub grid: TimeGrid,
    pub inflow: Inflow,
    /// Mass of each path's outlet flux within the horizon.
    pub path_masses: Vec<f64>,
    /// False when the maximum horizon was hit before every path reached
    /// [`MASS_TARGET`].
    pub converged: bool,
}

impl<'a> Channel<'a> {
    pub fn new(
        net: &'a Network,
        flows: &FlowSolution,
        kinetics: &'a DiffusionParams,
        from: NodeId,
        to: NodeId,
    ) -> Result<Self, TransportError> {
        let inflows = net.inflows(to)?;
        let rx = match inflows.as_slice() {
            [p] => *p,
            _ => return Err(TransportError::AmbiguousReceiver(to, inflows.len())),
        };
        let paths = net.enumerate_paths(from, to)?;
        if paths.is_empty() {
            return Err(TransportError::NoPath { from, to });
        }
        let fractions = paths
            .iter()
            .map(|p| path_fraction(net, flows, p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            net,
            kinetics,
            from,
            to,
            paths,
            fractions,
            receiver: *kinetics.pipe(net, rx)?,
        })
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    pub fn endpoints(&self) -> (NodeId, NodeId) {
        (self.from, self.to)
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    /// Path fractions, aligned with [`Channel::paths`].
    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn receiver(&self) -> &PipeKinetics {
        &self.receiver
    }

    fn kinetics(&self, id: PipeId) -> &PipeKinetics {
        self.kinetics
            .pipe(self.net, id)
            .expect("path pipes belong to the network")
    }

    /// Path peak times: sums of the pipe peak times along each path.
    pub fn path_peak_times(&self) -> Vec<f64> {
        self.paths
            .iter()
            .map(|p| p.pipes.iter().map(|&id| self.kinetics(id).peak_time()).sum())
            .collect()
    }

    /// Narrowest outlet-flux FWHM over all pipes on any path.
    pub fn narrowest_fwhm(&self) -> f64 {
        let mut seen: Vec<PipeId> = self.paths.iter().flat_map(|p| p.pipes.clone()).collect();
        seen.sort();
        seen.dedup();
        seen.iter()
            .map(|&id| self.kinetics(id).outlet_flux_fwhm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn default_dt(&self) -> f64 {
        self.narrowest_fwhm() / SAMPLES_PER_FWHM
    }

    pub fn default_horizon(&self) -> f64 {
        HORIZON_FACTOR * self.path_peak_times().into_iter().fold(0.0, f64::max)
    }

    /// Resolves the grid and computes the receiver-pipe inflow, doubling the
    /// horizon until every path delivers [`MASS_TARGET`] of its mass.
    pub fn realize(&self, cfg: &GridConfig) -> Result<Realization, TransportError> {
        let fwhm = self.narrowest_fwhm();
        let dt = match cfg.dt {
            Some(dt) => {
                positive("time step", dt)?;
                if dt > fwhm / MIN_SAMPLES_PER_FWHM {
                    return Err(TransportError::GridTooCoarse {
                        dt,
                        fwhm,
                        suggested: fwhm / SAMPLES_PER_FWHM,
                    });
                }
                dt
            }
            None => fwhm / SAMPLES_PER_FWHM,
        };
        let mut horizon = match cfg.horizon {
            Some(h) => positive("horizon", h)?,
            None => self.default_horizon(),
        };
        let max_horizon = match cfg.max_horizon {
            Some(h) => positive("maximum horizon", h)?.max(horizon),
            None => MAX_HORIZON_FACTOR * horizon,
        };

        loop {
            let grid = TimeGrid::covering(dt, horizon);
            let (inflow, path_masses) = self.inflow_on(grid);
            let converged = path_masses.iter().all(|&m| m >= MASS_TARGET);
            if converged || horizon >= max_horizon {
                if !converged {
                    log::warn!(
                        "horizon {horizon:e} s reached the maximum before all paths delivered their mass (min {:e})",
                        path_masses.iter().copied().fold(f64::INFINITY, f64::min)
                    );
                }
                return Ok(Realization {
                    grid,
                    inflow,
                    path_masses,
                    converged,
                });
            }
            horizon = (2.0 * horizon).min(max_horizon);
        }
    }

    /// Weighted sum of per-path flux chains (receiver pipe excluded) and the
    /// per-path outlet masses (receiver pipe included).
    fn inflow_on(&self, grid: TimeGrid) -> (Inflow, Vec<f64>) {
        let rx_flux = self.receiver.sampled_outlet_flux(grid);
        let rx_mass = grid.dt * rx_flux.iter().sum::<f64>();
        let chains: Vec<Option<Vec<f64>>> = self
            .paths
            .par_iter()
            .map(|path| {
                let (_, upstream) = path.pipes.split_last().expect("paths are non-empty");
                let mut iter = upstream.iter();
                let first = iter.next()?;
                let mut chain = self.kinetics(*first).sampled_outlet_flux(grid);
                for &id in iter {
                    let next = self.kinetics(id).sampled_outlet_flux(grid);
                    chain = convolution::causal(&chain, &next, grid.dt, grid.len);
                }
                Some(chain)
            })
            .collect();

        if chains.iter().all(Option::is_none) {
            return (Inflow::Direct, vec![rx_mass]);
        }
        let masses: Vec<f64> = chains
            .par_iter()
            .map(|c| {
                let c = c.as_ref().expect("all paths have upstream pipes");
                let out = convolution::causal(c, &rx_flux, grid.dt, grid.len);
                grid.dt * out.iter().sum::<f64>()
            })
            .collect();
        // Fixed summation order by path index.
        let mut total = vec![0.0; grid.len];
        for (chain, &gamma) in chains.iter().zip(&self.fractions) {
            for (acc, v) in total.iter_mut().zip(chain.as_ref().expect("checked above")) {
                *acc += gamma * v;
            }
        }
        (Inflow::Sampled(total), masses)
    }

    /// Convolves the inflow with a receiver-pipe kernel sampled on the grid.
    pub fn respond(&self, real: &Realization, kernel: &[f64]) -> Vec<f64> {
        match &real.inflow {
            Inflow::Direct => kernel.to_vec(),
            Inflow::Sampled(f) => convolution::causal(f, kernel, real.grid.dt, real.grid.len),
        }
    }

    /// End-to-end impulse response at position `z` of the receiver pipe.
    pub fn cir(&self, real: &Realization, z: f64) -> Result<TimeSeries, TransportError> {
        self.receiver.cir(z, 1.0)?;
        let kernel = self.receiver.sampled_cir(z, real.grid);
        Ok(TimeSeries::on_grid(
            real.grid,
            self.respond(real, &kernel),
            Unit::PerMeter,
        ))
    }

    /// Flux leaving the receiver pipe at its outlet, i.e. arriving at the
    /// receiver node.
    pub fn outlet_flux(&self, real: &Realization) -> TimeSeries {
        let kernel = self.receiver.sampled_outlet_flux(real.grid);
        TimeSeries::on_grid(real.grid, self.respond(real, &kernel), Unit::PerSecond)
    }

    /// Concentration `N·h(z, t)` on a grid of positions in the receiver pipe.
    pub fn concentration_field(
        &self,
        real: &Realization,
        z: &[f64],
        molecules: f64,
    ) -> Result<ConcentrationField, TransportError> {
        for &zi in z {
            self.receiver.cir(zi, 1.0)?;
        }
        let rows = z
            .par_iter()
            .map(|&zi| {
                let kernel = self.receiver.sampled_cir(zi, real.grid);
                let mut row = self.respond(real, &kernel);
                row.iter_mut().for_each(|v| *v *= molecules);
                row
            })
            .collect();
        Ok(ConcentrationField {
            z: z.to_vec(),
            pipe_length: self.receiver.length,
            grid: real.grid,
            rows,
        })
    }
}

/// `c(z, t)` sampled on a position grid × time grid inside the receiver pipe.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationField {
    /// Increasing positions, m.
    pub z: Vec<f64>,
    pub pipe_length: f64,
    pub grid: TimeGrid,
    /// One time series (1/m) per position.
    pub rows: Vec<Vec<f64>>,
}

/// End-to-end impulse response `h_{a,b}(z, ·)` on a resolved grid.
pub fn end_to_end_cir(
    net: &Network,
    flows: &FlowSolution,
    kinetics: &DiffusionParams,
    from: NodeId,
    to: NodeId,
    z: f64,
    grid: &GridConfig,
) -> Result<TimeSeries, TransportError> {
    let channel = Channel::new(net, flows, kinetics, from, to)?;
    let real = channel.realize(grid)?;
    channel.cir(&real, z)
}

/// Flow-proportional routing probabilities over the outflow pipes of a node.
pub fn bifurcation_split(
    net: &Network,
    flows: &FlowSolution,
    node: NodeId,
) -> Result<Vec<(PipeId, f64)>, TransportError> {
    let outs = net.outflows(node)?;
    let total: f64 = outs.iter().map(|&p| flows.flow(net, p)).sum::<Result<f64, _>>()?;
    outs.into_iter()
        .map(|p| Ok((p, flows.flow(net, p)? / total)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydraulics::solve_flows;
    use crate::network::fixtures::*;
    use crate::quadrature::trapezoid_uniform;
    use approx::assert_relative_eq;

    pub(crate) fn testbed_params(alpha: f64) -> TransportParams {
        TransportParams {
            alpha,
            temperature: 293.0,
            viscosity: 1e-3,
            particle_radius: 24.5e-9,
        }
    }

    fn kin(length: f64, radius: f64, velocity: f64, alpha: f64) -> PipeKinetics {
        let d = testbed_params(alpha).molecular_diffusion();
        PipeKinetics::new(PipeId(1), length, radius, velocity, d, alpha).unwrap()
    }

    #[test]
    fn molecular_diffusion_value_and_scaling() {
        let d = molecular_diffusion(293.0, 1e-3, 24.5e-9);
        // independent evaluation of k_B T / (6 pi mu R)
        let expected = 1.380649e-23 * 293.0 / (6.0 * std::f64::consts::PI * 1e-3 * 24.5e-9);
        assert_relative_eq!(d, expected, max_relative = 1e-15);
        assert_relative_eq!(
            molecular_diffusion(293.0, 1e-3, 49e-9),
            d / 2.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            molecular_diffusion(586.0, 1e-3, 24.5e-9),
            2.0 * d,
            max_relative = 1e-15
        );
    }

    #[test]
    fn eddy_diffusion_values() {
        assert_relative_eq!(
            eddy_diffusion(2.0, 5e-2, 6.5e-4).unwrap(),
            6.5e-5,
            max_relative = 1e-12
        );
        assert_eq!(eddy_diffusion(0.0, 5e-2, 6.5e-4).unwrap(), 0.0);
        assert!(matches!(
            eddy_diffusion(2.1, 1.0, 1.0),
            Err(TransportError::AlphaOutOfRange(_))
        ));
        assert!(matches!(
            eddy_diffusion(-0.1, 1.0, 1.0),
            Err(TransportError::AlphaOutOfRange(_))
        ));
        // testbed fit: alpha = 0.01, Q = 10 mL/min through r = 0.75 mm
        let u = (10e-6 / 60.0) / (std::f64::consts::PI * 7.5e-4 * 7.5e-4);
        assert_relative_eq!(
            eddy_diffusion(0.01, u, 7.5e-4).unwrap(),
            0.01 * u * 7.5e-4,
            max_relative = 1e-15
        );
    }

    #[test]
    fn effective_diffusion_properties() {
        let d = molecular_diffusion(293.0, 1e-3, 24.5e-9);
        let total = d + 6.5e-5;
        let eff = effective_diffusion(6.5e-4, 5e-2, total);
        assert_relative_eq!(eff, 6.53e-5, max_relative = 5e-3);
        assert_eq!(effective_diffusion(6.5e-4, 0.0, total), total);
        // D_eff(D) = a/D + D is minimised at D = sqrt(a) with value 2 sqrt(a)
        let (r, u) = (1e-3f64, 0.03f64);
        let a = r * r * u * u / 48.0;
        let best = (0..20001)
            .map(|k| {
                let dt = a.sqrt() * (0.5 + k as f64 * 1e-4);
                effective_diffusion(r, u, dt)
            })
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(best, 2.0 * a.sqrt(), max_relative = 1e-9);
        assert_relative_eq!(
            effective_diffusion(r, u, r * u / 48f64.sqrt()),
            2.0 * a.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn cir_peak_and_normalisation() {
        let k = kin(0.05, 7.5e-4, 0.09, 0.01);
        let t = 0.3;
        let z = k.velocity * t;
        assert_relative_eq!(
            k.cir(z, t).unwrap(),
            1.0 / (4.0 * PI * k.effective * t).sqrt(),
            max_relative = 1e-14
        );
        // integrate the free-space kernel over a wide window
        let width = (2.0 * k.effective * t).sqrt();
        let n = 20001;
        let (lo, hi) = (z - 12.0 * width, z + 12.0 * width);
        let h = (hi - lo) / (n - 1) as f64;
        let ys: Vec<f64> = (0..n).map(|i| k.gaussian(lo + i as f64 * h, t)).collect();
        assert!((trapezoid_uniform(&ys, h) - 1.0).abs() < 1e-6);
        assert!(matches!(k.cir(0.06, t), Err(TransportError::OutsidePipe { .. })));
        assert!(matches!(k.cir(-1e-9, t), Err(TransportError::OutsidePipe { .. })));
        assert_eq!(k.cir(0.01, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn flux_properties() {
        let k = kin(0.05, 7.5e-4, 0.09, 0.01);
        let t = 0.2;
        let z = k.velocity * t;
        assert_relative_eq!(k.flux(z, t), k.velocity * k.gaussian(z, t), max_relative = 1e-14);

        // all molecules leave: integrate with an adaptive horizon
        let dt = k.outlet_flux_fwhm() / 200.0;
        let mut horizon = 2.0 * k.peak_time();
        let mass = loop {
            let grid = TimeGrid::covering(dt, horizon);
            let f = k.sampled_outlet_flux(grid);
            if f.last().copied().unwrap_or(0.0) * horizon < 1e-9 {
                break trapezoid_uniform(&f, dt);
            }
            horizon *= 2.0;
        };
        assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
    }

    #[test]
    fn flux_fwhm_matches_dense_sampling() {
        let k = kin(0.1, 1e-3, 0.03, 0.01);
        let fwhm = k.outlet_flux_fwhm();
        let grid = TimeGrid::covering(fwhm / 2000.0, 4.0 * k.peak_time());
        let f = k.sampled_outlet_flux(grid);
        let peak = f.iter().copied().fold(0.0, f64::max);
        let above = f.iter().filter(|&&v| v >= 0.5 * peak).count() as f64 * grid.dt;
        assert!((above - fwhm).abs() <= 2.0 * grid.dt, "{above} vs {fwhm}");
    }

    #[test]
    fn flux_fwhm_of_a_sharp_pulse() {
        // Peclet number near 1e5: the pulse is far narrower than its arrival time.
        let k = kin(1.5, 2.5e-4, 0.05, 0.144);
        let fwhm = k.outlet_flux_fwhm();
        let sigma = (2.0 * k.effective * k.peak_time()).sqrt() / k.velocity;
        assert_relative_eq!(fwhm, 2.0 * (2.0 * 2f64.ln()).sqrt() * sigma, max_relative = 0.02);
    }

    #[test]
    fn flux_peak_within_one_step_of_grid_argmax() {
        let k = kin(0.05, 7.5e-4, 0.09, 0.01);
        let f = |t| k.outlet_flux(t);
        let (t_peak, _) = golden_max(&f, 0.01, 5.0 * k.peak_time());
        let grid = TimeGrid::covering(k.outlet_flux_fwhm() / 50.0, 3.0 * k.peak_time());
        let samples = k.sampled_outlet_flux(grid);
        let argmax = (0..samples.len())
            .max_by(|&a, &b| samples[a].total_cmp(&samples[b]))
            .unwrap();
        assert!((grid.time(argmax) - t_peak).abs() <= grid.dt);
    }

    #[test]
    fn junction_weights_follow_flow_split() {
        let sym = diamond(1e-3, 1e-3);
        let flows = solve_flows(&sym, 1e-7, 1e-3).unwrap();
        assert_relative_eq!(
            junction_weight(&sym, &flows, NodeId(3), PipeId(2)).unwrap(),
            0.5,
            max_relative = 1e-12
        );
        let skew = build(vec![
            pipe(1, 1, 2, 0.05, 1e-3),
            pipe(2, 2, 3, 0.05, 1e-3),
            pipe(3, 2, 3, 0.10, 1e-3),
            pipe(4, 3, 4, 0.05, 1e-3),
        ]);
        let flows = solve_flows(&skew, 1e-7, 1e-3).unwrap();
        assert_relative_eq!(
            junction_weight(&skew, &flows, NodeId(3), PipeId(2)).unwrap(),
            2.0 / 3.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            junction_weight(&skew, &flows, NodeId(3), PipeId(3)).unwrap(),
            1.0 / 3.0,
            max_relative = 1e-12
        );
        assert!(matches!(
            junction_weight(&skew, &flows, NodeId(3), PipeId(4)),
            Err(TransportError::NotAnInflow { .. })
        ));
        let paths = skew.enumerate_paths(NodeId(1), NodeId(4)).unwrap();
        let total: f64 = paths
            .iter()
            .map(|p| path_fraction(&skew, &flows, p).unwrap())
            .sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn junction_free_path_fraction_is_one() {
        let net = single();
        let flows = solve_flows(&net, 1e-7, 1e-3).unwrap();
        let p = &net.enumerate_paths(NodeId(1), NodeId(2)).unwrap()[0];
        assert_eq!(path_fraction(&net, &flows, p).unwrap(), 1.0);
    }

    #[test]
    fn single_pipe_cir_is_the_pipe_kernel() {
        let net = single();
        let q = 10e-6 / 60.0;
        let flows = solve_flows(&net, q, 1e-3).unwrap();
        let kin = DiffusionParams::compute(&net, &flows, testbed_params(0.01)).unwrap();
        let h = end_to_end_cir(
            &net,
            &flows,
            &kin,
            NodeId(1),
            NodeId(2),
            0.05,
            &GridConfig::default(),
        )
        .unwrap();
        let k = kin.pipes[0];
        for (i, &v) in h.samples.iter().enumerate() {
            assert_eq!(v, k.gaussian(0.05, h.time(i)));
        }
        assert_eq!(h.samples[0], 0.0);
    }

    #[test]
    fn concentration_scales() {
        let h = TimeSeries::new(0.0, 0.1, vec![0.0, 1.0, 2.0], Unit::PerMeter);
        assert_eq!(concentration(1.0, &h), h);
        assert_eq!(concentration(2e12, &h).samples, vec![0.0, 2e12, 4e12]);
        assert_eq!(
            concentration(4.0, &h).samples,
            concentration(2.0, &h).scaled(2.0).samples
        );
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let net = single();
        let flows = solve_flows(&net, 1e-7, 1e-3).unwrap();
        let kin = DiffusionParams::compute(&net, &flows, testbed_params(0.01)).unwrap();
        let ch = Channel::new(&net, &flows, &kin, NodeId(1), NodeId(2)).unwrap();
        let fwhm = ch.narrowest_fwhm();
        let err = ch
            .realize(&GridConfig {
                dt: Some(fwhm / 5.0),
                ..Default::default()
            })
            .unwrap_err();
        assert!(matches!(err, TransportError::GridTooCoarse { .. }));
        assert!(err.to_string().contains("use dt <="));
    }

    #[test]
    fn junction_receiver_is_ambiguous() {
        let net = diamond(1e-3, 1e-3);
        let flows = solve_flows(&net, 1e-7, 1e-3).unwrap();
        let kin = DiffusionParams::compute(&net, &flows, testbed_params(0.01)).unwrap();
        assert!(matches!(
            Channel::new(&net, &flows, &kin, NodeId(1), NodeId(3)),
            Err(TransportError::AmbiguousReceiver(_, 2))
        ));
        assert!(matches!(
            Channel::new(&net, &flows, &kin, NodeId(4), NodeId(2)),
            Err(TransportError::NoPath { .. })
        ));
    }
}
