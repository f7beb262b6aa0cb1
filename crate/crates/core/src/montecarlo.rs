//! Particle-tracking oracle for the analytic channel model.
//!
//! Each particle performs a 1D random walk `z += ū Δt + √(2 D_eff Δt) ξ`
//! along its current pipe. It reflects at `z = 0` of the first pipe, hands
//! off one-way at pipe outlets (the rest of the crossing step is walked in
//! the next pipe), picks a bifurcation branch with probability proportional
//! to the branch flow, and records the time it first reaches the target node.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydraulics::FlowSolution;
use crate::network::{Network, NodeId, Path, PipeId};
use crate::series::TimeSeries;
use crate::transport::{bifurcation_split, path_fraction, DiffusionParams, PipeKinetics, TransportError};

/// Largest permitted `ū Δt` as a fraction of the shortest pipe.
pub const MAX_STEP_FRACTION: f64 = 1.0 / 20.0;
/// Default `ū Δt` as a fraction of each pipe length (the tightest pipe wins).
pub const DEFAULT_STEP_FRACTION: f64 = 1.0 / 200.0;
/// Default time cap as a multiple of the latest path peak time.
pub const DEFAULT_MAX_TIME_FACTOR: f64 = 20.0;
/// Largest tolerated fraction of particles hitting the time cap.
pub const MAX_TIMEOUT_FRACTION: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum McError {
    #[error("particle count must be at least 1")]
    NoParticles,
    #[error(
        "step {dt:e} s moves {advance:e} m in pipe {pipe}; must stay below {limit:e} m (shortest pipe / 20)"
    )]
    StepTooLarge {
        dt: f64,
        pipe: PipeId,
        advance: f64,
        limit: f64,
    },
    #[error("{timed_out} of {particles} particles exceeded the time cap of {max_time:e} s")]
    Timeouts {
        timed_out: usize,
        particles: usize,
        max_time: f64,
    },
    #[error("{what} must be positive and finite, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("histogram bins must span a positive whole number of samples")]
    BadBins,
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct McConfig {
    pub particles: usize,
    /// Walk step; defaults to the tightest `DEFAULT_STEP_FRACTION · l / ū`.
    pub dt: Option<f64>,
    pub seed: u64,
    /// Time cap; defaults to `DEFAULT_MAX_TIME_FACTOR` × latest path peak.
    pub max_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Arrived {
        time: f64,
        path: usize,
    },
    TimedOut,
    /// Left through a branch that never reaches the target.
    Lost,
}

/// Arrivals at the target node, in particle order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRun {
    pub particles: usize,
    pub dt: f64,
    pub seed: u64,
    pub max_time: f64,
    pub paths: Vec<Path>,
    pub arrival_times: Vec<f64>,
    /// Index into `paths` for each arrival.
    pub arrival_paths: Vec<usize>,
    pub timed_out: usize,
    pub lost: usize,
}

struct Walker<'a> {
    kin: Vec<&'a PipeKinetics>,
    /// Head node of each pipe, by network pipe position.
    head: Vec<NodeId>,
    /// Per node: outflow pipe positions and cumulative routing probabilities.
    routes: HashMap<NodeId, (Vec<usize>, Vec<f64>)>,
    path_index: HashMap<Vec<PipeId>, usize>,
    ids: Vec<PipeId>,
    to: NodeId,
    first: NodeId,
    dt: f64,
    max_time: f64,
    seed: u64,
}

impl Walker<'_> {
    fn pick(&self, node: NodeId, rng: &mut ChaCha8Rng) -> Option<usize> {
        let (pipes, cumulative) = self.routes.get(&node)?;
        if pipes.len() == 1 {
            return Some(pipes[0]);
        }
        let x: f64 = rng.random();
        let k = cumulative.partition_point(|&c| c <= x).min(pipes.len() - 1);
        Some(pipes[k])
    }

    fn walk(&self, particle: u64) -> Outcome {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(particle);
        let Some(mut pipe) = self.pick(self.first, &mut rng) else {
            return Outcome::Lost;
        };
        let mut route = vec![self.ids[pipe]];
        let mut reflecting = true;
        let (mut z, mut t) = (0.0, 0.0);
        // Length of the next step; shorter than `dt` right after a handoff so
        // the walk stays on the `k·dt` grid.
        let mut h = self.dt;
        loop {
            let k = self.kin[pipe];
            let (l, d, u) = (k.length, k.effective, k.velocity);
            let t_cross = loop {
                if t >= self.max_time {
                    return Outcome::TimedOut;
                }
                let xi: f64 = rng.sample(StandardNormal);
                let mut next = z + u * h + (2.0 * d * h).sqrt() * xi;
                if reflecting && next < 0.0 {
                    next = -next;
                }
                if next >= l {
                    let frac = (l - z) / (next - z);
                    break t + frac * h;
                }
                // Brownian-bridge probability of an unseen excursion past l.
                let gap = (l - z) * (l - next);
                let bridge = (-gap / (d * h)).exp();
                if bridge > 1e-12 && rng.random::<f64>() < bridge {
                    let frac = (l - z) / ((l - z) + (l - next));
                    break t + frac * h;
                }
                z = next;
                t += h;
                h = self.dt;
            };
            let node = self.head[pipe];
            if node == self.to {
                return match self.path_index.get(&route) {
                    Some(&path) => Outcome::Arrived { time: t_cross, path },
                    None => Outcome::Lost,
                };
            }
            match self.pick(node, &mut rng) {
                Some(p) => {
                    pipe = p;
                    route.push(self.ids[p]);
                }
                None => return Outcome::Lost,
            }
            // The rest of the crossing step is spent in the new pipe.
            let step_end = t + h;
            reflecting = false;
            z = 0.0;
            t = t_cross;
            h = step_end - t_cross;
            if h <= 0.0 {
                h = self.dt;
            }
        }
    }
}

/// Runs `cfg.particles` independent walkers from `from` to `to`.
pub fn simulate_particles(
    net: &Network,
    flows: &FlowSolution,
    kinetics: &DiffusionParams,
    from: NodeId,
    to: NodeId,
    cfg: &McConfig,
) -> Result<ParticleRun, McError> {
    if cfg.particles == 0 {
        return Err(McError::NoParticles);
    }
    let paths = net.enumerate_paths(from, to).map_err(TransportError::from)?;
    if paths.is_empty() {
        return Err(TransportError::NoPath { from, to }.into());
    }
    let kin: Vec<&PipeKinetics> = net
        .pipes()
        .iter()
        .map(|p| kinetics.pipe(net, p.id).map_err(TransportError::from))
        .collect::<Result<_, _>>()?;
    let l_min = kin.iter().map(|k| k.length).fold(f64::INFINITY, f64::min);
    let dt = match cfg.dt {
        Some(dt) if dt.is_finite() && dt > 0.0 => dt,
        Some(dt) => {
            return Err(McError::NonPositive {
                what: "step",
                value: dt,
            })
        }
        None => kin
            .iter()
            .map(|k| DEFAULT_STEP_FRACTION * k.length / k.velocity)
            .fold(f64::INFINITY, f64::min),
    };
    let limit = MAX_STEP_FRACTION * l_min;
    if let Some(k) = kin.iter().find(|k| k.velocity * dt >= limit) {
        return Err(McError::StepTooLarge {
            dt,
            pipe: k.id,
            advance: k.velocity * dt,
            limit,
        });
    }
    let last_peak = paths
        .iter()
        .map(|p| {
            p.pipes
                .iter()
                .map(|&id| kinetics.pipe(net, id).map(|k| k.peak_time()))
                .sum::<Result<f64, _>>()
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(TransportError::from)?
        .into_iter()
        .fold(0.0, f64::max);
    let max_time = match cfg.max_time {
        Some(t) if t.is_finite() && t > 0.0 => t,
        Some(t) => {
            return Err(McError::NonPositive {
                what: "time cap",
                value: t,
            })
        }
        None => DEFAULT_MAX_TIME_FACTOR * last_peak,
    };

    let mut routes = HashMap::new();
    for node in net.nodes() {
        let split = bifurcation_split(net, flows, node.id)?;
        if split.is_empty() {
            continue;
        }
        let mut acc = 0.0;
        let (mut pipes, mut cumulative) = (Vec::new(), Vec::new());
        for (id, prob) in split {
            acc += prob;
            pipes.push(net.pipe_position(id).map_err(TransportError::from)?);
            cumulative.push(acc);
        }
        routes.insert(node.id, (pipes, cumulative));
    }
    let walker = Walker {
        kin,
        head: net.pipes().iter().map(|p| p.to).collect(),
        routes,
        path_index: paths
            .iter()
            .enumerate()
            .map(|(i, p)| (p.pipes.clone(), i))
            .collect(),
        ids: net.pipes().iter().map(|p| p.id).collect(),
        to,
        first: from,
        dt,
        max_time,
        seed: cfg.seed,
    };

    let outcomes: Vec<Outcome> = (0..cfg.particles as u64)
        .into_par_iter()
        .map(|i| walker.walk(i))
        .collect();

    let mut run = ParticleRun {
        particles: cfg.particles,
        dt,
        seed: cfg.seed,
        max_time,
        paths,
        arrival_times: Vec::with_capacity(cfg.particles),
        arrival_paths: Vec::with_capacity(cfg.particles),
        timed_out: 0,
        lost: 0,
    };
    for o in outcomes {
        match o {
            Outcome::Arrived { time, path } => {
                run.arrival_times.push(time);
                run.arrival_paths.push(path);
            }
            Outcome::TimedOut => run.timed_out += 1,
            Outcome::Lost => run.lost += 1,
        }
    }
    if run.timed_out as f64 >= MAX_TIMEOUT_FRACTION * cfg.particles as f64 {
        return Err(McError::Timeouts {
            timed_out: run.timed_out,
            particles: cfg.particles,
            max_time,
        });
    }
    if run.timed_out > 0 {
        log::warn!("{} particles exceeded the time cap", run.timed_out);
    }
    Ok(run)
}

/// Arrival counts on bins aligned with an analytic flux grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
    /// Arrivals after the last bin, plus particles that never arrived.
    pub overflow: u64,
    pub total: u64,
}

impl Histogram {
    pub fn bin_start(&self, k: usize) -> f64 {
        k as f64 * self.bin_width
    }
}

/// Comparison between a particle run and the analytic outlet flux.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxComparison {
    pub histogram: Histogram,
    /// Analytic probability per bin.
    pub expected: Vec<f64>,
    pub tv_distance: f64,
}

/// Bins arrivals over the span of `flux` with `samples_per_bin` grid steps
/// per bin and returns the total-variation distance to the binned flux.
pub fn compare_with_flux(
    run: &ParticleRun,
    flux: &TimeSeries,
    samples_per_bin: usize,
) -> Result<FluxComparison, McError> {
    if samples_per_bin == 0 || flux.len() < samples_per_bin + 1 {
        return Err(McError::BadBins);
    }
    let bins = (flux.len() - 1) / samples_per_bin;
    let width = flux.dt * samples_per_bin as f64;
    let expected: Vec<f64> = (0..bins)
        .map(|b| {
            let s = &flux.samples[b * samples_per_bin..=(b + 1) * samples_per_bin];
            crate::quadrature::trapezoid_uniform(s, flux.dt)
        })
        .collect();
    let mut counts = vec![0u64; bins];
    let mut overflow = (run.particles - run.arrival_times.len()) as u64;
    for &t in &run.arrival_times {
        let k = ((t - flux.t0) / width).floor();
        if k >= 0.0 && (k as usize) < bins {
            counts[k as usize] += 1;
        } else {
            overflow += 1;
        }
    }
    let n = run.particles as f64;
    let tail = (1.0 - expected.iter().sum::<f64>()).max(0.0);
    let tv = 0.5
        * (counts
            .iter()
            .zip(&expected)
            .map(|(&c, &q)| (c as f64 / n - q).abs())
            .sum::<f64>()
            + (overflow as f64 / n - tail).abs());
    Ok(FluxComparison {
        histogram: Histogram {
            bin_width: width,
            counts,
            overflow,
            total: run.particles as u64,
        },
        expected,
        tv_distance: tv,
    })
}

/// Empirical path frequency against the analytic path fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCheck {
    pub pipes: Vec<PipeId>,
    pub fraction: f64,
    pub count: usize,
    pub frequency: f64,
    /// Binomial standard deviation `√(γ(1−γ)/N)`.
    pub std_dev: f64,
}

impl PathCheck {
    /// Deviation in binomial standard deviations.
    pub fn z_score(&self) -> f64 {
        if self.std_dev == 0.0 {
            if self.frequency == self.fraction {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.frequency - self.fraction) / self.std_dev
        }
    }
}

pub fn path_frequencies(
    run: &ParticleRun,
    net: &Network,
    flows: &FlowSolution,
) -> Result<Vec<PathCheck>, McError> {
    let n = run.particles as f64;
    let mut counts = vec![0usize; run.paths.len()];
    for &p in &run.arrival_paths {
        counts[p] += 1;
    }
    run.paths
        .iter()
        .zip(counts)
        .map(|(path, count)| {
            let fraction = path_fraction(net, flows, path)?;
            Ok(PathCheck {
                pipes: path.pipes.clone(),
                fraction,
                count,
                frequency: count as f64 / n,
                std_dev: (fraction * (1.0 - fraction) / n).sqrt(),
            })
        })
        .collect()
}
