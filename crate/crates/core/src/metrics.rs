//! Closed-form topology metrics: path peak times, molecule delay, and
//! multi-path spread.

use serde::{Deserialize, Serialize};

use crate::hydraulics::FlowSolution;
use crate::network::{Network, NodeId, Path, PipeId};
use crate::transport::{path_fraction, DiffusionParams, PipeKinetics, TransportError};

/// `(−D_eff + √(D_eff² + ū² l²)) / ū²`.
pub fn pipe_peak_time(pipe: &PipeKinetics) -> f64 {
    pipe.peak_time()
}

pub fn path_peak_time(net: &Network, kinetics: &DiffusionParams, path: &Path) -> Result<f64, TransportError> {
    path.pipes
        .iter()
        .map(|&id| Ok(kinetics.pipe(net, id)?.peak_time()))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub pipes: Vec<PipeId>,
    pub fraction: f64,
    pub peak_time: f64,
}

/// Delay and spread together with the per-path terms they are built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyMetrics {
    pub paths: Vec<PathSummary>,
    pub delay: f64,
    pub spread: f64,
}

impl TopologyMetrics {
    pub fn compute(
        net: &Network,
        flows: &FlowSolution,
        kinetics: &DiffusionParams,
        from: NodeId,
        to: NodeId,
    ) -> Result<Self, TransportError> {
        let found = net.enumerate_paths(from, to)?;
        if found.is_empty() {
            return Err(TransportError::NoPath { from, to });
        }
        let paths = found
            .into_iter()
            .map(|p| {
                Ok(PathSummary {
                    fraction: path_fraction(net, flows, &p)?,
                    peak_time: path_peak_time(net, kinetics, &p)?,
                    pipes: p.pipes,
                })
            })
            .collect::<Result<Vec<_>, TransportError>>()?;
        let (delay, spread) = delay_and_spread(
            &paths.iter().map(|p| p.fraction).collect::<Vec<_>>(),
            &paths.iter().map(|p| p.peak_time).collect::<Vec<_>>(),
        );
        Ok(Self { paths, delay, spread })
    }

    pub fn first_peak(&self) -> f64 {
        self.paths
            .iter()
            .map(|p| p.peak_time)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn last_peak(&self) -> f64 {
        self.paths.iter().map(|p| p.peak_time).fold(0.0, f64::max)
    }
}

/// `Σ γ_k t_k` and `√(Σ γ_k (t_k − delay)²)`.
pub fn delay_and_spread(fractions: &[f64], peak_times: &[f64]) -> (f64, f64) {
    let delay: f64 = fractions.iter().zip(peak_times).map(|(g, t)| g * t).sum();
    if fractions.len() < 2 {
        return (delay, 0.0);
    }
    let var: f64 = fractions
        .iter()
        .zip(peak_times)
        .map(|(g, t)| g * (t - delay).powi(2))
        .sum();
    (delay, var.max(0.0).sqrt())
}

pub fn molecule_delay(
    net: &Network,
    flows: &FlowSolution,
    kinetics: &DiffusionParams,
    from: NodeId,
    to: NodeId,
) -> Result<f64, TransportError> {
    Ok(TopologyMetrics::compute(net, flows, kinetics, from, to)?.delay)
}

pub fn multipath_spread(
    net: &Network,
    flows: &FlowSolution,
    kinetics: &DiffusionParams,
    from: NodeId,
    to: NodeId,
) -> Result<f64, TransportError> {
    Ok(TopologyMetrics::compute(net, flows, kinetics, from, to)?.spread)
}

/// A network placed in the (delay, spread) plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionPoint {
    pub label: String,
    pub delay: f64,
    pub spread: f64,
    pub snr_db: Option<f64>,
    pub path_count: usize,
}

/// Spearman rank correlation, ties given their average rank.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = 0.5 * (i + j) as f64 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}
