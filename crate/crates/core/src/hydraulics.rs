//! Steady laminar flow through the network via its equivalent resistor
//! circuit: pipes are Hagen–Poiseuille resistors, the inlet is a current
//! (flow) source and the outlet is grounded.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::network::{Network, NetworkError, Pipe, PipeId};

/// Relative residual the nodal solve must reach.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydraulicsError {
    #[error("inlet flow rate must be positive and finite, got {0}")]
    InvalidFlow(f64),
    #[error("viscosity must be positive and finite, got {0}")]
    InvalidViscosity(f64),
    #[error("nodal system is singular ({nodes} unknown potentials)")]
    Singular { nodes: usize },
    #[error("nodal solve residual {residual:e} exceeds {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
    #[error("pipe {pipe} carries non-positive flow {flow:e} m^3/s; its declared direction contradicts the pressure field")]
    ReversedFlow { pipe: PipeId, flow: f64 },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Hagen–Poiseuille resistance `8 μ l / (π r⁴)` in Pa·s/m³.
pub fn pipe_resistance(pipe: &Pipe, viscosity: f64) -> f64 {
    8.0 * viscosity * pipe.length / (PI * pipe.radius.powi(4))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// Cross-sectional mean velocity per pipe (m/s), in network pipe order.
    pub velocities: Vec<f64>,
    /// Volumetric flow per pipe (m³/s), in network pipe order.
    pub flow_rates: Vec<f64>,
    /// Pressure per node (Pa) relative to the outlet, in network node order.
    pub potentials: Vec<f64>,
    pub inlet_flow: f64,
    pub viscosity: f64,
}

impl FlowSolution {
    pub fn flow(&self, net: &Network, pipe: PipeId) -> Result<f64, NetworkError> {
        Ok(self.flow_rates[net.pipe_position(pipe)?])
    }

    pub fn velocity(&self, net: &Network, pipe: PipeId) -> Result<f64, NetworkError> {
        Ok(self.velocities[net.pipe_position(pipe)?])
    }
}

/// Solves the nodal equations `G p = s` with `s` the inlet source.
pub fn solve_flows(net: &Network, inlet_flow: f64, viscosity: f64) -> Result<FlowSolution, HydraulicsError> {
    if !(inlet_flow.is_finite() && inlet_flow > 0.0) {
        return Err(HydraulicsError::InvalidFlow(inlet_flow));
    }
    if !(viscosity.is_finite() && viscosity > 0.0) {
        return Err(HydraulicsError::InvalidViscosity(viscosity));
    }

    let outlet = net.node_position(net.outlet())?;
    let inlet = net.node_position(net.inlet())?;
    let v = net.node_count();
    // Unknown index for every node except the grounded outlet.
    let unknown = |n: usize| -> Option<usize> {
        match n.cmp(&outlet) {
            std::cmp::Ordering::Less => Some(n),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(n - 1),
        }
    };

    let m = v - 1;
    let mut g = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    let mut conductances = Vec::with_capacity(net.pipe_count());
    let mut ends = Vec::with_capacity(net.pipe_count());
    for pipe in net.pipes() {
        let c = 1.0 / pipe_resistance(pipe, viscosity);
        let a = net.node_position(pipe.from)?;
        let b = net.node_position(pipe.to)?;
        conductances.push(c);
        ends.push((a, b));
        let (ua, ub) = (unknown(a), unknown(b));
        if let Some(i) = ua {
            g[(i, i)] += c;
        }
        if let Some(j) = ub {
            g[(j, j)] += c;
        }
        if let (Some(i), Some(j)) = (ua, ub) {
            g[(i, j)] -= c;
            g[(j, i)] -= c;
        }
    }
    if let Some(i) = unknown(inlet) {
        rhs[i] = inlet_flow;
    }

    let solution = g
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(HydraulicsError::Singular { nodes: m })?;
    let residual = (&g * &solution - &rhs).amax() / rhs.amax();
    if residual.is_nan() || residual >= SOLVE_TOLERANCE {
        return Err(HydraulicsError::Residual {
            residual,
            tolerance: SOLVE_TOLERANCE,
        });
    }

    let potentials: Vec<f64> = (0..v).map(|n| unknown(n).map_or(0.0, |i| solution[i])).collect();
    let mut flow_rates = Vec::with_capacity(net.pipe_count());
    let mut velocities = Vec::with_capacity(net.pipe_count());
    for (k, pipe) in net.pipes().iter().enumerate() {
        let (a, b) = ends[k];
        let q = conductances[k] * (potentials[a] - potentials[b]);
        if q.is_nan() || q <= inlet_flow * 1e-12 {
            return Err(HydraulicsError::ReversedFlow {
                pipe: pipe.id,
                flow: q,
            });
        }
        flow_rates.push(q);
        velocities.push(q / (PI * pipe.radius * pipe.radius));
    }

    Ok(FlowSolution {
        velocities,
        flow_rates,
        potentials,
        inlet_flow,
        viscosity,
    })
}
