mod common;

use lbvn::hydraulics::solve_flows;
use lbvn::network::{Network, NetworkSpec, NodeId, Pipe, PipeId};
use lbvn::transport::{Channel, DiffusionParams, GridConfig, TransportParams};
use proptest::prelude::*;

fn params(alpha: f64) -> TransportParams {
    TransportParams {
        alpha,
        temperature: 293.0,
        viscosity: 1e-3,
        particle_radius: 24.5e-9,
    }
}

fn pipe(id: u32, from: u32, to: u32, length: f64, radius: f64) -> Pipe {
    Pipe {
        id: PipeId(id),
        from: NodeId(from),
        to: NodeId(to),
        length,
        radius,
    }
}

fn network(pipes: Vec<Pipe>) -> Network {
    Network::build(NetworkSpec {
        pipes,
        ..Default::default()
    })
    .unwrap()
}

fn peak(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

#[test]
fn halving_the_step_barely_moves_the_peak() {
    let nets = [
        network(vec![pipe(1, 1, 2, 0.05, 7.5e-4)]),
        network(vec![
            pipe(1, 1, 2, 0.03, 1e-3),
            pipe(2, 2, 3, 0.05, 1e-3),
            pipe(3, 2, 3, 0.08, 9e-4),
            pipe(4, 3, 4, 0.05, 1e-3),
        ]),
    ];
    for net in &nets {
        let flows = solve_flows(net, 1e-7, 1e-3).unwrap();
        let kin = DiffusionParams::compute(net, &flows, params(0.01)).unwrap();
        let ch = Channel::new(net, &flows, &kin, net.inlet(), net.outlet()).unwrap();
        let coarse = ch.realize(&GridConfig::default()).unwrap();
        let fine = ch
            .realize(&GridConfig {
                dt: Some(coarse.grid.dt / 2.0),
                horizon: Some(coarse.grid.horizon()),
                max_horizon: None,
            })
            .unwrap();
        let l = ch.receiver().length;
        let a = peak(&ch.cir(&coarse, l).unwrap().samples);
        let b = peak(&ch.cir(&fine, l).unwrap().samples);
        assert!(((a - b) / b).abs() < 5e-3, "{a} vs {b}");
    }
}

#[test]
fn starved_side_branch_is_transparent() {
    let (r, l) = (1e-3, 0.05);
    let chain = network(vec![
        pipe(1, 1, 2, l, r),
        pipe(2, 2, 3, l, r),
        pipe(3, 3, 4, l, r),
    ]);
    // (r/30)^4 carries about 1e-6 of the flow.
    let detour = network(vec![
        pipe(1, 1, 2, l, r),
        pipe(2, 2, 3, l, r),
        pipe(3, 2, 3, l, r / 30.0),
        pipe(4, 3, 4, l, r),
    ]);
    let response = |net: &Network, grid: &GridConfig| {
        let flows = solve_flows(net, 1e-7, 1e-3).unwrap();
        let kin = DiffusionParams::compute(net, &flows, params(0.01)).unwrap();
        let ch = Channel::new(net, &flows, &kin, net.inlet(), net.outlet()).unwrap();
        let real = ch.realize(grid).unwrap();
        ch.cir(&real, l).unwrap()
    };
    let straight = response(&chain, &GridConfig::default());
    // The starved branch would need an enormous horizon to deliver its mass;
    // evaluate on the chain's grid instead.
    let grid = GridConfig {
        dt: Some(straight.dt),
        horizon: Some(straight.dt * (straight.len() - 1) as f64),
        max_horizon: Some(straight.dt * (straight.len() - 1) as f64),
    };
    let branched = response(&detour, &grid);
    assert_eq!(branched.len(), straight.len());
    let scale = peak(&straight.samples);
    for (a, b) in straight.samples.iter().zip(&branched.samples) {
        assert!((a - b).abs() <= 1e-2 * scale, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unit_mass_and_normalized_fractions(
        net in common::network(10),
        q in 2e-8f64..2e-7,
        alpha in 0.0f64..0.3,
    ) {
        let flows = solve_flows(&net, q, 1e-3).unwrap();
        let kin = DiffusionParams::compute(&net, &flows, params(alpha)).unwrap();
        let ch = Channel::new(&net, &flows, &kin, net.inlet(), net.outlet()).unwrap();
        let gamma: f64 = ch.fractions().iter().sum();
        prop_assert!((gamma - 1.0).abs() <= 1e-12);
        let real = ch.realize(&GridConfig::default()).unwrap();
        let flux = ch.outlet_flux(&real);
        let mass = flux.dt * flux.samples.iter().sum::<f64>();
        prop_assert!((mass - 1.0).abs() <= 1e-3, "mass {}", mass);
    }
}
