//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lbvn::family::{family, Template, FAMILY_FLOW_RATE, TEMPLATES};
use lbvn::hydraulics::solve_flows;
use lbvn::metrics::{pipe_peak_time, spearman};
use lbvn::montecarlo::{compare_with_flux, path_frequencies, simulate_particles, McConfig};
use lbvn::network::{Network, NetworkSpec, NodeId, Pipe, PipeId};
use lbvn::receiver::{
    add_noise, resonance_frequency, resonance_shift, DEFAULT_CAPACITANCE, DEFAULT_L0, DEFAULT_NOISE_VARIANCE,
};
use lbvn::scenario::{dispersion_space, dispersion_table, simulate, sweep, ScenarioConfig, SweepParameter};
use lbvn::series::{TimeGrid, TimeSeries, Unit};
use lbvn::transport::{
    eddy_diffusion, effective_diffusion, molecular_diffusion, Channel, DiffusionParams, GridConfig,
    PipeKinetics, TransportParams, SAMPLES_PER_FWHM,
};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

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
    .expect("valid fixture")
}

fn params(alpha: f64) -> TransportParams {
    TransportParams {
        alpha,
        temperature: 293.0,
        viscosity: 1e-3,
        particle_radius: 24.5e-9,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn diffusion_constants() -> Outcome {
    let d = molecular_diffusion(293.0, 1e-3, 24.5e-9);
    let k = eddy_diffusion(2.0, 0.05, 6.5e-4).map_err(|e| e.to_string())?;
    let eff = effective_diffusion(6.5e-4, 0.05, d + k);
    let d_ok = rel(d, 8.61e-12) <= 5e-3;
    let k_ok = k == 6.5e-5;
    let eff_ok = rel(eff, 6.53e-5) <= 5e-3;
    check(
        d_ok && k_ok && eff_ok,
        format!(
            "D = {d:.5e} (target 8.61e-12 ±0.5%, off {:.2}%) [{}]; K = {k:e} [{}]; D_eff = {eff:.5e} (off {:.2}%) [{}]",
            100.0 * rel(d, 8.61e-12),
            if d_ok { "ok" } else { "fail" },
            if k_ok { "ok" } else { "fail" },
            100.0 * rel(eff, 6.53e-5),
            if eff_ok { "ok" } else { "fail" },
        ),
    )
}

fn mass_conservation() -> Outcome {
    let testbed = 10e-6 / 60.0;
    let mut cases: Vec<(String, Network, f64)> = vec![
        (
            "single".into(),
            network(vec![pipe(1, 1, 2, 0.05, 7.5e-4)]),
            testbed,
        ),
        (
            "series".into(),
            network(vec![
                pipe(1, 1, 2, 0.03, 7.5e-4),
                pipe(2, 2, 3, 0.05, 1e-3),
                pipe(3, 3, 4, 0.02, 5e-4),
            ]),
            testbed,
        ),
        (
            "diamond".into(),
            network(vec![
                pipe(1, 1, 2, 0.05, 1e-3),
                pipe(2, 2, 3, 0.05, 1e-3),
                pipe(3, 2, 3, 0.05, 1e-3),
                pipe(4, 3, 4, 0.05, 1e-3),
            ]),
            testbed,
        ),
    ];
    for t in &TEMPLATES {
        let net = t.network().map_err(|e| e.to_string())?;
        cases.push((format!("c{}-0", t.class), net, FAMILY_FLOW_RATE));
    }
    let (mut worst_mass, mut worst_gamma) = (0.0f64, 0.0f64);
    for (label, net, q) in &cases {
        let flows = solve_flows(net, *q, 1e-3).map_err(|e| format!("{label}: {e}"))?;
        let kin = DiffusionParams::compute(net, &flows, params(0.01)).map_err(|e| format!("{label}: {e}"))?;
        let ch = Channel::new(net, &flows, &kin, net.inlet(), net.outlet())
            .map_err(|e| format!("{label}: {e}"))?;
        let real = ch
            .realize(&GridConfig::default())
            .map_err(|e| format!("{label}: {e}"))?;
        let flux = ch.outlet_flux(&real);
        let mass = flux.dt * flux.samples.iter().sum::<f64>();
        let gamma: f64 = ch.fractions().iter().sum();
        worst_mass = worst_mass.max((mass - 1.0).abs());
        worst_gamma = worst_gamma.max((gamma - 1.0).abs());
    }
    check(
        worst_mass <= 1e-3 && worst_gamma <= 1e-12,
        format!(
            "{} networks; max |mass - 1| = {worst_mass:.2e} (tol 1e-3); max |sum gamma - 1| = {worst_gamma:.1e} (tol 1e-12)",
            cases.len()
        ),
    )
}

fn closed_form_peak_time() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let d = molecular_diffusion(293.0, 1e-3, 24.5e-9);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let k = PipeKinetics::new(
            PipeId(i),
            rng.random_range(0.01..0.3),
            rng.random_range(2.5e-4..1.5e-3),
            rng.random_range(5e-3..0.2),
            d,
            rng.random_range(0.0..0.5),
        )
        .map_err(|e| e.to_string())?;
        let t_peak = pipe_peak_time(&k);
        let grid = TimeGrid::covering(k.outlet_flux_fwhm() / SAMPLES_PER_FWHM, 3.0 * t_peak);
        let h = k.sampled_cir(k.length, grid);
        let argmax = (0..h.len())
            .max_by(|&a, &b| h[a].total_cmp(&h[b]))
            .expect("non-empty grid");
        worst = worst.max((grid.time(argmax) - t_peak).abs() / grid.dt);
    }
    check(
        worst <= 1.0,
        format!("20 random pipes; max |t_closed - t_argmax| = {worst:.3} dt (tol 1 dt)"),
    )
}

fn mc_case(label: &str, net: &Network, seed: u64) -> Result<(f64, f64), String> {
    let flows = solve_flows(net, 1e-8, 1e-3).map_err(|e| e.to_string())?;
    let kin = DiffusionParams::compute(net, &flows, params(0.144)).map_err(|e| e.to_string())?;
    let ch = Channel::new(net, &flows, &kin, net.inlet(), net.outlet()).map_err(|e| e.to_string())?;
    let real = ch.realize(&GridConfig::default()).map_err(|e| e.to_string())?;
    let flux = ch.outlet_flux(&real);
    let cfg = McConfig {
        particles: 1_000_000,
        dt: None,
        seed,
        max_time: None,
    };
    let run = simulate_particles(net, &flows, &kin, net.inlet(), net.outlet(), &cfg)
        .map_err(|e| format!("{label}: {e}"))?;
    let tv = compare_with_flux(&run, &flux, 5)
        .map_err(|e| format!("{label}: {e}"))?
        .tv_distance;
    let z = path_frequencies(&run, net, &flows)
        .map_err(|e| format!("{label}: {e}"))?
        .iter()
        .map(|c| c.z_score().abs())
        .fold(0.0, f64::max);
    Ok((tv, z))
}

fn oracle_equivalence() -> Outcome {
    let r = 5e-4;
    let diamond = network(vec![
        pipe(1, 1, 2, 0.5, r),
        pipe(2, 2, 3, 0.5, r),
        pipe(3, 2, 3, 0.5, r / 2f64.powf(0.25)),
        pipe(4, 3, 4, 0.5, r),
    ]);
    let c14 = family()
        .map_err(|e| e.to_string())?
        .into_iter()
        .find(|(l, _)| l == "c1-4")
        .ok_or("c1-4 missing")?
        .1;
    let mut spec = c14.to_spec();
    for p in &mut spec.pipes {
        p.length *= 20.0;
        p.radius = 2.5e-4;
    }
    let eight = Network::build(spec).map_err(|e| e.to_string())?;
    if eight.pipe_count() != 8 {
        return Err(format!("expected 8 pipes, got {}", eight.pipe_count()));
    }
    let (tv_d, z_d) = mc_case("diamond", &diamond, 1)?;
    let (tv_e, z_e) = mc_case("8-pipe", &eight, 2)?;
    check(
        tv_d < 0.03 && tv_e < 0.03 && z_d < 3.0 && z_e < 3.0,
        format!(
            "1e6 particles; diamond TV {tv_d:.4}, max |z| {z_d:.2}; 8-pipe ({} paths) TV {tv_e:.4}, max |z| {z_e:.2} (tol TV < 0.03, |z| < 3)",
            eight.enumerate_paths(eight.inlet(), eight.outlet()).map_err(|e| e.to_string())?.len()
        ),
    )
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn testbed_trends() -> Outcome {
    let net = network(vec![pipe(1, 1, 2, 0.05, 7.5e-4)]);
    let cfg = ScenarioConfig {
        alpha: 0.01,
        molecules: 2e12,
        noise: false,
        ..Default::default()
    };
    let field = cfg.field_profile().map_err(|e| e.to_string())?;
    let values: Vec<f64> = (5..=14).map(|ml| ml as f64 * 1e-6 / 60.0).collect();
    let rows = sweep(&net, &cfg, &field, SweepParameter::Q, &values).map_err(|e| e.to_string())?;
    let heights: Vec<f64> = rows.iter().map(|r| r.peak_height_hz).collect();
    let widths: Vec<f64> = rows.iter().map(|r| r.fwhm_s).collect();
    check(
        strictly_decreasing(&heights) && strictly_decreasing(&widths),
        format!(
            "Q 5..14 mL/min; peak height {:.4} -> {:.4} Hz, FWHM {:.4} -> {:.4} s; both strictly decreasing: {}",
            heights[0],
            heights[heights.len() - 1],
            widths[0],
            widths[widths.len() - 1],
            strictly_decreasing(&heights) && strictly_decreasing(&widths),
        ),
    )
}

fn dispersion_experiment() -> Outcome {
    let nets = family().map_err(|e| e.to_string())?;
    if nets.len() != 28 {
        return Err(format!("family has {} networks", nets.len()));
    }
    let cfg = ScenarioConfig {
        flow_rate_m3_s: FAMILY_FLOW_RATE,
        molecules: 2e12,
        ..Default::default()
    };
    let field = cfg.field_profile().map_err(|e| e.to_string())?;
    let mut points = Vec::new();
    for (label, res) in dispersion_space(&nets, &cfg, &field) {
        points.push(res.map_err(|e| format!("{label}: {e}"))?);
    }
    let snr: Vec<f64> = points.iter().map(|p| p.snr_db.unwrap_or(f64::NAN)).collect();
    let delay: Vec<f64> = points.iter().map(|p| p.delay).collect();
    let spread: Vec<f64> = points.iter().map(|p| p.spread).collect();
    let (rho_d, rho_s) = (spearman(&snr, &delay), spearman(&snr, &spread));
    let singles: Vec<_> = points.iter().filter(|p| p.path_count == 1).collect();
    let best = points
        .iter()
        .max_by(|a, b| {
            a.snr_db
                .unwrap_or(f64::NAN)
                .total_cmp(&b.snr_db.unwrap_or(f64::NAN))
        })
        .ok_or("no points")?;
    let unique = singles.len() == 1;
    let single_ok = unique && singles[0].spread == 0.0 && singles[0].label == best.label;
    check(
        rho_d < 0.0 && rho_s < 0.0 && single_ok,
        format!(
            "28 networks; rho(SNR, delay) = {rho_d:.3}, rho(SNR, spread) = {rho_s:.3}; single-path {} (spread {:e}); max SNR {} at {:.2} dB",
            singles.iter().map(|p| p.label.as_str()).collect::<Vec<_>>().join(","),
            singles.first().map(|p| p.spread).unwrap_or(f64::NAN),
            best.label,
            best.snr_db.unwrap_or(f64::NAN),
        ),
    )
}

fn receiver_chain() -> Outcome {
    let f0 = resonance_frequency(DEFAULT_L0, DEFAULT_CAPACITANCE);
    let f0_ok = rel(f0, 1.3439e6) <= 1e-4;
    let chis = [1e-3, 3e-3, 1e-2, 5e-2, 0.1];
    let l = TimeSeries::new(
        0.0,
        1.0,
        chis.iter().map(|c| (1.0 + c) * DEFAULT_L0).collect(),
        Unit::Henry,
    );
    let shift = resonance_shift(&l, DEFAULT_L0, DEFAULT_CAPACITANCE);
    let worst_shift = l
        .samples
        .iter()
        .zip(&shift.samples)
        .map(|(&li, &s)| rel(s, resonance_frequency(li, DEFAULT_CAPACITANCE) - f0))
        .fold(0.0, f64::max);
    let zeros = TimeSeries::new(0.0, 1.0, vec![0.0; 1_000_000], Unit::Hertz);
    let noise = add_noise(&zeros, DEFAULT_NOISE_VARIANCE, 0.0, 7).map_err(|e| e.to_string())?;
    let n = noise.len() as f64;
    let mean = noise.samples.iter().sum::<f64>() / n;
    let var = noise.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let var_ok = rel(var, 382.2) <= 1e-2;
    check(
        f0_ok && worst_shift <= 1e-12 && var_ok,
        format!(
            "f0 = {:.6} MHz (off {:.4}%); shift form vs f - f0 max rel {worst_shift:.1e} (tol 1e-12); noise variance {:.4} kHz^2 over 1e6 samples (off {:.3}%)",
            f0 / 1e6,
            100.0 * rel(f0, 1.3439e6),
            var / 1e3,
            100.0 * rel(var, 382.2),
        ),
    )
}

fn determinism() -> Outcome {
    let net = network(vec![
        pipe(1, 1, 2, 0.03, 1e-3),
        pipe(2, 2, 3, 0.05, 1e-3),
        pipe(3, 2, 3, 0.06, 9e-4),
        pipe(4, 3, 4, 0.05, 1e-3),
    ]);
    let cfg = ScenarioConfig {
        seed: 99,
        ..Default::default()
    };
    let field = cfg.field_profile().map_err(|e| e.to_string())?;
    let members: Vec<(String, Network)> = TEMPLATES
        .iter()
        .take(1)
        .flat_map(Template::members)
        .flatten()
        .map(|n| (n.label().unwrap_or_default().to_string(), n))
        .collect();
    let family_cfg = ScenarioConfig {
        flow_rate_m3_s: FAMILY_FLOW_RATE,
        ..Default::default()
    };
    let produce = || -> Result<(String, String, String), String> {
        let sim = simulate(&net, &cfg, &field).map_err(|e| e.to_string())?;
        let points: Vec<_> = dispersion_space(&members, &family_cfg, &field)
            .into_iter()
            .map(|(l, r)| r.map_err(|e| format!("{l}: {e}")))
            .collect::<Result<_, _>>()?;
        let flows = solve_flows(&net, 1e-7, 1e-3).map_err(|e| e.to_string())?;
        let kin = DiffusionParams::compute(&net, &flows, params(0.05)).map_err(|e| e.to_string())?;
        let run = simulate_particles(
            &net,
            &flows,
            &kin,
            net.inlet(),
            net.outlet(),
            &McConfig {
                particles: 20_000,
                dt: None,
                seed: 5,
                max_time: None,
            },
        )
        .map_err(|e| e.to_string())?;
        let times: String = run.arrival_times.iter().map(|t| format!("{t:e}\n")).collect();
        Ok((
            sim.signal_table().to_string(),
            dispersion_table(&points).to_string(),
            times,
        ))
    };
    let pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())
    };
    let a = produce()?;
    let b = produce()?;
    let c = pool(1)?.install(produce)?;
    let d = pool(7)?.install(produce)?;
    let same = a == b && a == c && a == d;
    check(
        same,
        format!(
            "signal CSV ({} bytes), dispersion CSV ({} bytes), MC arrivals: identical across 2 runs and 1/7/default threads: {same}",
            a.0.len(),
            a.1.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (1, "diffusion constants", diffusion_constants),
        (2, "mass conservation", mass_conservation),
        (3, "closed-form peak time", closed_form_peak_time),
        (4, "Monte Carlo oracle equivalence", oracle_equivalence),
        (5, "testbed trends", testbed_trends),
        (6, "dispersion-space experiment", dispersion_experiment),
        (7, "receiver chain", receiver_chain),
        (8, "determinism", determinism),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}, {secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}, {secs:.1} s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
