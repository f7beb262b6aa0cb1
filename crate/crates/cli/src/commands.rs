use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use lbvn::family::{family as family_networks, FAMILY_FLOW_RATE};
use lbvn::hydraulics::solve_flows;
use lbvn::io::{
    network_to_toml, num, parse_network, parse_quantity, read_network, read_network_list, CsvTable, IoError,
    NetworkEntry, NetworkList, NETWORK_FORMAT_VERSION,
};
use lbvn::montecarlo::{compare_with_flux, path_frequencies, simulate_particles, McConfig};
use lbvn::network::Network;
use lbvn::scenario::{
    dispersion_space, dispersion_table, sweep_table, ScenarioConfig, SimError, Summary, SweepParameter,
};
use lbvn::transport::{Channel, DiffusionParams};

use crate::error::{sim_code, CliError};
use crate::ScenarioArgs;

const RESOLVED: &str = "scenario.resolved.toml";

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("plain data serializes to TOML")
}

/// Scenario file with command-line overrides applied, validated.
fn config(args: &ScenarioArgs) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &args.scenario {
        Some(path) => ScenarioConfig::read(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(n) = &args.network {
        cfg.network = Some(n.clone());
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.no_noise {
        cfg.noise = false;
    }
    if let Some(q) = &args.flow_rate {
        cfg.flow_rate_m3_s = parse_quantity(q)?;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(n) = args.molecules {
        cfg.molecules = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load(args: &ScenarioArgs) -> Result<(ScenarioConfig, Network), CliError> {
    let cfg = config(args)?;
    let path = cfg.network.clone().ok_or_else(|| {
        CliError::Usage("no network: set `network` in the scenario or pass --network".into())
    })?;
    let net = read_network(&path)?;
    Ok((cfg, net))
}

fn print_summary(s: &Summary) {
    if let Some(label) = &s.label {
        println!("network            {label}");
    }
    println!("f_res,0            {} Hz", num(s.base_frequency_hz));
    println!(
        "SNR                {:.4} dB (window {} .. {} s)",
        s.snr.snr_db,
        num(s.snr.t0),
        num(s.snr.t1)
    );
    println!(
        "peak |delta f|     {} Hz at {} s",
        num(s.peak.height),
        num(s.peak.time)
    );
    println!("FWHM               {} s", num(s.peak.fwhm));
    println!("molecule delay     {} s", num(s.delay_s));
    println!("multi-path spread  {} s", num(s.spread_s));
    println!("paths              {}", s.path_count);
    println!(
        "grid               dt {} s, horizon {} s",
        num(s.dt_s),
        num(s.horizon_s)
    );
}

pub fn simulate(args: &ScenarioArgs, out: &Path) -> Result<(), CliError> {
    let (cfg, net) = load(args)?;
    let field = cfg.field_profile()?;
    let sim = lbvn::scenario::simulate(&net, &cfg, &field)?;
    write(out, "signal.csv", &sim.signal_table().to_string())?;
    write(out, "summary.toml", &to_toml(&sim.summary))?;
    write(out, RESOLVED, &cfg.to_toml())?;
    print_summary(&sim.summary);
    Ok(())
}

pub fn sweep(args: &ScenarioArgs, param: &str, values: &[String], out: &Path) -> Result<(), CliError> {
    let param: SweepParameter = param.parse().map_err(CliError::Usage)?;
    let values = values
        .iter()
        .map(|v| parse_quantity(v))
        .collect::<Result<Vec<f64>, IoError>>()?;
    let (cfg, net) = load(args)?;
    let field = cfg.field_profile()?;
    let rows = lbvn::scenario::sweep(&net, &cfg, &field, param, &values)?;
    let table = sweep_table(param, &rows);
    let path = write(out, "sweep.csv", &table.to_string())?;
    write(out, RESOLVED, &cfg.to_toml())?;
    print!("{table}");
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn dispersion(list: &Path, args: &ScenarioArgs, out: &Path) -> Result<(), CliError> {
    let cfg = config(args)?;
    let field = cfg.field_profile()?;
    let list = read_network_list(list)?;
    if list.networks.is_empty() {
        return Err(CliError::Usage("the network list is empty".into()));
    }
    let total = list.networks.len();
    let mut failures: Vec<(String, SimError)> = Vec::new();
    let mut networks = Vec::new();
    for entry in list.networks {
        match read_network(&entry.file) {
            Ok(net) => networks.push((entry.label, net)),
            Err(e) => failures.push((entry.label, e.into())),
        }
    }
    let mut points = Vec::new();
    for (label, result) in dispersion_space(&networks, &cfg, &field) {
        match result {
            Ok(p) => points.push(p),
            Err(e) => failures.push((label, e)),
        }
    }
    failures.sort_by(|a, b| a.0.cmp(&b.0));
    let table = dispersion_table(&points);
    write(out, "dispersion.csv", &table.to_string())?;
    write(out, RESOLVED, &cfg.to_toml())?;
    print!("{table}");
    for (label, e) in &failures {
        eprintln!("{label}: {e}");
    }
    match failures.first() {
        None => Ok(()),
        Some((_, e)) => Err(CliError::Partial {
            failed: failures.len(),
            total,
            what: "networks",
            code: sim_code(e),
        }),
    }
}

#[derive(Serialize)]
struct McReport {
    particles: usize,
    seed: u64,
    dt_s: f64,
    samples_per_bin: usize,
    bin_width_s: f64,
    tv_distance: f64,
    max_abs_z: f64,
    arrived: usize,
    timed_out: usize,
    lost: usize,
}

pub fn montecarlo(
    args: &ScenarioArgs,
    particles: usize,
    dt: Option<&str>,
    samples_per_bin: usize,
    out: &Path,
) -> Result<(), CliError> {
    let (cfg, net) = load(args)?;
    let dt = dt.map(parse_quantity).transpose()?;
    let flows = solve_flows(&net, cfg.flow_rate_m3_s, cfg.viscosity_pa_s)?;
    let kinetics = DiffusionParams::compute(&net, &flows, cfg.transport())?;
    let (from, to) = (net.inlet(), net.outlet());
    let channel = Channel::new(&net, &flows, &kinetics, from, to)?;
    let real = channel.realize(&cfg.grid_config())?;
    let flux = channel.outlet_flux(&real);
    let run = simulate_particles(
        &net,
        &flows,
        &kinetics,
        from,
        to,
        &McConfig {
            particles,
            dt,
            seed: cfg.seed,
            max_time: None,
        },
    )?;
    let cmp = compare_with_flux(&run, &flux, samples_per_bin)?;
    let checks = path_frequencies(&run, &net, &flows)?;

    let n = particles as f64;
    let mut hist = CsvTable::new(["bin_start_s", "count", "empirical_fraction", "analytic_fraction"]);
    for (k, (&c, &q)) in cmp.histogram.counts.iter().zip(&cmp.expected).enumerate() {
        hist.push(vec![
            num(cmp.histogram.bin_start(k)),
            c.to_string(),
            num(c as f64 / n),
            num(q),
        ]);
    }
    let mut paths = CsvTable::new(["path", "gamma", "count", "frequency", "std_dev", "z_score"]);
    for c in &checks {
        let ids: Vec<String> = c.pipes.iter().map(|p| p.to_string()).collect();
        paths.push(vec![
            ids.join("-"),
            num(c.fraction),
            c.count.to_string(),
            num(c.frequency),
            num(c.std_dev),
            num(c.z_score()),
        ]);
    }
    let report = McReport {
        particles,
        seed: cfg.seed,
        dt_s: run.dt,
        samples_per_bin,
        bin_width_s: cmp.histogram.bin_width,
        tv_distance: cmp.tv_distance,
        max_abs_z: checks.iter().map(|c| c.z_score().abs()).fold(0.0, f64::max),
        arrived: run.arrival_times.len(),
        timed_out: run.timed_out,
        lost: run.lost,
    };
    write(out, "histogram.csv", &hist.to_string())?;
    write(out, "paths.csv", &paths.to_string())?;
    write(out, "report.toml", &to_toml(&report))?;
    write(out, RESOLVED, &cfg.to_toml())?;

    println!("particles          {particles} (step {} s)", num(run.dt));
    println!("TV distance        {:.5}", cmp.tv_distance);
    if particles < 1000 {
        println!("                   (dominated by sampling noise at this particle count)");
    }
    println!("max |z| over paths {:.3}", report.max_abs_z);
    print!("{paths}");
    Ok(())
}

fn syntax(origin: &str, text: &str, e: toml::de::Error) -> IoError {
    IoError::Syntax {
        origin: origin.into(),
        line: e
            .span()
            .map(|s| text[..s.start].matches('\n').count() + 1)
            .unwrap_or(1),
        msg: e.message().trim().to_string(),
    }
}

fn describe(net: &Network) -> Result<String, CliError> {
    let paths = net.enumerate_paths(net.inlet(), net.outlet())?;
    Ok(format!(
        "network{}, {} pipes, {} nodes, {} paths",
        net.label().map(|l| format!(" {l:?}")).unwrap_or_default(),
        net.pipe_count(),
        net.node_count(),
        paths.len()
    ))
}

fn validate_one(path: &Path) -> Result<String, CliError> {
    let origin = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.into(),
        source,
    })?;
    let doc: toml::Table = toml::from_str(&text).map_err(|e| syntax(&origin, &text, e))?;
    if doc.contains_key("pipes") {
        describe(&parse_network(&text, &origin)?)
    } else if doc.contains_key("networks") {
        let list = read_network_list(path)?;
        for entry in &list.networks {
            read_network(&entry.file)?;
        }
        Ok(format!("network list, {} networks", list.networks.len()))
    } else {
        let cfg = ScenarioConfig::read(path)?;
        cfg.field_profile()?;
        match &cfg.network {
            Some(n) => Ok(format!("scenario; {}", describe(&read_network(n)?)?)),
            None => Ok("scenario (no network)".into()),
        }
    }
}

pub fn validate(files: &[PathBuf]) -> Result<(), CliError> {
    let (mut failed, mut code) = (0, 0);
    for path in files {
        match validate_one(path) {
            Ok(what) => println!("ok    {}: {what}", path.display()),
            Err(e) => {
                eprintln!("error {e}");
                failed += 1;
                if code == 0 {
                    code = e.exit_code();
                }
            }
        }
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Partial {
            failed,
            total: files.len(),
            what: "files",
            code,
        })
    }
}

pub fn family(out: &Path) -> Result<(), CliError> {
    let mut entries = Vec::new();
    for (label, net) in family_networks()? {
        let file = format!("{label}.toml");
        write(out, &file, &network_to_toml(&net))?;
        entries.push(NetworkEntry {
            label,
            file: file.into(),
        });
    }
    let list = NetworkList {
        format_version: NETWORK_FORMAT_VERSION,
        networks: entries,
    };
    write(out, "family.toml", &to_toml(&list))?;
    let scenario = ScenarioConfig {
        flow_rate_m3_s: FAMILY_FLOW_RATE,
        noise: false,
        ..Default::default()
    };
    write(out, "scenario.toml", &scenario.to_toml())?;
    println!(
        "wrote {} networks, family.toml and scenario.toml to {}",
        list.networks.len(),
        out.display()
    );
    Ok(())
}
