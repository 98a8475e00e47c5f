//! `specsync` command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use specsync::analysis::{asymptotic_coefficients, discriminant, discriminant_report, LinearPrediction};
use specsync::dynamics::{integrate_coefficient, integrate_vertex, rezero, OscillatorSystem, DEFAULT_DT};
use specsync::equitable::{approximation_bound, check_aep, equitable_error, qep_score, AEP_TOL};
use specsync::experiments::{default_config, run_scenario, ScenarioResult, SCENARIOS};
use specsync::generators::{nested_aep, planted_aep, random_connected, rng_from_seed, sample_sbm};
use specsync::io;
use specsync::{Error, Result, SpectralBasis, WeightedGraph};

#[derive(Parser, Debug)]
#[command(
    name = "specsync",
    version,
    about = "Spectral analysis of cluster synchronization in Kuramoto networks"
)]
struct Cli {
    /// Seed for every random choice; equal seeds give byte-identical output.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Format of the report printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a graph (and partition) and write graph.json / partition.json.
    Generate {
        #[arg(value_enum)]
        kind: GenerateKind,
        /// JSON config for the generator (planted-aep, nested-aep, sbm).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Vertex count for `random`.
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Extra-edge probability for `random`.
        #[arg(long, default_value_t = 0.3)]
        edge_prob: f64,
        /// Edge weight range for `random`, as `min,max`.
        #[arg(long, default_value = "1,1")]
        weights: String,
    },
    /// Check a partition: AEP test, equitable error bounds, quasi-equitable score.
    Analyze {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        /// Eigenvalue window for the approximation bound (default: half the
        /// gap to the second-nearest eigenvalue, per mode).
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Write the Laplacian eigenbasis (eigenvalues + row-major eigenvectors).
    Spectrum {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Integrate the oscillators; writes theta.csv and alpha.csv.
    Simulate {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        #[arg(long)]
        steps: usize,
        /// Basis the equations are integrated in.
        #[arg(long, value_enum, default_value_t = Basis::Vertex)]
        basis: Basis,
        /// Initial phases (file, JSON array or comma list); default all zero.
        #[arg(long)]
        theta0: Option<String>,
        /// Keep only t ≥ this time, with phases re-centred around their mean there.
        #[arg(long)]
        rezero: Option<f64>,
    },
    /// Closed-form predictions: asymptotic coefficients and discriminants.
    Predict {
        #[command(flatten)]
        system: SystemArgs,
        /// Report a single mode r ≥ 1.
        #[arg(long)]
        mode: Option<usize>,
    },
    /// Run a named scenario (or `all`); writes artifacts under --out-dir/<name>/.
    Experiment {
        /// Scenario name or `all`.
        name: String,
        /// JSON config overriding the scenario defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the scenario's default config instead of running it.
        #[arg(long)]
        dump_config: bool,
    },
}

#[derive(Args, Debug)]
struct SystemArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Natural frequencies (file, JSON array or comma list).
    #[arg(long)]
    omega: String,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Per-edge phase lags in edge order; default zero.
    #[arg(long)]
    beta: Option<String>,
}

impl SystemArgs {
    fn load(&self) -> Result<(WeightedGraph, OscillatorSystem)> {
        let g = io::read_graph(&self.graph)?;
        let mut sys = OscillatorSystem::new(g.clone(), io::parse_vector(&self.omega)?, self.sigma)?;
        if let Some(beta) = &self.beta {
            sys = sys.with_beta(io::parse_vector(beta)?)?;
        }
        Ok((g, sys))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum GenerateKind {
    PlantedAep,
    NestedAep,
    Sbm,
    Random,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Basis {
    Vertex,
    Coefficient,
}

/// Failure that maps to exit code 1 (the run itself reported a failure).
#[derive(Debug)]
struct Failed(String);

enum Outcome {
    Ok,
    Failed(Failed),
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::BlowUp { .. }
        | Error::NotSettled { .. }
        | Error::NoConvergence { .. }
        | Error::ComplexSpectrum { .. }
        | Error::Eigenvectors(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = std::env::var("SPECSYNC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed(Failed(msg))) => {
            eprintln!("specsync: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("specsync: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn emit<T: Serialize>(format: Format, value: &T) -> Result<()> {
    match format {
        Format::Json => print_stdout(serde_json::to_string_pretty(value)?.as_bytes()),
        Format::Csv => {
            let flat = flatten(&serde_json::to_value(value)?);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])?;
            for (k, v) in flat {
                w.write_record([k, v])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e.into_error(),
            })?;
            print_stdout(&bytes)
        }
    }
}

/// A closed pipe downstream (`| head`) is not an error.
fn print_stdout(bytes: &[u8]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    let res = out.write_all(bytes).and_then(|()| {
        if bytes.ends_with(b"\n") {
            Ok(())
        } else {
            out.write_all(b"\n")
        }
    });
    match res.and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
        _ => Ok(()),
    }
}

/// Dotted-path rows for the CSV report form.
fn flatten(value: &serde_json::Value) -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
        let join = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        match v {
            serde_json::Value::Object(map) => map.iter().for_each(|(k, v)| walk(&join(k), v, out)),
            serde_json::Value::Array(items) => items
                .iter()
                .enumerate()
                .for_each(|(i, v)| walk(&join(&i.to_string()), v, out)),
            serde_json::Value::String(s) => out.push((prefix.to_string(), s.clone())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Generate {
            kind,
            config,
            n,
            edge_prob,
            weights,
        } => generate(cli, *kind, config.as_deref(), *n, *edge_prob, weights),
        Command::Analyze {
            graph,
            partition,
            gamma,
        } => analyze(cli, graph, partition, *gamma),
        Command::Spectrum { graph } => {
            let basis = SpectralBasis::new(&io::read_graph(graph)?)?;
            io::create_dir(&cli.out_dir)?;
            io::write_json(&cli.out_dir.join("basis.json"), &basis.export())?;
            emit(cli.format, &basis.export())?;
            Ok(Outcome::Ok)
        }
        Command::Simulate {
            system,
            dt,
            steps,
            basis,
            theta0,
            rezero: rezero_at,
        } => simulate(cli, system, *dt, *steps, *basis, theta0.as_deref(), *rezero_at),
        Command::Predict { system, mode } => predict(cli, system, *mode),
        Command::Experiment {
            name,
            config,
            dump_config: true,
        } => {
            if config.is_some() {
                return Err(Error::InvalidParameter("--dump-config takes no --config".into()));
            }
            print_stdout(serde_json::to_string_pretty(&default_config(name)?)?.as_bytes())?;
            Ok(Outcome::Ok)
        }
        Command::Experiment { name, config, .. } => experiment(cli, name, config.as_deref()),
    }
}

fn require_config(config: Option<&Path>) -> Result<&Path> {
    config.ok_or_else(|| Error::InvalidParameter("this generator needs --config".into()))
}

fn generate(
    cli: &Cli,
    kind: GenerateKind,
    config: Option<&Path>,
    n: usize,
    edge_prob: f64,
    weights: &str,
) -> Result<Outcome> {
    // The CLI seed wins over any seed inside the config file.
    let with_seed = |path: &Path| -> Result<serde_json::Value> {
        let mut v: serde_json::Value = io::read_json(path)?;
        if let Some(obj) = v.as_object_mut() {
            obj.insert("seed".into(), cli.seed.into());
        }
        Ok(v)
    };
    let (graph, partitions) = match kind {
        GenerateKind::PlantedAep => {
            let cfg = serde_json::from_value(with_seed(require_config(config)?)?)?;
            let (g, p) = planted_aep(&cfg)?;
            (g, vec![p])
        }
        GenerateKind::NestedAep => {
            let cfg = serde_json::from_value(with_seed(require_config(config)?)?)?;
            let nested = nested_aep(&cfg)?;
            (nested.graph, nested.partitions)
        }
        GenerateKind::Sbm => {
            let cfg = serde_json::from_value(with_seed(require_config(config)?)?)?;
            let (g, p) = sample_sbm(&cfg)?;
            (g, vec![p])
        }
        GenerateKind::Random => {
            let w = io::parse_vector(weights)?;
            let [lo, hi] = w[..] else {
                return Err(Error::InvalidParameter("--weights takes `min,max`".into()));
            };
            let mut rng = rng_from_seed(cli.seed);
            (random_connected(n, edge_prob, [lo, hi], &mut rng)?, Vec::new())
        }
    };
    io::create_dir(&cli.out_dir)?;
    let mut written = vec![cli.out_dir.join("graph.json")];
    io::write_graph(&written[0], &graph)?;
    // The finest partition is partition.json; coarser levels get their depth.
    if let Some((finest, coarser)) = partitions.split_last() {
        let path = cli.out_dir.join("partition.json");
        io::write_partition(&path, finest)?;
        written.push(path);
        for (level, p) in coarser.iter().enumerate() {
            let path = cli.out_dir.join(format!("partition_level{level}.json"));
            io::write_partition(&path, p)?;
            written.push(path);
        }
    }
    emit(
        cli.format,
        &serde_json::json!({ "n": graph.n(), "m": graph.m(), "files": written }),
    )?;
    Ok(Outcome::Ok)
}

fn analyze(cli: &Cli, graph: &Path, partition: &Path, gamma: Option<f64>) -> Result<Outcome> {
    let g = io::read_graph(graph)?;
    let p = io::read_partition(partition)?;
    if let Some(gm) = gamma {
        if !(gm > 0.0) {
            return Err(Error::InvalidParameter(format!("--gamma must be positive, got {gm}")));
        }
    }
    let aep = check_aep(&g, &p, AEP_TOL)?;
    let report = equitable_error(&g, &p)?;
    let basis = SpectralBasis::new(&g)?;
    let mut bounds = Vec::new();
    for m in &report.per_mode {
        let gm = gamma.unwrap_or_else(|| {
            let mut d: Vec<f64> = basis.eigenvalues().iter().map(|l| (l - m.lambda).abs()).collect();
            d.sort_by(f64::total_cmp);
            (0.5 * d.get(1).copied().unwrap_or(1.0)).max(1e-12)
        });
        bounds.push(approximation_bound(&g, &p, &basis, m.lambda, &m.vector, gm)?);
    }
    let out = serde_json::json!({
        "is_aep": aep.is_aep,
        "max_deviation": aep.max_deviation,
        "combinatorial_deviation": aep.combinatorial_deviation,
        "qep_score": qep_score(&g, &p)?,
        "sigma1": report.sigma1,
        "bounds_hold": report.bounds_hold(1e-12),
        "error_matrix": report.e,
        "quotient": report.quotient,
        "modes": report.per_mode,
        "approximation": bounds,
    });
    io::create_dir(&cli.out_dir)?;
    io::write_json(&cli.out_dir.join("report.json"), &out)?;
    emit(cli.format, &out)?;
    Ok(Outcome::Ok)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    cli: &Cli,
    system: &SystemArgs,
    dt: f64,
    steps: usize,
    basis_kind: Basis,
    theta0: Option<&str>,
    rezero_at: Option<f64>,
) -> Result<Outcome> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("--dt must be positive, got {dt}")));
    }
    let (g, sys) = system.load()?;
    let theta0 = match theta0 {
        Some(s) => io::parse_vector(s)?,
        None => vec![0.0; g.n()],
    };
    let basis = SpectralBasis::new(&g)?;
    let mut traj = match basis_kind {
        Basis::Vertex => integrate_vertex(&sys, &theta0, dt, steps)?,
        Basis::Coefficient => {
            let alpha0 = basis.decompose(&theta0)?;
            integrate_coefficient(&sys, &basis, &alpha0, dt, steps)?.reconstruct(&basis)?
        }
    };
    if let Some(t) = rezero_at {
        let at = ((t - traj.t0) / dt).round();
        if !(at >= 0.0) || at as usize >= traj.len() {
            return Err(Error::InvalidParameter(format!(
                "--rezero {t} is outside the simulated window"
            )));
        }
        traj = rezero(&traj, at as usize)?;
    }
    let coeffs = traj.decompose(&basis)?;
    io::create_dir(&cli.out_dir)?;
    let theta_path = cli.out_dir.join("theta.csv");
    let alpha_path = cli.out_dir.join("alpha.csv");
    traj.write_csv(io::create_file(&theta_path)?)?;
    coeffs.write_csv(io::create_file(&alpha_path)?)?;
    emit(
        cli.format,
        &serde_json::json!({
            "samples": traj.len(),
            "t_end": traj.time(traj.len() - 1),
            "final_theta": traj.last(),
            "final_alpha": coeffs.last(),
            "files": [theta_path, alpha_path],
        }),
    )?;
    Ok(Outcome::Ok)
}

fn predict(cli: &Cli, system: &SystemArgs, mode: Option<usize>) -> Result<Outcome> {
    let (g, sys) = system.load()?;
    let basis = SpectralBasis::new(&g)?;
    let pred: LinearPrediction = asymptotic_coefficients(&sys, &basis)?;
    let out = match mode {
        Some(r) => serde_json::json!({
            "sigma": sys.sigma(),
            "mode": pred.mode(r)?,
            "discriminant": discriminant(&sys, &basis, r)?,
        }),
        None => serde_json::json!({
            "sigma": sys.sigma(),
            "modes": pred.modes,
            "discriminants": discriminant_report(&sys, &basis)?,
        }),
    };
    io::create_dir(&cli.out_dir)?;
    io::write_json(&cli.out_dir.join("prediction.json"), &out)?;
    emit(cli.format, &out)?;
    Ok(Outcome::Ok)
}

fn experiment(cli: &Cli, name: &str, config: Option<&Path>) -> Result<Outcome> {
    let names: Vec<&str> = if name == "all" {
        if config.is_some() {
            return Err(Error::InvalidParameter("--config needs a single scenario name".into()));
        }
        SCENARIOS.to_vec()
    } else if SCENARIOS.contains(&name) {
        vec![name]
    } else {
        return Err(Error::UnknownScenario(name.to_string()));
    };
    let config: Option<serde_json::Value> = config.map(io::read_json).transpose()?;
    let mut results: Vec<ScenarioResult> = Vec::new();
    for n in names {
        let res = run_scenario(n, config.as_ref(), cli.seed, Some(&cli.out_dir))?;
        for c in &res.checks {
            log::info!(
                "{n}/{}: {} ({})",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.detail
            );
        }
        results.push(res);
    }
    let summary: Vec<serde_json::Value> = results
        .iter()
        .map(|r| {
            serde_json::json!({
                "scenario": r.scenario,
                "passed": r.passed(),
                "checks": r.checks,
                "metrics": r.metrics,
                "elapsed_secs": r.elapsed_secs,
            })
        })
        .collect();
    emit(cli.format, &summary)?;
    let failed: Vec<String> = results
        .iter()
        .flat_map(|r| {
            r.checks
                .iter()
                .filter(|c| !c.passed)
                .map(move |c| format!("{}/{}", r.scenario, c.name))
        })
        .collect();
    if failed.is_empty() {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::Failed(Failed(format!("failed checks: {}", failed.join(", ")))))
    }
}
