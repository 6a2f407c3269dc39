use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epiassim::abm::{run_window, seed_infections, write_daily_counts, HealthLedger, RateDistribution};
use epiassim::coupling::{self, NetworkConfig, RunConfig, RunMode, RunReport};
use epiassim::network::{generate_bter_with_report, write_network_files, BterSpec};
use epiassim::ode::{r_naught, solve_sir};
use epiassim::scan::{scan_bench, write_bench_csv};
use epiassim::Error;

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ncommit: ",
    env!("EPIASSIM_COMMIT"),
    "\ntarget: ",
    env!("EPIASSIM_TARGET"),
    "\nprofile: ",
    env!("EPIASSIM_PROFILE"),
);

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag, bad argument)
  3  invalid configuration or input data
  4  I/O failure
  5  numerical failure (filter degeneracy, infeasible network spec)

Errors are reported on stderr as a single line:
  error kind=<usage|input|io|numerical> code=<n> msg=<text>";

#[derive(Parser)]
#[command(name = "epiassim", version, long_version = LONG_VERSION, after_help = EXIT_CODES)]
#[command(about = "Agent-based epidemic simulation coupled to a particle filter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Directory receiving all output files.
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    /// Master seed; every random draw is a function of it.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (and ABM partitions).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Clone)]
struct NetworkArgs {
    /// Edge list to load.
    #[arg(long, conflicts_with = "complete")]
    network: Option<PathBuf>,
    /// Use a fully connected graph on this many nodes.
    #[arg(long)]
    complete: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a BTER contact network (edge list plus JSON stats sidecar).
    Netgen {
        #[arg(long, default_value_t = 5000)]
        nodes: usize,
        #[arg(long, default_value_t = 16.52)]
        mean_degree: f64,
        #[arg(long, default_value_t = 0.55)]
        clustering: f64,
        #[arg(long, default_value_t = 2.0)]
        exponent: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Run the agent-based model and write daily counts.
    Abm {
        #[command(flatten)]
        net: NetworkArgs,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        /// Fraction of agents infected on day 0.
        #[arg(long, default_value_t = 0.002)]
        i0: f64,
        #[arg(long, default_value_t = 50)]
        days: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Filter an observation record (NDJSON or daily-counts CSV; `-` reads stdin).
    Filter {
        /// Observation file, or `-` for stdin.
        #[arg(long)]
        obs: String,
        /// Optional run config supplying [smc], [schedule] and [io] settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Particle count (overrides the config).
        #[arg(long)]
        particles: Option<usize>,
        /// Initial infected proportion assumed by the filter.
        #[arg(long)]
        i0: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the coupled ABM / filter loop from a TOML config.
    Couple {
        /// TOML run config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's run mode.
        #[arg(long, value_parser = ["static", "streaming"])]
        mode: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Solve the deterministic SIR baseline.
    Ode {
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        #[arg(long, default_value_t = 0.002)]
        i0: f64,
        #[arg(long, default_value_t = 50.0)]
        days: f64,
        #[arg(long, default_value_t = epiassim::ode::DEFAULT_DT)]
        dt: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Time the parallel prefix sum across sizes and worker counts.
    Scanbench {
        #[arg(long, value_delimiter = ',', default_values_t = [1usize << 10, 1 << 16, 1 << 20])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn kind_and_code(e: &Error) -> (&'static str, u8) {
    match e.root() {
        Error::Io { .. } => ("io", 4),
        Error::Degenerate { .. } | Error::Infeasible(_) => ("numerical", 5),
        _ => ("input", 3),
    }
}

fn create_output(dir: &Path, name: &str) -> epiassim::Result<(PathBuf, BufWriter<File>)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok((path, BufWriter::new(file)))
}

fn write_output<F>(dir: &Path, name: &str, body: F) -> epiassim::Result<PathBuf>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let (path, mut w) = create_output(dir, name)?;
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn init_pool(workers: usize) -> epiassim::Result<()> {
    if workers == 0 {
        return Err(Error::Config("--workers must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn print_report(report: &RunReport, dir: &Path) {
    let t = report.timings;
    eprintln!(
        "timings: network={:.3}s abm={:.3}s filter={:.3}s total={:.3}s",
        t.network.as_secs_f64(),
        t.abm.as_secs_f64(),
        t.filter.as_secs_f64(),
        t.total.as_secs_f64()
    );
    let s = &report.final_summary;
    println!(
        "{}: beta {:.4} [{:.4}, {:.4}], gamma {:.4} [{:.4}, {:.4}] -> {}",
        report.run_id,
        s.beta.q50,
        s.beta.q05,
        s.beta.q95,
        s.gamma.q50,
        s.gamma.q05,
        s.gamma.q95,
        dir.join("report.json").display()
    );
}

fn run(cli: Cli) -> epiassim::Result<()> {
    match cli.command {
        Command::Netgen { nodes, mean_degree, clustering, exponent, common } => {
            init_pool(common.workers.unwrap_or(1))?;
            let seed = common.seed.unwrap_or(0);
            let spec = BterSpec { degree_exponent: exponent, ..BterSpec::new(nodes, mean_degree, clustering, seed) };
            let (net, report) = generate_bter_with_report(&spec)?;
            std::fs::create_dir_all(&common.output_dir).map_err(|e| Error::io(&common.output_dir, e))?;
            let path = common.output_dir.join("network.edges");
            let meta = write_network_files(&net, &path, Some(seed))?;
            println!(
                "{} nodes, {} edges, mean degree {:.3}, clustering {:.4} ({} attempts) -> {}",
                meta.node_count,
                meta.edge_count,
                meta.mean_degree,
                meta.clustering,
                report.attempts,
                path.display()
            );
        }
        Command::Abm { net, beta, gamma, i0, days, common } => {
            let workers = common.workers.unwrap_or(1);
            init_pool(workers)?;
            let seed = common.seed.unwrap_or(0);
            let network_cfg = NetworkConfig { path: net.network, complete: net.complete, bter: None };
            let (network, _) = network_cfg.build()?;
            let network = network.partition(workers)?;
            let abm = coupling::AbmConfig { initial_infected_fraction: i0, ..Default::default() };
            if !(i0 > 0.0 && i0 <= 1.0) {
                return Err(Error::Config("--i0 must lie in (0, 1]".into()));
            }
            let mut ledger = HealthLedger::all_susceptible(network.node_count());
            seed_infections(&mut ledger, abm.initial_infected(network.node_count()), seed)?;
            let rows = run_window(
                &network,
                &mut ledger,
                &RateDistribution::point(beta),
                &RateDistribution::point(gamma),
                days,
                seed,
            )?;
            let path = write_output(&common.output_dir, "abm_counts.csv", |w| write_daily_counts(&rows, w))?;
            println!("{} days on {} agents -> {}", rows.len(), network.node_count(), path.display());
        }
        Command::Filter { obs, config, particles, i0, common } => {
            let mut cfg = match &config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            cfg.io.mode = RunMode::Static;
            cfg.io.observations = Some(obs);
            cfg.io.output_dir = common.output_dir.clone();
            if let Some(n) = particles {
                cfg.smc.n_particles = n;
            }
            if let Some(i0) = i0 {
                cfg.abm.initial_infected_fraction = i0;
            }
            if let Some(seed) = common.seed {
                cfg.smc.seed = seed;
            }
            init_pool(common.workers.unwrap_or(1))?;
            let report = coupling::run_static(&cfg)?;
            print_report(&report, &common.output_dir);
        }
        Command::Couple { config, mode, common } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(mode) = mode {
                cfg.io.mode = if mode == "static" { RunMode::Static } else { RunMode::Streaming };
            }
            if let Some(seed) = common.seed {
                cfg.abm.seed = seed;
                cfg.smc.seed = seed;
                if let Some(spec) = cfg.network.bter.as_mut() {
                    spec.seed = seed;
                }
            }
            if let Some(w) = common.workers {
                cfg.abm.workers = w;
            }
            // An explicit flag wins over the config file.
            if common.output_dir != Path::new("out") {
                cfg.io.output_dir = common.output_dir.clone();
            }
            init_pool(cfg.abm.workers)?;
            let report = coupling::run(&cfg)?;
            print_report(&report, &cfg.io.output_dir);
        }
        Command::Ode { beta, gamma, i0, days, dt, common } => {
            if !(0.0..=1.0).contains(&i0) {
                return Err(Error::Config("--i0 must lie in [0, 1]".into()));
            }
            let curve = solve_sir(beta, gamma, (1.0 - i0, i0, 0.0), days, dt, 1.0)?;
            let path = write_output(&common.output_dir, "ode_baseline.csv", |w| curve.write_csv(w))?;
            let (peak_day, peak) = curve.peak_infected();
            let r0 = r_naught(beta, gamma).map(|r| r.to_string()).unwrap_or_else(|_| "undefined".into());
            println!("R0 {r0}, peak infected {peak:.6} on day {peak_day} -> {}", path.display());
        }
        Command::Scanbench { sizes, reps, common } => {
            let max = common.workers.unwrap_or(1);
            if max == 0 {
                return Err(Error::Config("--workers must be >= 1".into()));
            }
            let mut workers: Vec<usize> = std::iter::successors(Some(1usize), |w| Some(w * 2))
                .take_while(|&w| w < max)
                .collect();
            workers.push(max);
            let rows = scan_bench(&sizes, &workers, reps)?;
            let path = write_output(&common.output_dir, "scanbench.csv", |w| write_bench_csv(&rows, w))?;
            println!("{} timings -> {}", rows.len(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&msg).trim_start_matches("error: ");
            eprintln!("error kind=usage code=2 msg={first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = kind_and_code(&e);
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={kind} code={code} msg={msg}");
            ExitCode::from(code)
        }
    }
}
