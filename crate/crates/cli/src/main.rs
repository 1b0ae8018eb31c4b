use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crlflood_cli::{config, parse_range, CliError, CliResult, ConfigArgs, FluidArgs};

const CSV_HELP: &str = "CSV files (written with --out DIR):
  fraction.csv    slot,seconds,fraction_decoded
  nodes.csv       node,decoded_slot,useful_tx,wasted_tx
  line.csv        hop,T_n_slots,H_next_fraction
  compare.csv     slot,seconds,<one column per scheme>
  fluid.csv       t,h_1..h_n
  fixedpoint.csv  # T=..,h_inf=.. then i,h0_i

Exit codes: 0 success, 1 configuration error, 2 runtime failure.";

#[derive(Parser, Debug)]
#[command(name = "crlflood", version, about = "Secure coded file distribution: simulator and fluid-limit tools")]
#[command(after_long_help = long_help())]
struct Cli {
    /// Worker threads for parallel runs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

fn long_help() -> String {
    format!("{}\n{CSV_HELP}", config::help_table())
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Config file (`key = value` lines with [file] [radio] [scheme] [topology] [adversary] sections).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set scheme.M=4. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed; takes precedence over the config and CRLFLOOD_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Road graph file replacing the synthetic grid.
    #[arg(long)]
    road_graph: Option<PathBuf>,
    /// Directory for CSV output.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config_args(&self) -> ConfigArgs {
        ConfigArgs {
            config: self.config.clone(),
            overrides: self.overrides.clone(),
            seed: self.seed,
            road_graph: self.road_graph.clone(),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One simulation run.
    Simulate(RunArgs),
    /// All five schemes on a shared map and seed.
    Compare(RunArgs),
    /// Integrate the fluid limit from empty relay buffers.
    Fluid {
        /// Inverse precode rate, or `inf`.
        #[arg(long = "M", default_value = "inf")]
        m: String,
        /// Proportional-forwarding dynamics instead of threshold forwarding.
        #[arg(long)]
        proportional: bool,
        #[arg(long, default_value_t = 10)]
        nodes: usize,
        #[arg(long, default_value_t = 5.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Keep every n-th step in the CSV.
        #[arg(long, default_value_t = 10)]
        sample_every: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Asymptotic per-hop time and the fixed-point buffer profile.
    Fixedpoint {
        #[arg(long = "M", default_value = "3")]
        m: String,
        /// Round time of the profile (default: the asymptotic per-hop time).
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, default_value_t = 20)]
        depth: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Per-hop delay bounds, in units of k/(1-eps) slots.
    Bounds {
        /// Hop range, e.g. 1..5.
        #[arg(long, default_value = "1..10")]
        n: String,
        /// One or more inverse rates, comma separated.
        #[arg(long = "M", default_value = "3", value_delimiter = ',')]
        m: Vec<String>,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
    },
    /// Packet-level line network against its fluid limit.
    Validate {
        #[arg(long = "M", default_value_t = 3)]
        m: u32,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, default_value_t = 10_000)]
        k: u32,
        #[arg(long, default_value_t = 5)]
        nodes: usize,
        /// Largest fluid time compared.
        #[arg(long, default_value_t = 2.5)]
        t_max: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn dispatch(cli: Cli) -> CliResult<String> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => crlflood_cli::simulate(&a.config_args(), a.out.as_deref()),
        Command::Compare(a) => crlflood_cli::compare(&a.config_args(), a.out.as_deref()),
        Command::Fluid {
            m,
            proportional,
            nodes,
            t_end,
            dt,
            sample_every,
            out,
        } => crlflood_cli::fluid(
            &FluidArgs {
                m,
                proportional,
                nodes,
                t_end,
                dt,
                sample_every,
            },
            out.as_deref(),
        ),
        Command::Fixedpoint { m, t, depth, out } => crlflood_cli::fixedpoint(&m, t, depth, out.as_deref()),
        Command::Bounds { n, m, eps } => crlflood_cli::bounds(&parse_range(&n)?, &m, eps),
        Command::Validate {
            m,
            eps,
            k,
            nodes,
            t_max,
            points,
            seed,
        } => crlflood_cli::validate(m, eps, k, nodes, t_max, points, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
