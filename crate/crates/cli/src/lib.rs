//! Subcommand implementations behind the `crlflood` binary.
//!
//! Each command returns the text meant for stdout and writes CSV files into
//! an optional output directory. Errors split into configuration problems
//! (exit code 1) and failures while running (exit code 2).

pub mod config;
pub mod output;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crlflood::analysis::{
    discrete_vs_fluid, fixed_point_profile, fluid_integrate_with, one_hop_asymptote, proportional_fluid_integrate,
    solve_tf, theorem1_bound, Dynamics, FluidOptions, InverseRate,
};
use crlflood::schemes::SchemeKind;
use crlflood::security::{hash_packet_count, signed_packet_count};
use crlflood::{run, sweep, FileSpec, Metrics, Precode, RunConfig, Topology};

pub use config::{ConfigError, Settings};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Run(#[from] crlflood::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Output { .. } | CliError::Run(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Where run settings come from.
#[derive(Clone, Debug, Default)]
pub struct ConfigArgs {
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub seed: Option<u64>,
    pub road_graph: Option<PathBuf>,
}

impl ConfigArgs {
    /// File, then `CRLFLOOD_SEED`, then `--set`, then `--seed`.
    pub fn settings(&self) -> CliResult<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        s.apply_env_seed()?;
        for o in &self.overrides {
            s.set(o)?;
        }
        if let Some(seed) = self.seed {
            s.set(&format!("seed={seed}"))?;
        }
        Ok(s)
    }

    pub fn run_config(&self) -> CliResult<RunConfig> {
        Ok(self.settings()?.to_run_config(self.road_graph.as_deref())?)
    }
}

fn write_file(dir: &Path, name: &str, body: &str) -> CliResult<()> {
    let err = |path: PathBuf| move |source| CliError::Output { path, source };
    fs::create_dir_all(dir).map_err(err(dir.to_path_buf()))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(err(path.clone()))
}

fn parse_m(s: &str) -> CliResult<InverseRate> {
    s.parse::<InverseRate>()
        .map_err(|e| CliError::Usage(format!("bad M `{s}`: {e}")))
}

/// Parses `a..b` (inclusive), `a..=b` or a single integer.
pub fn parse_range(s: &str) -> CliResult<Vec<u32>> {
    let bad = || CliError::Usage(format!("bad range `{s}`, expected a..b"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => {
            let b = b.strip_prefix('=').unwrap_or(b);
            (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)
        }
        None => {
            let v: u32 = s.trim().parse().map_err(|_| bad())?;
            (v, v)
        }
    };
    if lo == 0 || hi < lo {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

/// Hash-information overhead of the precoded schemes for `M = 3, 4, 5`
/// and the configured `M`.
pub fn overhead_table(c: &RunConfig) -> CliResult<String> {
    let mut ms = vec![3u32, 4, 5];
    if let Precode::Fixed(m) = c.file.precode {
        if !ms.contains(&m) {
            ms.push(m);
        }
    }
    let mut s = String::from("M,hashes_per_packet,hash_packets,overhead\n");
    for m in ms {
        let spec = c.file.with_precode(Precode::Fixed(m));
        let l = hash_packet_count(&spec, &c.overhead)?;
        let mark = if c.file.precode == Precode::Fixed(m) { " *" } else { "" };
        let _ = writeln!(
            s,
            "{m},{},{},{:.0}%{mark}",
            l.hashes_per_packet,
            l.packet_count,
            100.0 * l.overhead_fraction(&spec)
        );
    }
    let file_bytes = u64::from(c.file.k) * u64::from(c.file.packet_bytes);
    let signed = signed_packet_count(file_bytes, &c.file, &c.overhead)?;
    let _ = writeln!(
        s,
        "sign-every-packet: {signed} packets, {:.0}% more",
        100.0 * (f64::from(signed) / f64::from(c.file.k) - 1.0)
    );
    Ok(s)
}

fn summary_line(name: &str, m: &Metrics) -> String {
    let fmt = |v: Option<u64>| v.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
    format!(
        "{name}: decoded {:.3}, median slot {}, completion slot {}, useful {} wasted {}",
        m.final_fraction(),
        fmt(m.median_decode_slot()),
        fmt(m.completion_slot()),
        m.total_useful(),
        m.total_wasted()
    )
}

/// One engine run; writes `fraction.csv`, `nodes.csv` and, for line
/// networks, `line.csv`.
pub fn simulate(args: &ConfigArgs, out: Option<&Path>) -> CliResult<String> {
    let c = args.run_config()?;
    let m = run(&c)?;
    let mut s = String::new();
    let _ = writeln!(s, "scheme {} seed {} slots {}", c.scheme.kind, c.seed, m.slots_run);
    s.push_str(&overhead_table(&c)?);
    s.push_str(&summary_line(&c.scheme.kind.to_string(), &m));
    s.push('\n');
    if let Some(dir) = out {
        write_file(dir, "fraction.csv", &output::fraction_csv(&m))?;
        write_file(dir, "nodes.csv", &output::nodes_csv(&m))?;
        if matches!(c.topology, Topology::Line { .. }) {
            write_file(dir, "line.csv", &output::line_csv(&m))?;
        }
    }
    Ok(s)
}

/// All five schemes on the same map, vehicles and seed; writes `compare.csv`.
pub fn compare(args: &ConfigArgs, out: Option<&Path>) -> CliResult<String> {
    let base = args.run_config()?;
    let configs: Vec<RunConfig> = SchemeKind::ALL
        .iter()
        .map(|&k| {
            let mut c = base.clone();
            c.scheme.kind = k;
            c
        })
        .collect();
    let runs = sweep(&configs, 1)?;
    let names: Vec<String> = SchemeKind::ALL.iter().map(|k| k.to_string()).collect();
    let metrics: Vec<&Metrics> = runs.iter().map(|r| &r.runs[0]).collect();
    let mut s = String::new();
    for (n, m) in names.iter().zip(&metrics) {
        s.push_str(&summary_line(n, m));
        s.push('\n');
    }
    if let Some(dir) = out {
        write_file(dir, "compare.csv", &output::compare_csv(&names, &metrics))?;
    }
    Ok(s)
}

#[derive(Clone, Debug)]
pub struct FluidArgs {
    pub m: String,
    pub proportional: bool,
    pub nodes: usize,
    pub t_end: f64,
    pub dt: f64,
    pub sample_every: usize,
}

/// Fluid trajectory from empty buffers; writes `fluid.csv`.
pub fn fluid(a: &FluidArgs, out: Option<&Path>) -> CliResult<String> {
    let traj = if a.proportional {
        proportional_fluid_integrate(a.nodes, a.t_end, a.dt, &[])?
    } else {
        let opts = FluidOptions {
            dt: a.dt,
            sample_every: a.sample_every,
            ..FluidOptions::default()
        };
        fluid_integrate_with(Dynamics::Threshold(parse_m(&a.m)?), a.nodes, a.t_end, &[], opts)?
    };
    let mut s = String::from("round,duration\n");
    for (i, d) in traj.round_durations().iter().enumerate() {
        let _ = writeln!(s, "{},{d:.9}", i + 1);
    }
    if let Some(dir) = out {
        write_file(dir, "fluid.csv", &traj.to_csv())?;
    }
    Ok(s)
}

/// Asymptotic per-hop time and, optionally, the fixed-point profile for
/// round time `t`.
pub fn fixedpoint(m: &str, t: Option<f64>, depth: usize, out: Option<&Path>) -> CliResult<String> {
    let m = parse_m(m)?;
    let sol = solve_tf(m, 1e-12)?;
    let mut s = format!("M={m} T_F={:.9}", sol.tf);
    if !sol.supported {
        s.push_str(" (convergence not established for M < 2)");
    }
    s.push('\n');
    let profile = fixed_point_profile(m, t.unwrap_or(sol.tf), depth)?;
    s.push_str(&profile.to_csv());
    if let Some(dir) = out {
        write_file(dir, "fixedpoint.csv", &profile.to_csv())?;
    }
    Ok(s)
}

/// Delay bound per hop for each `M`, plus the one-hop asymptote at `eps`.
pub fn bounds(hops: &[u32], ms: &[String], eps: f64) -> CliResult<String> {
    let ms: Vec<InverseRate> = ms.iter().map(|m| parse_m(m)).collect::<CliResult<_>>()?;
    let mut s = String::from("n");
    for m in &ms {
        let _ = write!(s, ",M={m}");
    }
    s.push('\n');
    for &n in hops {
        let _ = write!(s, "{n}");
        for &m in &ms {
            let _ = write!(s, ",{:.5}", theorem1_bound(n, m)?);
        }
        s.push('\n');
    }
    let _ = write!(s, "one_hop(eps={eps})");
    for &m in &ms {
        let _ = write!(s, ",{:.5}", one_hop_asymptote(m, eps)?);
    }
    s.push('\n');
    Ok(s)
}

/// Packet-level line network against its fluid limit.
pub fn validate(m: u32, eps: f64, k: u32, nodes: usize, t_max: f64, points: usize, seed: u64) -> CliResult<String> {
    FileSpec::new(k, 1000, Precode::Fixed(m))?;
    if points == 0 || !(t_max > 0.0) {
        return Err(CliError::Usage("need a positive time range and at least one grid point".into()));
    }
    let grid: Vec<f64> = (1..=points).map(|i| t_max * i as f64 / points as f64).collect();
    let r = discrete_vs_fluid(m, eps, k, nodes, &grid, seed)?;
    let mut s = String::from("node,max_deviation\n");
    for (i, d) in r.per_node.iter().enumerate() {
        let _ = writeln!(s, "{},{d:.6}", i + 1);
    }
    let _ = writeln!(s, "max,{:.6}", r.max_deviation);
    Ok(s)
}
