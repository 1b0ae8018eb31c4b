//! Line-oriented `key = value` run configuration.
//!
//! ```text
//! seed = 7
//! horizon_slots = 20000
//!
//! [scheme]
//! kind = PrecodeAndHash
//! M = 3
//! ```
//!
//! Blank lines and `#` comments are skipped. Keys outside any section are
//! top-level. Unknown sections and keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crlflood::analysis::InverseRate;
use crlflood::engine::MapSource;
use crlflood::schemes::SchemeKind;
use crlflood::topology::{Point, RoadGraph};
use crlflood::{Precode, RunConfig, Topology, UrbanConfig};

/// Every accepted key, with its default and a short description. This table
/// also feeds `--help`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed; CRLFLOOD_SEED overrides it"),
    ("horizon_slots", "1000000", "slot budget of one run"),
    ("file.k", "1000", "packets in the file"),
    ("file.packet_bytes", "1000", "packet size in bytes"),
    ("radio.tx_range", "200", "transmission range, m"),
    ("radio.interference_range", "300", "interference and carrier-sense range, m"),
    ("radio.epsilon", "0.05", "packet erasure probability"),
    ("radio.packets_per_slot", "20", "packets sent by an elected vehicle per slot"),
    ("radio.slot_seconds", "0.333333", "slot length, s"),
    ("scheme.kind", "PrecodeAndHash", "PrecodeAndHash | WaitToDecode | SignEveryPacket | GeniePrecode | ProportionalForwarding"),
    ("scheme.M", "3", "inverse precode rate (integer >= 2)"),
    ("scheme.hash_first_slots", "auto", "hash-only phase; auto = ceil(hash packets / packets_per_slot)"),
    ("scheme.hash_forward_prob", "0.2", "share of hash-information packets after the hash phase"),
    ("scheme.seed_multiplier", "5", "seeding time in multiples of k / seeding_rate"),
    ("scheme.seeding_rate", "60", "source rate, packets/s"),
    ("scheme.verification", "true", "false forwards data unchecked"),
    ("scheme.quarantine_capacity", "1000", "unverifiable packets kept per node"),
    ("scheme.signature_bytes", "256", "signature size, bytes"),
    ("scheme.hash_bytes", "20", "hash size, bytes"),
    ("topology.kind", "urban", "urban | line"),
    ("topology.d", "31", "line nodes, source included"),
    ("topology.rows", "10", "grid intersections per column"),
    ("topology.cols", "10", "grid intersections per row"),
    ("topology.block_m", "300", "grid block length, m"),
    ("topology.turn_bias", "0.5", "probability of going straight at an intersection"),
    ("topology.vehicles", "236", "vehicle count"),
    ("topology.speed_min", "15", "slowest vehicle, m/s"),
    ("topology.speed_max", "25", "fastest vehicle, m/s"),
    ("topology.sources", "auto", "source positions x:y in m, comma separated; auto = 4 grid intersections"),
    ("topology.road_graph", "none", "road graph file replacing the grid"),
    ("adversary.fraction", "0.05", "share of vehicles that pollute"),
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{at}: {message}")]
    Parse { at: Location, message: String },
    #[error(transparent)]
    Invalid(#[from] crlflood::Error),
}

/// Where a setting came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Location {
    Line { file: String, line: usize },
    Override(String),
    Env(&'static str),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line { file, line } => write!(f, "{file}:{line}"),
            Location::Override(s) => write!(f, "--set {s}"),
            Location::Env(v) => write!(f, "${v}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    key: String,
    value: String,
    at: Location,
}

/// Raw settings in the order they were given; later entries win.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    entries: Vec<Entry>,
}

fn parse_err(at: &Location, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        at: at.clone(),
        message: message.into(),
    }
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

impl Settings {
    pub fn parse(text: &str, file: &str) -> Result<Self, ConfigError> {
        let mut out = Settings::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let at = Location::Line {
                file: file.to_string(),
                line: n + 1,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(&at, "unterminated section header"))?
                    .trim();
                if !["file", "radio", "scheme", "topology", "adversary"].contains(&name) {
                    return Err(parse_err(&at, format!("unknown section [{name}]")));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(&at, "expected `key = value`"))?;
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            out.push(key, v.trim(), at)?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Settings::parse(&text, &path.display().to_string())
    }

    fn push(&mut self, key: String, value: &str, at: Location) -> Result<(), ConfigError> {
        if !known(&key) {
            return Err(parse_err(&at, format!("unknown key `{key}`")));
        }
        if value.is_empty() {
            return Err(parse_err(&at, format!("`{key}` has no value")));
        }
        self.entries.push(Entry {
            key,
            value: value.to_string(),
            at,
        });
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let at = Location::Override(assignment.to_string());
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| parse_err(&at, "expected `section.key=value`"))?;
        self.push(k.trim().to_string(), v.trim(), at)
    }

    /// Applies `CRLFLOOD_SEED` when it is set.
    pub fn apply_env_seed(&mut self) -> Result<(), ConfigError> {
        if let Ok(v) = std::env::var("CRLFLOOD_SEED") {
            self.push("seed".into(), &v, Location::Env("CRLFLOOD_SEED"))?;
        }
        Ok(())
    }

    fn last(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.last(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|err| parse_err(&e.at, format!("bad value for `{key}`: {err}"))),
        }
    }

    fn range(&self, key: &str, ok: bool, why: &str) -> Result<(), ConfigError> {
        if ok {
            return Ok(());
        }
        let at = self
            .last(key)
            .map(|e| e.at.clone())
            .unwrap_or(Location::Override(key.to_string()));
        Err(parse_err(&at, format!("`{key}` {why}")))
    }

    /// Builds the run configuration. `road_graph` overrides `topology.road_graph`.
    pub fn to_run_config(&self, road_graph: Option<&Path>) -> Result<RunConfig, ConfigError> {
        let mut c = RunConfig::default();
        if let Some(v) = self.get("seed")? {
            c.seed = v;
        }
        if let Some(v) = self.get("horizon_slots")? {
            c.horizon_slots = v;
        }

        if let Some(v) = self.get("file.k")? {
            c.file.k = v;
        }
        if let Some(v) = self.get("file.packet_bytes")? {
            c.file.packet_bytes = v;
        }

        let r = &mut c.radio;
        if let Some(v) = self.get("radio.tx_range")? {
            r.tx_range_m = v;
        }
        if let Some(v) = self.get("radio.interference_range")? {
            r.interference_range_m = v;
        }
        if let Some(v) = self.get::<f64>("radio.epsilon")? {
            self.range("radio.epsilon", (0.0..1.0).contains(&v), "must lie in [0, 1)")?;
            r.erasure_prob = v;
        }
        if let Some(v) = self.get("radio.packets_per_slot")? {
            r.packets_per_slot = v;
        }
        if let Some(v) = self.get("radio.slot_seconds")? {
            r.slot_seconds = v;
        }

        let s = &mut c.scheme;
        if let Some(v) = self.get("scheme.kind")? {
            s.kind = v;
        }
        if let Some(m) = self.get::<InverseRate>("scheme.M")? {
            let precode = match m {
                InverseRate::Finite(v) if v.fract() == 0.0 && v >= 2.0 => Precode::Fixed(v as u32),
                _ => {
                    return Err(parse_err(
                        &self.last("scheme.M").expect("just read").at,
                        "`scheme.M` must be an integer of at least 2",
                    ))
                }
            };
            c.file.precode = precode;
        }
        if let Some(e) = self.last("scheme.hash_first_slots") {
            s.hash_first_slots = if e.value == "auto" {
                None
            } else {
                self.get("scheme.hash_first_slots")?
            };
        }
        if let Some(v) = self.get::<f64>("scheme.hash_forward_prob")? {
            self.range("scheme.hash_forward_prob", (0.0..=1.0).contains(&v), "must lie in [0, 1]")?;
            s.hash_forward_prob = v;
        }
        if let Some(v) = self.get("scheme.seed_multiplier")? {
            s.seed_multiplier = v;
        }
        if let Some(v) = self.get("scheme.seeding_rate")? {
            s.seeding_rate_pps = v;
        }
        if let Some(v) = self.get("scheme.verification")? {
            s.verification = v;
        }
        if let Some(v) = self.get("scheme.quarantine_capacity")? {
            s.quarantine_capacity = v;
        }
        if let Some(v) = self.get("scheme.signature_bytes")? {
            c.overhead.signature_bytes = v;
        }
        if let Some(v) = self.get("scheme.hash_bytes")? {
            c.overhead.hash_bytes = v;
        }

        if let Some(v) = self.get::<f64>("adversary.fraction")? {
            self.range("adversary.fraction", (0.0..1.0).contains(&v), "must lie in [0, 1)")?;
            c.malicious_fraction = v;
        }

        c.topology = self.topology(road_graph)?;
        c.validate()?;
        Ok(c)
    }

    fn topology(&self, road_graph: Option<&Path>) -> Result<Topology, ConfigError> {
        let kind: String = self.get("topology.kind")?.unwrap_or_else(|| "urban".into());
        match kind.as_str() {
            "line" => Ok(Topology::Line {
                d: self.get("topology.d")?.unwrap_or(31),
            }),
            "urban" => {
                let rows = self.get("topology.rows")?.unwrap_or(10);
                let cols = self.get("topology.cols")?.unwrap_or(10);
                let block = self.get("topology.block_m")?.unwrap_or(crlflood::engine::DEFAULT_BLOCK_M);
                let bias = self.get("topology.turn_bias")?.unwrap_or(0.5);
                let mut u = UrbanConfig::grid(rows, cols, block, bias);
                if let Some(v) = self.get("topology.vehicles")? {
                    u.vehicles = v;
                }
                if let Some(v) = self.get("topology.speed_min")? {
                    u.speed_min = v;
                }
                if let Some(v) = self.get("topology.speed_max")? {
                    u.speed_max = v;
                }
                let graph_path = match road_graph {
                    Some(p) => Some(p.to_path_buf()),
                    None => self
                        .last("topology.road_graph")
                        .filter(|e| e.value != "none")
                        .map(|e| PathBuf::from(&e.value)),
                };
                if let Some(path) = graph_path {
                    let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Read {
                        path: path.clone(),
                        source,
                    })?;
                    u.map = MapSource::Graph(RoadGraph::parse(&text)?);
                    if self.last("topology.sources").is_none() {
                        return Err(parse_err(
                            &Location::Override("topology.sources".into()),
                            "a road graph needs explicit `topology.sources`",
                        ));
                    }
                }
                if let Some(e) = self.last("topology.sources") {
                    if e.value != "auto" {
                        u.sources = parse_points(&e.value).map_err(|m| parse_err(&e.at, m))?;
                    }
                }
                Ok(Topology::Urban(u))
            }
            other => Err(parse_err(
                &self.last("topology.kind").expect("read above").at,
                format!("unknown topology `{other}`, expected urban or line"),
            )),
        }
    }

    /// The scheme named in the settings, defaulting to Precode-and-Hash.
    pub fn scheme_kind(&self) -> Result<SchemeKind, ConfigError> {
        Ok(self.get("scheme.kind")?.unwrap_or(SchemeKind::PrecodeAndHash))
    }
}

fn parse_points(s: &str) -> Result<Vec<Point>, String> {
    s.split(',')
        .map(|p| {
            let (x, y) = p
                .trim()
                .split_once(':')
                .ok_or_else(|| format!("expected x:y, got `{}`", p.trim()))?;
            let x: f64 = x.trim().parse().map_err(|e| format!("bad x in `{p}`: {e}"))?;
            let y: f64 = y.trim().parse().map_err(|e| format!("bad y in `{p}`: {e}"))?;
            Ok(Point::new(x, y))
        })
        .collect()
}

/// Key table for `--help`.
pub fn help_table() -> String {
    let mut s = String::from("Config keys (section.key = default):\n");
    for (k, d, what) in KEYS {
        s.push_str(&format!("  {k:<28} {d:<15} {what}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_default_scenario() {
        let c = Settings::parse("", "x").unwrap().to_run_config(None).unwrap();
        assert_eq!(c.file.k, 1000);
        assert_eq!(c.file.packet_bytes, 1000);
        assert_eq!(c.file.precode, Precode::Fixed(3));
        assert_eq!(c.radio.erasure_prob, 0.05);
        assert_eq!(c.radio.tx_range_m, 200.0);
        assert_eq!(c.radio.interference_range_m, 300.0);
        assert_eq!(c.radio.packets_per_slot, 20);
        assert_eq!(c.scheme.seeding_rate_pps, 60.0);
        assert_eq!(c.malicious_fraction, 0.05);
        let Topology::Urban(u) = &c.topology else { panic!() };
        assert_eq!(u.vehicles, 236);
        assert_eq!(u.sources.len(), 4);
    }

    #[test]
    fn sections_comments_and_overrides() {
        let text = "seed = 3 # comment\n\n[scheme]\nkind = WaitToDecode\nM = 4\n[radio]\nepsilon=0.1\n";
        let mut s = Settings::parse(text, "x").unwrap();
        s.set("scheme.M=5").unwrap();
        let c = s.to_run_config(None).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.scheme.kind, SchemeKind::WaitToDecode);
        assert_eq!(c.file.precode, Precode::Fixed(5));
        assert_eq!(c.radio.erasure_prob, 0.1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = Settings::parse("[radio]\n\nbogus = 1\n", "cfg.txt").unwrap_err();
        assert_eq!(e.to_string(), "cfg.txt:3: unknown key `radio.bogus`");
        let e = Settings::parse("[radio]\nepsilon = 1.5\n", "cfg.txt")
            .unwrap()
            .to_run_config(None)
            .unwrap_err();
        assert!(e.to_string().starts_with("cfg.txt:2:"), "{e}");
        assert!(e.to_string().contains("[0, 1)"), "{e}");
        assert!(Settings::parse("[nope]\n", "x").is_err());
        assert!(Settings::parse("[file]\nk\n", "x").is_err());
        assert!(Settings::default().set("file.zzz=1").is_err());
        let e = Settings::parse("[scheme]\nM = 1\n", "x").unwrap().to_run_config(None).unwrap_err();
        assert!(e.to_string().contains("scheme.M"), "{e}");
    }

    #[test]
    fn line_topology_and_sources() {
        let c = Settings::parse("[topology]\nkind = line\nd = 5\n", "x")
            .unwrap()
            .to_run_config(None)
            .unwrap();
        assert_eq!(c.topology, Topology::Line { d: 5 });
        let c = Settings::parse("[topology]\nsources = 0:0, 100:50\n", "x")
            .unwrap()
            .to_run_config(None)
            .unwrap();
        let Topology::Urban(u) = &c.topology else { panic!() };
        assert_eq!(u.sources, vec![Point::new(0.0, 0.0), Point::new(100.0, 50.0)]);
    }

    #[test]
    fn every_key_is_accepted() {
        for (k, _, _) in KEYS {
            assert!(known(k));
        }
        assert_eq!(KEYS.len(), KEYS.iter().map(|k| k.0).collect::<std::collections::BTreeSet<_>>().len());
    }
}
