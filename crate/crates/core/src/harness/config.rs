use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::routing::{RoutingConfig, RoutingVariant};
use crate::simcore::DEFAULT_WATCHDOG_HORIZON;
use crate::topology::FaultPlacement;
use crate::traffic::{TrafficPattern, DEFAULT_PACKET_SIZE};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kx: usize,
    pub ky: usize,
    pub variant: RoutingVariant,
    pub vcs: usize,
    /// Unidirectional fault count.
    pub fault_count: usize,
    pub placement: FaultPlacement,
    pub faults_file: Option<PathBuf>,
    pub require_connected: bool,
    pub pattern: TrafficPattern,
    pub packet_size: u32,
    pub warmup: u64,
    pub measure: u64,
    /// Extra cycles allowed for measured packets to finish.
    pub drain: u64,
    pub seeds: Vec<u64>,
    pub rates: Vec<f64>,
    pub watchdog_horizon: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kx: 8,
            ky: 8,
            variant: RoutingVariant::HXy,
            vcs: 2,
            fault_count: 0,
            placement: FaultPlacement::Random,
            faults_file: None,
            require_connected: true,
            pattern: TrafficPattern::UniformRandom,
            packet_size: DEFAULT_PACKET_SIZE,
            warmup: 20_000,
            measure: 200_000,
            drain: 50_000,
            seeds: (0..10).collect(),
            rates: vec![0.01],
            watchdog_horizon: DEFAULT_WATCHDOG_HORIZON,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("invalid value `{v}` for `{key}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl ExperimentConfig {
    /// Applies one `key = value` setting. `seeds` takes a count `n`
    /// (seeds `0..n`) or an explicit comma list.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "mesh" => {
                let (a, b) = v
                    .split_once(['x', 'X'])
                    .ok_or_else(|| Error::config(format!("mesh must look like 8x8, got `{v}`")))?;
                self.kx = parse_num("mesh", a)?;
                self.ky = parse_num("mesh", b)?;
            }
            "kx" => self.kx = parse_num(key, v)?,
            "ky" => self.ky = parse_num(key, v)?,
            "variant" => self.variant = v.parse()?,
            "vcs" => self.vcs = parse_num(key, v)?,
            "faults" | "fault_count" => self.fault_count = parse_num(key, v)?,
            "placement" => self.placement = v.parse()?,
            "faults_file" => self.faults_file = Some(PathBuf::from(v)),
            "require_connected" => self.require_connected = parse_num(key, v)?,
            "pattern" | "traffic" => self.pattern = v.parse()?,
            "trace_file" => self.pattern = TrafficPattern::Trace(PathBuf::from(v)),
            "packet_size" => self.packet_size = parse_num(key, v)?,
            "warmup" => self.warmup = parse_num(key, v)?,
            "measure" => self.measure = parse_num(key, v)?,
            "drain" => self.drain = parse_num(key, v)?,
            "seeds" => {
                self.seeds = if v.contains(',') {
                    parse_list(key, v)?
                } else {
                    (0..parse_num::<u64>(key, v)?).collect()
                }
            }
            "rate" | "rates" => self.rates = parse_list(key, v)?,
            "watchdog" | "watchdog_horizon" => self.watchdog_horizon = parse_num(key, v)?,
            other => return Err(Error::config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.kx == 0 || self.ky == 0 {
            return Err(Error::config("mesh dimensions must be positive"));
        }
        RoutingConfig::new(self.variant, self.vcs)?;
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.packet_size == 0 {
            return Err(Error::config("packet size must be at least one flit"));
        }
        if !matches!(self.pattern, TrafficPattern::Trace(_)) {
            if self.rates.is_empty() {
                return Err(Error::config("at least one injection rate is required"));
            }
            if let Some(r) = self.rates.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
                return Err(Error::config(format!("injection rate {r} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Parses a flat `key = value` file; `#` starts a comment.
pub fn parse_config(text: &str, path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let wrap = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| wrap(format!("expected key = value, got `{line}`")))?;
        cfg.set(k, v).map_err(|e| match e {
            Error::Config(m) => wrap(m),
            other => wrap(other.to_string()),
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}
