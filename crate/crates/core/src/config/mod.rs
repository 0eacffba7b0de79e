//! Hierarchical YAML configuration: platform parameters, simulation options
//! and the optional power characterization tree.
//!
//! Several files can be layered; later files override earlier ones key by
//! key. Cycle-valued parameters are expressed in the clock domain of the
//! engine that owns them, bandwidths in bytes per cycle of that engine.

mod merge;
mod power;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_yaml::Value;

use crate::clock::ClockClass;

pub use merge::{apply_override, deep_merge};
pub use power::{LeakageLutSpec, PowerConfig, PowerNodeSpec, VfCurveSpec, VfPointsSpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("missing required key `{key}`")]
    Missing { key: String },
    #[error("bad value for `{key}`: {message}")]
    Type { key: String, message: String },
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("bad override `{text}`: {reason}")]
    BadOverride { text: String, reason: String },
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpuArrayConfig {
    pub rows: u32,
    pub cols: u32,
    #[serde(default = "default_macs_per_cell")]
    pub macs_per_cell: u32,
    /// Budget for one data block's input plus output bytes.
    pub block_buffer_bytes: u64,
    /// Post-processing elements per DPU cycle; defaults to `cols`.
    #[serde(default)]
    pub ppe_throughput: Option<u32>,
}

fn default_macs_per_cell() -> u32 {
    16
}

impl DpuArrayConfig {
    pub fn cells(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }

    pub fn peak_macs_per_cycle(&self) -> u64 {
        self.cells() * self.macs_per_cell as u64
    }

    pub fn ppe(&self) -> u32 {
        self.ppe_throughput.unwrap_or(self.cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StencilConfig {
    pub tile_x: u32,
    pub tile_y: u32,
    pub tile_oc: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DspConfig {
    /// Elements per SIMD vector; also the peak elements per DSP cycle.
    pub simd_width: u32,
    pub unroll_block: u32,
    /// Vectors per pipelined data block.
    pub pipeline_block: u32,
    /// Kernel cost table: a CSV/JSON path or `builtin:synthetic`.
    pub curves: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbConfig {
    pub size: u64,
    pub ports: u32,
    pub bw_bytes_per_cycle: u64,
    pub latency: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PagePolicy {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdrConfig {
    pub bw_bytes_per_cycle: u64,
    pub banks: u32,
    pub page_bytes: u64,
    #[serde(rename = "tCL")]
    pub t_cl: u64,
    #[serde(rename = "tRCD")]
    pub t_rcd: u64,
    #[serde(rename = "tRP")]
    pub t_rp: u64,
    pub burst_bytes: u64,
    /// Cycles between refresh windows; 0 disables refresh.
    pub refresh_interval: u64,
    pub refresh_penalty: u64,
    pub page_policy: PagePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmaConfig {
    pub channels: u32,
    #[serde(default = "default_max_request")]
    pub max_request_bytes: u64,
    #[serde(default = "default_outstanding")]
    pub outstanding: u32,
    /// Per-channel issue bandwidth.
    pub bw_bytes_per_cycle: u64,
}

fn default_max_request() -> u64 {
    4096
}

fn default_outstanding() -> u32 {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NocConfig {
    pub port_latency: u64,
    pub port_bw_bytes_per_cycle: u64,
}

/// Clock frequencies in MHz. Simulated time counts `reference` cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreqConfig {
    pub reference: f64,
    pub dpu: f64,
    pub dsp: f64,
    pub cb: f64,
    pub noc: f64,
    pub dma: f64,
    pub ddr: f64,
}

impl FreqConfig {
    pub fn mhz(&self, class: ClockClass) -> f64 {
        match class {
            ClockClass::Reference => self.reference,
            ClockClass::Dpu => self.dpu,
            ClockClass::Dsp => self.dsp,
            ClockClass::Cb => self.cb,
            ClockClass::Noc => self.noc,
            ClockClass::Dma => self.dma,
            ClockClass::Ddr => self.ddr,
        }
    }

    pub fn hz(&self, class: ClockClass) -> f64 {
        self.mhz(class) * 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    pub fifo_depth: u32,
    #[serde(default = "default_barrier_slots")]
    pub barrier_slots: u32,
}

fn default_barrier_slots() -> u32 {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformConfig {
    pub tiles: u32,
    pub dpus_per_tile: u32,
    pub dpu_array: DpuArrayConfig,
    pub stencil_set: Vec<StencilConfig>,
    pub dsps_per_tile: u32,
    pub dsp: DspConfig,
    pub cb: CbConfig,
    pub ddr: DdrConfig,
    pub dma: DmaConfig,
    pub noc: NocConfig,
    pub freq_mhz: FreqConfig,
    pub scheduler: SchedulerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOptions {
    #[serde(default)]
    pub trace_path: Option<PathBuf>,
    #[serde(default)]
    pub report_path: Option<PathBuf>,
    #[serde(default)]
    pub power_trace_path: Option<PathBuf>,
    #[serde(default)]
    pub run_limit: Option<u64>,
    #[serde(default)]
    pub power_enabled: bool,
    #[serde(default = "default_pti")]
    pub pti_cycles: u64,
}

fn default_pti() -> u64 {
    10_000
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            trace_path: None,
            report_path: None,
            power_trace_path: None,
            run_limit: None,
            power_enabled: false,
            pti_cycles: default_pti(),
        }
    }
}

/// A complete, validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub platform: PlatformConfig,
    pub sim: SimOptions,
    pub power: Option<PowerConfig>,
}

impl Config {
    /// Loads and deep-merges `paths` in order, then validates.
    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<Config, ConfigError> {
        Self::load_with_overrides(paths, &[] as &[&str])
    }

    pub fn load_with_overrides<P: AsRef<Path>, S: AsRef<str>>(
        paths: &[P],
        overrides: &[S],
    ) -> Result<Config, ConfigError> {
        let mut merged = Value::Mapping(Default::default());
        for p in paths {
            let p = p.as_ref();
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            let doc: Value = serde_yaml::from_str(&text).map_err(|e| ConfigError::Parse {
                path: p.to_path_buf(),
                message: e.to_string(),
            })?;
            deep_merge(&mut merged, doc);
        }
        let cfg = Config::from_value(merged)?;
        cfg.with_overrides(overrides)
    }

    pub fn from_yaml_str(text: &str) -> Result<Config, ConfigError> {
        let doc: Value = serde_yaml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            message: e.to_string(),
        })?;
        Config::from_value(doc)
    }

    /// Builds a typed config from a merged YAML document and validates it.
    pub fn from_value(doc: Value) -> Result<Config, ConfigError> {
        let Value::Mapping(mut map) = doc else {
            return Err(ConfigError::Type {
                key: "<root>".into(),
                message: "configuration must be a mapping".into(),
            });
        };
        let sim = match map.remove("sim") {
            Some(v) if !v.is_null() => typed::<SimOptions>(v, "sim")?,
            _ => SimOptions::default(),
        };
        let power = match map.remove("power") {
            Some(v) if !v.is_null() => Some(typed::<PowerConfig>(v, "power")?),
            _ => None,
        };
        let platform = typed::<PlatformConfig>(Value::Mapping(map), "")?;
        let cfg = Config {
            platform,
            sim,
            power,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serializes to a YAML document that parses back to an equal config.
    pub fn to_value(&self) -> Value {
        let mut v = serde_yaml::to_value(&self.platform).expect("platform serializes");
        if let Value::Mapping(m) = &mut v {
            m.insert(
                "sim".into(),
                serde_yaml::to_value(&self.sim).expect("sim options serialize"),
            );
            m.insert(
                "power".into(),
                serde_yaml::to_value(&self.power).expect("power config serializes"),
            );
        }
        v
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(&self.to_value()).expect("config serializes")
    }

    /// Applies `dotted.key=value` overrides and re-validates.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Config, ConfigError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = self.to_value();
        for o in overrides {
            apply_override(&mut doc, o.as_ref())?;
        }
        Config::from_value(doc)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.platform.validate()?;
        let s = &self.sim;
        if s.power_enabled {
            if s.pti_cycles < 1 {
                return Err(invalid(
                    "sim.pti_cycles",
                    "must be >= 1 when power is enabled",
                ));
            }
            if self.power.is_none() {
                return Err(invalid(
                    "power",
                    "power characterization required when sim.power_enabled is set",
                ));
            }
        }
        if let Some(p) = &self.power {
            p.validate()?;
        }
        Ok(())
    }
}

fn typed<T: serde::de::DeserializeOwned>(v: Value, prefix: &str) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let msg = e.inner().to_string();
        if let Some(field) = quoted_after(&msg, "missing field ") {
            return ConfigError::Missing {
                key: join_key(&[prefix, &path, field]),
            };
        }
        if let Some(field) = quoted_after(&msg, "unknown field ") {
            let parent = match path.rsplit_once('.') {
                Some((head, last)) if last == field => head,
                None if path == field => "",
                _ => path.as_str(),
            };
            return ConfigError::UnknownKey {
                key: join_key(&[prefix, parent, field]),
            };
        }
        ConfigError::Type {
            key: join_key(&[prefix, &path]),
            message: msg,
        }
    })
}

fn join_key(parts: &[&str]) -> String {
    parts
        .iter()
        .filter(|s| !s.is_empty() && **s != ".")
        .copied()
        .collect::<Vec<_>>()
        .join(".")
}

fn quoted_after<'a>(msg: &'a str, prefix: &str) -> Option<&'a str> {
    let rest = msg.strip_prefix(prefix)?;
    let rest = rest.strip_prefix('`')?;
    rest.split('`').next()
}

impl PlatformConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("tiles", self.tiles as u64),
            ("dpus_per_tile", self.dpus_per_tile as u64),
            ("dpu_array.rows", self.dpu_array.rows as u64),
            ("dpu_array.cols", self.dpu_array.cols as u64),
            (
                "dpu_array.macs_per_cell",
                self.dpu_array.macs_per_cell as u64,
            ),
            (
                "dpu_array.block_buffer_bytes",
                self.dpu_array.block_buffer_bytes,
            ),
            ("dpu_array.ppe_throughput", self.dpu_array.ppe() as u64),
            ("dsps_per_tile", self.dsps_per_tile as u64),
            ("dsp.simd_width", self.dsp.simd_width as u64),
            ("dsp.unroll_block", self.dsp.unroll_block as u64),
            ("dsp.pipeline_block", self.dsp.pipeline_block as u64),
            ("cb.size", self.cb.size),
            ("cb.ports", self.cb.ports as u64),
            ("cb.bw_bytes_per_cycle", self.cb.bw_bytes_per_cycle),
            ("ddr.bw_bytes_per_cycle", self.ddr.bw_bytes_per_cycle),
            ("ddr.banks", self.ddr.banks as u64),
            ("ddr.page_bytes", self.ddr.page_bytes),
            ("ddr.burst_bytes", self.ddr.burst_bytes),
            ("dma.channels", self.dma.channels as u64),
            ("dma.max_request_bytes", self.dma.max_request_bytes),
            ("dma.outstanding", self.dma.outstanding as u64),
            ("dma.bw_bytes_per_cycle", self.dma.bw_bytes_per_cycle),
            (
                "noc.port_bw_bytes_per_cycle",
                self.noc.port_bw_bytes_per_cycle,
            ),
            ("scheduler.fifo_depth", self.scheduler.fifo_depth as u64),
            (
                "scheduler.barrier_slots",
                self.scheduler.barrier_slots as u64,
            ),
        ];
        for (key, v) in positive {
            if v < 1 {
                return Err(invalid(key, "must be >= 1"));
            }
        }
        if self.ddr.page_bytes % self.ddr.burst_bytes != 0 {
            return Err(invalid(
                "ddr.page_bytes",
                "must be a multiple of ddr.burst_bytes",
            ));
        }
        if self.dsp.unroll_block % self.dsp.simd_width != 0 {
            return Err(invalid(
                "dsp.unroll_block",
                "must be a multiple of dsp.simd_width",
            ));
        }
        if self.stencil_set.is_empty() {
            return Err(invalid("stencil_set", "must contain at least one stencil"));
        }
        let cells = self.dpu_array.cells();
        for (i, s) in self.stencil_set.iter().enumerate() {
            if s.tile_x < 1 || s.tile_y < 1 || s.tile_oc < 1 {
                return Err(invalid(format!("stencil_set.{i}"), "extents must be >= 1"));
            }
            if s.tile_x as u64 * s.tile_y as u64 > cells {
                return Err(invalid(
                    format!("stencil_set.{i}"),
                    format!("tile_x*tile_y exceeds the {cells} array cells"),
                ));
            }
        }
        for class in ClockClass::ALL {
            let f = self.freq_mhz.mhz(class);
            if !(f.is_finite() && f > 0.0) {
                return Err(invalid(format!("freq_mhz.{}", class.name()), "must be > 0"));
            }
        }
        Ok(())
    }

    pub fn dsp_peak_elems_per_cycle(&self) -> u64 {
        self.dsp.simd_width as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const BASE: &str = include_str!("../../../../data/platform.yaml");

    #[test]
    fn base_config_loads() {
        let cfg = Config::from_yaml_str(BASE).unwrap();
        assert_eq!(cfg.platform.dpu_array.macs_per_cell, 16);
        assert_eq!(cfg.platform.scheduler.barrier_slots, 64);
    }

    #[test]
    fn missing_cb_bw_names_full_path() {
        let text = BASE.replace("  bw_bytes_per_cycle: 64\n  latency", "  latency");
        let err = Config::from_yaml_str(&text).unwrap_err();
        assert!(
            matches!(&err, ConfigError::Missing { key } if key == "cb.bw_bytes_per_cycle"),
            "{err}"
        );
    }

    #[test]
    fn empty_stencil_set_rejected() {
        let cfg = Config::from_yaml_str(BASE).unwrap();
        let err = cfg.with_overrides(&["stencil_set=[]"]).unwrap_err();
        assert!(
            matches!(&err, ConfigError::Invalid { key, .. } if key == "stencil_set"),
            "{err}"
        );
    }

    #[test]
    fn overrides_and_validation() {
        let cfg = Config::from_yaml_str(BASE).unwrap();
        let c2 = cfg.with_overrides(&["ddr.bw_bytes_per_cycle=32"]).unwrap();
        assert_eq!(c2.platform.ddr.bw_bytes_per_cycle, 32);
        assert_eq!(c2.platform.cb, cfg.platform.cb);
        let err = cfg.with_overrides(&["tiles=0"]).unwrap_err();
        assert!(
            matches!(&err, ConfigError::Invalid { key, .. } if key == "tiles"),
            "{err}"
        );
        // The stencil must still fit the smaller array.
        let c3 = cfg
            .with_overrides(&[
                "dpu_array.rows=8",
                "stencil_set=[{tile_x: 8, tile_y: 16, tile_oc: 64}]",
            ])
            .unwrap();
        assert_eq!(c3.platform.dpu_array.rows, 8);
        c3.validate().unwrap();
        assert!(matches!(
            cfg.with_overrides(&["ddr.nope=1"]).unwrap_err(),
            ConfigError::UnknownKey { .. }
        ));
        assert!(matches!(
            cfg.with_overrides(&["tiles=abc"]).unwrap_err(),
            ConfigError::BadOverride { .. }
        ));
    }

    #[test]
    fn unknown_key_in_file_is_reported() {
        let text = format!("{BASE}\nbogus: 1\n");
        let err = Config::from_yaml_str(&text).unwrap_err();
        assert!(
            matches!(&err, ConfigError::UnknownKey { key } if key == "bogus"),
            "{err}"
        );
    }

    #[test]
    fn type_mismatch_is_reported() {
        let text = BASE.replace("tiles: 2", "tiles: many");
        let err = Config::from_yaml_str(&text).unwrap_err();
        assert!(
            matches!(&err, ConfigError::Type { key, .. } if key == "tiles"),
            "{err}"
        );
    }

    #[test]
    fn round_trips_through_yaml() {
        let cfg = Config::from_yaml_str(BASE).unwrap();
        let again = Config::from_yaml_str(&cfg.to_yaml()).unwrap();
        assert_eq!(cfg, again);
    }
}
