use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{invalid, ConfigError};
use crate::clock::ClockClass;

/// Power characterization: named leakage tables and VF curves plus the tree
/// of power nodes that references them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    /// Junction temperature of the run.
    pub temp_c: f64,
    #[serde(default)]
    pub lkg_luts: BTreeMap<String, LeakageLutSpec>,
    #[serde(default)]
    pub vf_curves: BTreeMap<String, VfCurveSpec>,
    pub root: PowerNodeSpec,
}

/// Leakage ratio grid; `ratios[i][j]` belongs to `temps_c[i]`, `voltages_v[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakageLutSpec {
    pub temps_c: Vec<f64>,
    pub voltages_v: Vec<f64>,
    pub ratios: Vec<Vec<f64>>,
}

/// Frequency-to-voltage curve. Points are `[MHz, volts]`. Either a single
/// list (`points`) or one list per characterization temperature (`by_temp`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VfCurveSpec {
    #[serde(default)]
    pub points: Vec<[f64; 2]>,
    #[serde(default)]
    pub by_temp: Vec<VfPointsSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VfPointsSpec {
    pub temp_c: f64,
    pub points: Vec<[f64; 2]>,
}

/// One node of the power tree. `lkg_lut`, `vf_curve`, `temp0_c` and
/// `voltage0_v` are inherited from the parent when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerNodeSpec {
    pub name: String,
    #[serde(default)]
    pub p_lkg0_w: f64,
    #[serde(default)]
    pub temp0_c: Option<f64>,
    #[serde(default)]
    pub voltage0_v: Option<f64>,
    #[serde(default)]
    pub lkg_lut: Option<String>,
    #[serde(default)]
    pub cdyn_idle_f: f64,
    #[serde(default)]
    pub cdyn_active_f: f64,
    #[serde(default)]
    pub vf_curve: Option<String>,
    /// Hardware model path pattern, e.g. `tile*/dpu*` or `ddr`.
    #[serde(default)]
    pub binding: Option<String>,
    /// Clock class for unbound nodes; bound nodes use their models' clock.
    #[serde(default)]
    pub clock: Option<ClockClass>,
    /// Fixed supply voltage instead of resolving it from the VF curve.
    #[serde(default)]
    pub voltage_v: Option<f64>,
    #[serde(default)]
    pub children: Vec<PowerNodeSpec>,
}

impl PowerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.temp_c.is_finite() {
            return Err(invalid("power.temp_c", "must be finite"));
        }
        for (name, lut) in &self.lkg_luts {
            lut.validate(&format!("power.lkg_luts.{name}"))?;
        }
        for (name, c) in &self.vf_curves {
            c.validate(&format!("power.vf_curves.{name}"))?;
        }
        self.validate_node(&self.root, "power.root")
    }

    fn validate_node(&self, n: &PowerNodeSpec, key: &str) -> Result<(), ConfigError> {
        if n.name.is_empty() || n.name.contains('/') {
            return Err(invalid(
                format!("{key}.name"),
                "must be nonempty and contain no '/'",
            ));
        }
        for (field, v) in [
            ("p_lkg0_w", n.p_lkg0_w),
            ("cdyn_idle_f", n.cdyn_idle_f),
            ("cdyn_active_f", n.cdyn_active_f),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{key}.{field}"), "must be finite and >= 0"));
            }
        }
        if let Some(l) = &n.lkg_lut {
            if !self.lkg_luts.contains_key(l) {
                return Err(invalid(
                    format!("{key}.lkg_lut"),
                    format!("no table named `{l}`"),
                ));
            }
        }
        if let Some(c) = &n.vf_curve {
            if !self.vf_curves.contains_key(c) {
                return Err(invalid(
                    format!("{key}.vf_curve"),
                    format!("no curve named `{c}`"),
                ));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, c) in n.children.iter().enumerate() {
            if !seen.insert(c.name.as_str()) {
                return Err(invalid(
                    format!("{key}.children.{i}.name"),
                    format!("duplicate sibling name `{}`", c.name),
                ));
            }
            self.validate_node(c, &format!("{key}.children.{i}"))?;
        }
        Ok(())
    }
}

impl LeakageLutSpec {
    pub fn validate(&self, key: &str) -> Result<(), ConfigError> {
        strictly_increasing(&self.temps_c, &format!("{key}.temps_c"))?;
        strictly_increasing(&self.voltages_v, &format!("{key}.voltages_v"))?;
        if self.ratios.len() != self.temps_c.len()
            || self.ratios.iter().any(|r| r.len() != self.voltages_v.len())
        {
            return Err(invalid(
                format!("{key}.ratios"),
                "must have one row per temperature and one column per voltage",
            ));
        }
        if self
            .ratios
            .iter()
            .flatten()
            .any(|r| !(r.is_finite() && *r > 0.0))
        {
            return Err(invalid(format!("{key}.ratios"), "ratios must be > 0"));
        }
        Ok(())
    }
}

impl VfCurveSpec {
    pub fn validate(&self, key: &str) -> Result<(), ConfigError> {
        match (self.points.is_empty(), self.by_temp.is_empty()) {
            (false, true) => vf_points(&self.points, &format!("{key}.points")),
            (true, false) => {
                for (i, t) in self.by_temp.iter().enumerate() {
                    vf_points(&t.points, &format!("{key}.by_temp.{i}.points"))?;
                }
                Ok(())
            }
            _ => Err(invalid(key, "give exactly one of `points` or `by_temp`")),
        }
    }
}

fn vf_points(pts: &[[f64; 2]], key: &str) -> Result<(), ConfigError> {
    if pts.is_empty() {
        return Err(invalid(key, "needs at least one point"));
    }
    for w in pts.windows(2) {
        if w[1][0] <= w[0][0] {
            return Err(invalid(key, "frequencies must be strictly increasing"));
        }
        if w[1][1] < w[0][1] {
            return Err(invalid(key, "voltages must be nondecreasing"));
        }
    }
    if pts.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid(key, "values must be finite and >= 0"));
    }
    Ok(())
}

fn strictly_increasing(xs: &[f64], key: &str) -> Result<(), ConfigError> {
    if xs.is_empty() {
        return Err(invalid(key, "needs at least one entry"));
    }
    if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(key, "must be finite and strictly increasing"));
    }
    Ok(())
}
