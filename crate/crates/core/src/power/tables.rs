use super::PowerError;
use crate::config::{LeakageLutSpec, VfCurveSpec};

/// Leakage scaling grid over temperature (°C) and voltage (V).
#[derive(Debug, Clone, PartialEq)]
pub struct LeakageLut {
    pub temps_c: Vec<f64>,
    pub voltages_v: Vec<f64>,
    pub ratios: Vec<Vec<f64>>,
}

impl From<&LeakageLutSpec> for LeakageLut {
    fn from(s: &LeakageLutSpec) -> Self {
        LeakageLut {
            temps_c: s.temps_c.clone(),
            voltages_v: s.voltages_v.clone(),
            ratios: s.ratios.clone(),
        }
    }
}

/// Index of the grid cell holding `x` and the weight of its upper corner.
fn bracket(axis: &[f64], x: f64) -> Option<(usize, f64)> {
    let (lo, hi) = (*axis.first()?, *axis.last()?);
    if !(x >= lo && x <= hi) {
        return None;
    }
    if axis.len() == 1 {
        return Some((0, 0.0));
    }
    let i = axis
        .windows(2)
        .position(|w| x <= w[1])
        .unwrap_or(axis.len() - 2);
    let w = (x - axis[i]) / (axis[i + 1] - axis[i]);
    Some((i, w))
}

impl LeakageLut {
    /// Bilinear interpolation; no extrapolation outside the grid.
    pub fn ratio(&self, temp_c: f64, voltage_v: f64) -> Result<f64, PowerError> {
        let outside = || PowerError::OutsideLut { temp_c, voltage_v };
        let (i, wt) = bracket(&self.temps_c, temp_c).ok_or_else(outside)?;
        let (j, wv) = bracket(&self.voltages_v, voltage_v).ok_or_else(outside)?;
        let at = |a: usize, b: usize| {
            let a = a.min(self.temps_c.len() - 1);
            let b = b.min(self.voltages_v.len() - 1);
            self.ratios[a][b]
        };
        let lo = at(i, j) * (1.0 - wv) + at(i, j + 1) * wv;
        let hi = at(i + 1, j) * (1.0 - wv) + at(i + 1, j + 1) * wv;
        Ok(lo * (1.0 - wt) + hi * wt)
    }
}

/// `p_lkg0 · LUT(T, V) / LUT(T0, V0)`.
pub fn leakage_power(
    p_lkg0_w: f64,
    lut: &LeakageLut,
    reference: (f64, f64),
    temp_c: f64,
    voltage_v: f64,
) -> Result<f64, PowerError> {
    let r0 = lut.ratio(reference.0, reference.1)?;
    let r = lut.ratio(temp_c, voltage_v)?;
    if r == r0 {
        return Ok(p_lkg0_w);
    }
    Ok(p_lkg0_w * r / r0)
}

/// Voltage-frequency curves, one per characterization temperature. Points
/// are `(Hz, V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VfCurve {
    pub curves: Vec<(Option<f64>, Vec<(f64, f64)>)>,
}

impl From<&VfCurveSpec> for VfCurve {
    fn from(s: &VfCurveSpec) -> Self {
        let hz = |pts: &[[f64; 2]]| pts.iter().map(|p| (p[0] * 1e6, p[1])).collect::<Vec<_>>();
        let mut curves = Vec::new();
        if !s.points.is_empty() {
            curves.push((None, hz(&s.points)));
        }
        for c in &s.by_temp {
            curves.push((Some(c.temp_c), hz(&c.points)));
        }
        VfCurve { curves }
    }
}

impl VfCurve {
    pub fn single(points: &[(f64, f64)]) -> Self {
        VfCurve {
            curves: vec![(None, points.to_vec())],
        }
    }

    /// Piecewise-linear voltage at `freq_hz` on the curve characterized
    /// closest to `temp_c` (the temperature-free curve matches any).
    pub fn f2v(&self, freq_hz: f64, temp_c: f64) -> Result<f64, PowerError> {
        let pts = &self
            .curves
            .iter()
            .min_by(|a, b| {
                let d = |t: Option<f64>| t.map_or(0.0, |t| (t - temp_c).abs());
                d(a.0).total_cmp(&d(b.0))
            })
            .ok_or(PowerError::OutsideVf { freq_hz })?
            .1;
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let (i, w) = bracket(&xs, freq_hz).ok_or(PowerError::OutsideVf { freq_hz })?;
        if w == 0.0 || pts.len() == 1 {
            return Ok(pts[i].1);
        }
        if w == 1.0 {
            return Ok(pts[i + 1].1);
        }
        Ok(pts[i].1 + (pts[i + 1].1 - pts[i].1) * w)
    }
}

/// `(C_idle + C_active · u) · F · V²`, in watts.
pub fn dynamic_power(
    cdyn_idle_f: f64,
    cdyn_active_f: f64,
    utilization: f64,
    freq_hz: f64,
    voltage_v: f64,
) -> Result<f64, PowerError> {
    if !(0.0..=1.0).contains(&utilization) {
        return Err(PowerError::Utilization { value: utilization });
    }
    Ok((cdyn_idle_f + cdyn_active_f * utilization) * freq_hz * voltage_v * voltage_v)
}
