use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::config::PlatformConfig;
use crate::workload::{OpGeometry, Region};

const BUILTIN: &str = include_str!("../../../../data/dsp_curves.csv");

/// Cost of one DSP kernel as a function of its element count: a fixed
/// preamble plus linear terms for unrolled blocks, SIMD vectors and the
/// scalar remainder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DspKernelCurve {
    pub kernel: String,
    pub offset: u64,
    pub c_block: u64,
    pub c_vec: u64,
    pub c_scalar: u64,
    pub block_len: u64,
    pub vec_len: u64,
}

impl DspKernelCurve {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.vec_len == 0 || self.block_len == 0 || self.block_len % self.vec_len != 0 {
            return Err(EngineError::BadCurve {
                kernel: self.kernel.clone(),
                reason: "block_len must be a positive multiple of vec_len".into(),
            });
        }
        Ok(())
    }

    /// Whether the cost never drops when `n` grows. Inside a vector the cost
    /// rises by `c_scalar` per element; crossing a vector or block boundary
    /// must not be cheaper than the scalar or vector tail it replaces.
    pub fn is_monotone(&self) -> bool {
        let tail = (self.vec_len - 1) * self.c_scalar;
        self.c_vec >= tail
            && self.c_block >= (self.block_len / self.vec_len - 1) * self.c_vec + tail
    }

    /// Checks that the curve never processes more than `simd_width`
    /// elements per cycle, so utilization stays within one.
    pub fn check_peak(&self, simd_width: u64) -> Result<(), EngineError> {
        let ok = self.c_block * simd_width >= self.block_len
            && self.c_vec * simd_width >= self.vec_len
            && self.c_scalar * simd_width >= 1;
        if ok {
            Ok(())
        } else {
            Err(EngineError::BadCurve {
                kernel: self.kernel.clone(),
                reason: format!("faster than the {simd_width} elements/cycle SIMD peak"),
            })
        }
    }
}

/// DSP cycles to run `curve` over `n` elements.
pub fn dsp_kernel_cycles(curve: &DspKernelCurve, n: u64) -> u64 {
    let blocks = n / curve.block_len;
    let rest = n % curve.block_len;
    curve.offset
        + curve.c_block * blocks
        + curve.c_vec * (rest / curve.vec_len)
        + curve.c_scalar * (rest % curve.vec_len)
}

/// Kernel cost curves by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveTable {
    curves: BTreeMap<String, DspKernelCurve>,
}

impl CurveTable {
    pub fn from_curves(
        curves: impl IntoIterator<Item = DspKernelCurve>,
    ) -> Result<Self, EngineError> {
        let mut t = CurveTable::default();
        for c in curves {
            c.validate()?;
            if !c.is_monotone() {
                log::debug!(
                    "DSP curve `{}` is cheaper just past a vector or block boundary",
                    c.kernel
                );
            }
            if t.curves.contains_key(&c.kernel) {
                return Err(EngineError::BadCurve {
                    kernel: c.kernel.clone(),
                    reason: "listed twice".into(),
                });
            }
            t.curves.insert(c.kernel.clone(), c);
        }
        Ok(t)
    }

    pub fn from_csv_str(text: &str) -> Result<Self, EngineError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let rows = rdr
            .deserialize::<DspKernelCurve>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EngineError::CurveFile(e.to_string()))?;
        Self::from_curves(rows)
    }

    pub fn from_json_str(text: &str) -> Result<Self, EngineError> {
        let rows: Vec<DspKernelCurve> =
            serde_json::from_str(text).map_err(|e| EngineError::CurveFile(e.to_string()))?;
        Self::from_curves(rows)
    }

    pub fn builtin() -> Self {
        Self::from_csv_str(BUILTIN).expect("builtin curve table is valid")
    }

    /// Loads a table from a `.csv` or `.json` file, or `builtin:synthetic`.
    pub fn load(spec: &str) -> Result<Self, EngineError> {
        if spec == "builtin:synthetic" {
            return Ok(Self::builtin());
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::CurveFile(format!("{}: {e}", path.display())))?;
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            Self::from_json_str(&text)
        } else {
            Self::from_csv_str(&text)
        }
    }

    pub fn get(&self, kernel: &str) -> Result<&DspKernelCurve, EngineError> {
        self.curves
            .get(kernel)
            .ok_or_else(|| EngineError::UnknownKernel {
                kernel: kernel.to_string(),
                available: self.names(),
            })
    }

    pub fn names(&self) -> Vec<String> {
        self.curves.keys().cloned().collect()
    }

    /// Checks every curve against the platform's DSP: vectors must match
    /// the SIMD width, blocks the unroll block, and no curve may beat peak.
    pub fn check_platform(&self, cfg: &PlatformConfig) -> Result<(), EngineError> {
        let simd = cfg.dsp.simd_width as u64;
        for c in self.curves.values() {
            if c.vec_len != simd || c.block_len != cfg.dsp.unroll_block as u64 {
                return Err(EngineError::BadCurve {
                    kernel: c.kernel.clone(),
                    reason: format!(
                        "characterized for vec_len {} / block_len {}, platform has simd_width {} / unroll_block {}",
                        c.vec_len, c.block_len, simd, cfg.dsp.unroll_block
                    ),
                });
            }
            c.check_peak(simd)?;
        }
        Ok(())
    }
}

/// One pipelined DSP data block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DspBlock {
    /// Output elements produced.
    pub out_elems: u64,
    /// Elementary operations (output elements times window size).
    pub elems: u64,
    pub input_bytes: u64,
    pub output_bytes: u64,
}

/// Splits `region` into blocks of `pipeline_block` SIMD vectors of output.
pub fn dsp_blocks(g: &OpGeometry, region: &Region, cfg: &PlatformConfig) -> Vec<DspBlock> {
    let total = region.elems();
    if total == 0 {
        return Vec::new();
    }
    let per = cfg.dsp.pipeline_block as u64 * cfg.dsp.simd_width as u64;
    let in_total = g.input_bytes(region);
    let mut out = Vec::with_capacity(total.div_ceil(per) as usize);
    let mut done = 0u64;
    while done < total {
        let n = per.min(total - done);
        // Cumulative rounding keeps the block input bytes summing exactly.
        let in_lo = in_total * done / total;
        let in_hi = in_total * (done + n) / total;
        out.push(DspBlock {
            out_elems: n,
            elems: n * g.elems_per_output(),
            input_bytes: in_hi - in_lo,
            output_bytes: n * g.output_elem_bytes,
        });
        done += n;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve() -> DspKernelCurve {
        DspKernelCurve {
            kernel: "k".into(),
            offset: 100,
            c_block: 64,
            c_vec: 8,
            c_scalar: 1,
            block_len: 128,
            vec_len: 32,
        }
    }

    #[test]
    fn decomposition_examples() {
        let c = curve();
        // 300 = 2 blocks of 128 + 1 vector of 32 + 12 scalars.
        assert_eq!(dsp_kernel_cycles(&c, 300), 100 + 2 * 64 + 8 + 12);
        assert_eq!(dsp_kernel_cycles(&c, 0), 100);
        assert_eq!(dsp_kernel_cycles(&c, 128), 164);
    }

    #[test]
    fn unknown_kernel_lists_available() {
        let t = CurveTable::builtin();
        t.get("tanh").unwrap();
        let err = t.get("erf").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("erf") && msg.contains("relu"), "{msg}");
        let only = CurveTable::from_curves([curve()]).unwrap();
        assert!(only.get("tanh").is_err());
    }

    #[test]
    fn json_and_csv_agree() {
        let csv = "kernel,offset,c_block,c_vec,c_scalar,block_len,vec_len\nk,100,64,8,1,128,32\n";
        let json = r#"[{"kernel":"k","offset":100,"c_block":64,"c_vec":8,"c_scalar":1,"block_len":128,"vec_len":32}]"#;
        assert_eq!(
            CurveTable::from_csv_str(csv).unwrap(),
            CurveTable::from_json_str(json).unwrap()
        );
    }

    #[test]
    fn peak_check() {
        let mut c = curve();
        c.check_peak(32).unwrap();
        c.c_block = 3;
        assert!(c.check_peak(32).is_err());
        c.c_block = 4;
        c.c_scalar = 0;
        assert!(c.check_peak(32).is_err());
    }
}
