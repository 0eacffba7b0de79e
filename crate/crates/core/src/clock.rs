//! Clock-domain conversion. Simulated time is counted in cycles of a single
//! reference clock; engines running at other frequencies scale their costs.

use serde::{Deserialize, Serialize};

use crate::config::FreqConfig;

/// Engine clock classes that own a frequency in `freq_mhz`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockClass {
    Reference,
    Dpu,
    Dsp,
    Cb,
    Noc,
    Dma,
    Ddr,
}

impl ClockClass {
    pub const ALL: [ClockClass; 7] = [
        ClockClass::Reference,
        ClockClass::Dpu,
        ClockClass::Dsp,
        ClockClass::Cb,
        ClockClass::Noc,
        ClockClass::Dma,
        ClockClass::Ddr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClockClass::Reference => "reference",
            ClockClass::Dpu => "dpu",
            ClockClass::Dsp => "dsp",
            ClockClass::Cb => "cb",
            ClockClass::Noc => "noc",
            ClockClass::Dma => "dma",
            ClockClass::Ddr => "ddr",
        }
    }
}

/// Converts cycle counts of one engine clock into reference cycles.
///
/// Frequencies are kept in kHz so that the usual MHz settings (including
/// fractional ones such as 1333.333) convert with integer arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clock {
    eng_khz: u64,
    ref_khz: u64,
}

impl Clock {
    pub fn new(eng_mhz: f64, ref_mhz: f64) -> Self {
        Clock {
            eng_khz: mhz_to_khz(eng_mhz),
            ref_khz: mhz_to_khz(ref_mhz),
        }
    }

    pub fn identity() -> Self {
        Clock {
            eng_khz: 1,
            ref_khz: 1,
        }
    }

    pub fn for_class(freq: &FreqConfig, class: ClockClass) -> Self {
        Clock::new(freq.mhz(class), freq.reference)
    }

    /// Reference cycles needed to cover `cycles` engine cycles (rounded up).
    pub fn to_ref(&self, cycles: u64) -> u64 {
        if self.eng_khz == self.ref_khz {
            return cycles;
        }
        let num = cycles as u128 * self.ref_khz as u128;
        num.div_ceil(self.eng_khz as u128) as u64
    }

    /// Engine cycles per reference cycle.
    pub fn ratio(&self) -> f64 {
        self.eng_khz as f64 / self.ref_khz as f64
    }
}

fn mhz_to_khz(mhz: f64) -> u64 {
    ((mhz * 1000.0).round() as u64).max(1)
}

/// One converter per engine clock class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clocks {
    pub dpu: Clock,
    pub dsp: Clock,
    pub cb: Clock,
    pub noc: Clock,
    pub dma: Clock,
    pub ddr: Clock,
}

impl Clocks {
    pub fn new(freq: &FreqConfig) -> Self {
        Clocks {
            dpu: Clock::for_class(freq, ClockClass::Dpu),
            dsp: Clock::for_class(freq, ClockClass::Dsp),
            cb: Clock::for_class(freq, ClockClass::Cb),
            noc: Clock::for_class(freq, ClockClass::Noc),
            dma: Clock::for_class(freq, ClockClass::Dma),
            ddr: Clock::for_class(freq, ClockClass::Ddr),
        }
    }

    pub fn get(&self, class: ClockClass) -> Clock {
        match class {
            ClockClass::Reference => Clock::identity(),
            ClockClass::Dpu => self.dpu,
            ClockClass::Dsp => self.dsp,
            ClockClass::Cb => self.cb,
            ClockClass::Noc => self.noc,
            ClockClass::Dma => self.dma,
            ClockClass::Ddr => self.ddr,
        }
    }
}

/// Integer ceiling division for byte and cycle arithmetic.
pub fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}
