//! Power model: a tree of power nodes bound to hardware models. Each node
//! has a leakage part scaled from its characterization point through a
//! temperature/voltage table, and a dynamic part driven by the utilization
//! of its models over each power trace interval (PTI).

mod model;
mod tables;

pub use model::{
    collect_activity, glob_match, ActivitySample, PowerModel, PowerNode, PowerRow, PowerTrace,
};
pub use tables::{dynamic_power, leakage_power, LeakageLut, VfCurve};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PowerError {
    #[error("leakage table has no data at {temp_c} °C, {voltage_v} V")]
    OutsideLut { temp_c: f64, voltage_v: f64 },
    #[error("frequency {freq_hz} Hz is outside the VF curve")]
    OutsideVf { freq_hz: f64 },
    #[error("utilization {value} is outside [0, 1]")]
    Utilization { value: f64 },
    #[error("power node `{node}`: {reason}")]
    Node { node: String, reason: String },
}
