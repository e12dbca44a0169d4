//! Trace-driven simulation of one device: per-event workflow, metrics,
//! reports, and the edge/server pair over an in-process or UDP transport.

mod clips;
mod config;
mod event;
mod net;
mod report;
mod trace;

pub use clips::{load_clip_dir, synthetic_clips};
pub use config::{
    v_off_for_budget, AccuracyEntry, AdrMode, LatencyConstants, ScenarioConfig, ShimConfig, QUANT_HEADER_BYTES,
};
pub use event::{init_model_weights, run_event, run_simulation, EventMetrics, EventPath, Simulator};
pub use net::{
    decode_envelope, encode_envelope, serve, AssistServer, DownlinkMessage, InProcess, Transport, UdpTransport,
    UplinkMeta,
};
pub use report::{SimulationReport, Summary};
pub use trace::{load_trace, write_trace, ChannelTraceRow, TRACE_HEADER};

use thiserror::Error;

use crate::assist::AssistError;
use crate::edge::EdgeError;
use crate::link::LinkError;
use crate::scheduler::ScheduleError;
use crate::tensor::TensorError;
use crate::wavelet::WaveletError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("trace line {line}: {reason}")]
    Trace { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error(transparent)]
    Assist(#[from] AssistError),
    #[error(transparent)]
    Edge(#[from] EdgeError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

impl From<csv::Error> for SimError {
    fn from(e: csv::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
