//! Cloud-assisted environmental sound recognition for batteryless LoRa
//! devices.
//!
//! The crate is laid out along the data path of one audio event:
//!
//! - [`wavelet`]: packet-transform spectrograms, time pooling, quantization
//!   and mask-guided multi-resolution refinement.
//! - [`assist`]: the server's transformer, attention rollout and band mask.
//! - [`edge`]: the on-device multi-/single-resolution classifiers.
//! - [`link`]: LoRa time-on-air, energy, ADR, framing and the power-cycle
//!   state machine.
//! - [`scheduler`]: choice of assistance resolution under the energy budget.
//! - [`sim`]: trace replay, scenario config, reports and the networked
//!   edge/server pair.
//!
//! [`tensor`] holds the dense primitives and the `OWT1` weight codec shared by
//! both models.

pub mod assist;
pub mod edge;
pub mod link;
pub mod scheduler;
pub mod sim;
pub mod tensor;
pub mod wavelet;
