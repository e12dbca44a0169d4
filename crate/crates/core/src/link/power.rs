//! One wake-to-off cycle of a batteryless node. Radio parameters survive a
//! brown-out only through the checkpoint.

use serde::{Deserialize, Serialize};

use super::{LinkError, LoRaParams, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Restore,
    Preprocess,
    Tx,
    Sleep,
    Rx,
    Inference,
    Checkpoint,
    Off,
}

impl Phase {
    /// Execution order from wake to off.
    pub const CYCLE: [Phase; 7] = [
        Phase::Restore,
        Phase::Preprocess,
        Phase::Tx,
        Phase::Sleep,
        Phase::Rx,
        Phase::Inference,
        Phase::Checkpoint,
    ];

    fn next(self) -> Option<Phase> {
        Some(match self {
            Phase::Restore => Phase::Preprocess,
            Phase::Preprocess => Phase::Tx,
            Phase::Tx => Phase::Sleep,
            Phase::Sleep => Phase::Rx,
            Phase::Rx => Phase::Inference,
            Phase::Inference => Phase::Checkpoint,
            Phase::Checkpoint => Phase::Off,
            Phase::Off => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerEvent {
    Wake,
    PhaseDone,
    PowerFail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PowerCycleState {
    pub phase: Phase,
    /// Non-volatile copy, written only when a cycle completes.
    pub checkpointed_params: LoRaParams,
    pub volatile_params: LoRaParams,
    /// Set when the last cycle ended in a power failure.
    pub incomplete: bool,
}

impl PowerCycleState {
    /// A node that is off with `params` in non-volatile memory.
    pub fn new(params: LoRaParams) -> Self {
        Self {
            phase: Phase::Off,
            checkpointed_params: params,
            volatile_params: params,
            incomplete: false,
        }
    }

    /// Applies a downlink ADR recommendation to the working copy. Only legal
    /// while the receive window is open.
    pub fn apply_downlink(&mut self, params: LoRaParams) -> Result<()> {
        if self.phase != Phase::Rx {
            return Err(LinkError::Config(format!(
                "downlink applied outside Rx (phase {:?})",
                self.phase
            )));
        }
        self.volatile_params = params;
        Ok(())
    }
}

pub fn power_cycle_advance(state: PowerCycleState, event: PowerEvent) -> Result<PowerCycleState> {
    let illegal = || LinkError::StateMachine {
        phase: state.phase,
        event,
    };
    let mut next = state;
    match (state.phase, event) {
        (Phase::Off, PowerEvent::Wake) => {
            next.phase = Phase::Restore;
            next.volatile_params = state.checkpointed_params;
            next.incomplete = false;
        }
        (Phase::Off, _) | (_, PowerEvent::Wake) => return Err(illegal()),
        (_, PowerEvent::PowerFail) => {
            next.phase = Phase::Off;
            next.incomplete = true;
        }
        (Phase::Checkpoint, PowerEvent::PhaseDone) => {
            next.checkpointed_params = state.volatile_params;
            next.phase = Phase::Off;
        }
        (phase, PowerEvent::PhaseDone) => {
            next.phase = phase.next().ok_or_else(illegal)?;
        }
    }
    Ok(next)
}
