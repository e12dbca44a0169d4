//! Per-cycle choice of assistance resolution: the most accurate option whose
//! round energy fits the capacitor budget, found by enumeration.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link::{rx_energy, time_on_air, tx_energy, LinkConfig, LinkError, LoRaParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("bypass needs {needed_j:.4} J but the budget is {budget_j:.4} J")]
    BypassInfeasible { needed_j: f64, budget_j: f64 },
}

pub type Result<T> = std::result::Result<T, ScheduleError>;

/// Fixed per-phase energies in joules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConstants {
    pub e_pre: f64,
    pub e_sleep: f64,
    pub e_rx: f64,
    pub e_inf: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        Self {
            e_pre: 0.0282,
            e_sleep: 0.010,
            e_rx: 0.0765,
            e_inf: 0.142,
        }
    }
}

impl EnergyConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [self.e_pre, self.e_sleep, self.e_rx, self.e_inf];
        if all.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(ScheduleError::Invalid(format!(
                "energy constants must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }

    /// Constants whose receive term follows the link's window and power.
    pub fn with_link_rx(mut self, link: &LinkConfig) -> Self {
        self.e_rx = rx_energy(link);
        self
    }
}

/// One candidate resolution. `r_a = 0` is local bypass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionOption {
    pub r_a: usize,
    pub payload_bytes: usize,
    pub est_accuracy: f32,
}

impl ResolutionOption {
    /// Payload of `r_a²` one-byte cells.
    pub fn new(r_a: usize, est_accuracy: f32) -> Self {
        Self {
            r_a,
            payload_bytes: r_a * r_a,
            est_accuracy,
        }
    }

    pub fn is_bypass(&self) -> bool {
        self.r_a == 0
    }
}

/// Energy of one round split by phase. Bypass rounds have zero Tx, Sleep and
/// Rx terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseEnergy {
    pub pre: f64,
    pub tx: f64,
    pub sleep: f64,
    pub rx: f64,
    pub inf: f64,
}

impl PhaseEnergy {
    /// Left-to-right sum in phase order.
    pub fn total(&self) -> f64 {
        self.pre + self.tx + self.sleep + self.rx + self.inf
    }
}

pub fn round_breakdown(
    option: &ResolutionOption,
    params: LoRaParams,
    link: &LinkConfig,
    constants: &EnergyConstants,
) -> std::result::Result<PhaseEnergy, LinkError> {
    if option.is_bypass() {
        return Ok(PhaseEnergy {
            pre: constants.e_pre,
            inf: constants.e_inf,
            ..Default::default()
        });
    }
    let toa = time_on_air(option.payload_bytes, params, link)?;
    Ok(PhaseEnergy {
        pre: constants.e_pre,
        tx: tx_energy(params, toa, link),
        sleep: constants.e_sleep,
        rx: constants.e_rx,
        inf: constants.e_inf,
    })
}

/// Total round energy; `f64::INFINITY` when the payload does not fit the SF.
pub fn round_energy(
    option: &ResolutionOption,
    params: LoRaParams,
    link: &LinkConfig,
    constants: &EnergyConstants,
) -> f64 {
    round_breakdown(option, params, link, constants)
        .map(|b| b.total())
        .unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleProblem {
    pub options: Vec<ResolutionOption>,
    pub params: LoRaParams,
    pub link: LinkConfig,
    pub constants: EnergyConstants,
    pub budget_j: f64,
}

impl ScheduleProblem {
    pub fn validate(&self) -> Result<()> {
        if !self.options.iter().any(ResolutionOption::is_bypass) {
            return Err(ScheduleError::Invalid("options must include R_a = 0".into()));
        }
        if let Some(o) = self.options.iter().find(|o| !(0.0..=1.0).contains(&o.est_accuracy)) {
            return Err(ScheduleError::Invalid(format!(
                "accuracy {} for R_a = {} outside [0, 1]",
                o.est_accuracy, o.r_a
            )));
        }
        if self.budget_j.is_nan() || self.budget_j < 0.0 {
            return Err(ScheduleError::Invalid(format!("budget {} J", self.budget_j)));
        }
        self.constants.validate()?;
        let mut sorted = self.options.clone();
        sorted.sort_by_key(|o| o.r_a);
        if sorted.windows(2).any(|w| w[1].est_accuracy < w[0].est_accuracy) {
            log::warn!("estimated accuracy is not nondecreasing in R_a");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleDecision {
    pub chosen_r_a: usize,
    pub payload_bytes: usize,
    pub est_accuracy: f32,
    pub round_energy_j: f64,
    /// Budget feasibility per option, in problem order.
    pub feasible: Vec<bool>,
}

// Preference: higher accuracy, then smaller R_a, then smaller payload.
fn better(a: &ResolutionOption, b: &ResolutionOption) -> bool {
    match a.est_accuracy.partial_cmp(&b.est_accuracy) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) => false,
        _ => (a.r_a, a.payload_bytes) < (b.r_a, b.payload_bytes),
    }
}

pub fn choose_resolution(problem: &ScheduleProblem) -> Result<ScheduleDecision> {
    problem.validate()?;
    let energies: Vec<f64> = problem
        .options
        .iter()
        .map(|o| round_energy(o, problem.params, &problem.link, &problem.constants))
        .collect();
    let feasible: Vec<bool> = energies.iter().map(|&e| e <= problem.budget_j).collect();
    let bypass_cost = problem.constants.e_pre + problem.constants.e_inf;
    if bypass_cost > problem.budget_j {
        return Err(ScheduleError::BypassInfeasible {
            needed_j: bypass_cost,
            budget_j: problem.budget_j,
        });
    }
    let mut best: Option<usize> = None;
    for (i, o) in problem.options.iter().enumerate() {
        if feasible[i] && best.is_none_or(|b| better(o, &problem.options[b])) {
            best = Some(i);
        }
    }
    let i = best.expect("bypass is feasible");
    let o = problem.options[i];
    Ok(ScheduleDecision {
        chosen_r_a: o.r_a,
        payload_bytes: o.payload_bytes,
        est_accuracy: o.est_accuracy,
        round_energy_j: energies[i],
        feasible,
    })
}

impl From<crate::link::LinkError> for ScheduleError {
    fn from(e: crate::link::LinkError) -> Self {
        ScheduleError::Invalid(e.to_string())
    }
}
