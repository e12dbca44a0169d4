//! Scenario configuration, read from TOML. Every section is optional and
//! falls back to the reference scenario.

use serde::{Deserialize, Serialize};

use crate::assist::VitConfig;
use crate::edge::EdgeModelConfig;
use crate::link::{capacitor_energy, AdrConfig, CapacitorSpec, LinkConfig, LoRaParams, FRAME_OVERHEAD};
use crate::scheduler::{EnergyConstants, ResolutionOption};
use crate::wavelet::Wavelet;

use super::{Result, SimError};

/// Bytes of the quantization header (`scale`, `offset`) ahead of the cells.
pub const QUANT_HEADER_BYTES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdrMode {
    /// Parameters come from the trace row, standing in for the last downlink.
    #[default]
    Replay,
    /// Parameters come from the server's ADR recommendation of the previous
    /// completed round.
    AdrStep,
}

/// Wall-clock durations of the fixed phases, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyConstants {
    pub t_pre: f64,
    /// Server turnaround, spent asleep between uplink and receive window.
    pub t_server: f64,
    pub t_inf: f64,
}

impl Default for LatencyConstants {
    fn default() -> Self {
        Self {
            t_pre: 4.0,
            t_server: 0.02,
            t_inf: 20.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyEntry {
    pub r_a: usize,
    pub est_accuracy: f32,
}

impl From<AccuracyEntry> for ResolutionOption {
    fn from(e: AccuracyEntry) -> Self {
        ResolutionOption::new(e.r_a, e.est_accuracy)
    }
}

/// Loss and corruption injected between edge and server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShimConfig {
    /// Drop uplinks on rows marked `packet_lost`.
    pub trace_loss: bool,
    pub drop_all: bool,
    /// Probability that a delivered downlink has one bit flipped.
    pub corrupt_rate: f64,
}

impl Default for ShimConfig {
    fn default() -> Self {
        Self {
            trace_loss: true,
            drop_all: false,
            corrupt_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub capacitor: CapacitorSpec,
    pub harvest_power_w: f64,
    pub link: LinkConfig,
    pub adr: AdrConfig,
    pub adr_mode: AdrMode,
    /// Parameters in non-volatile memory before the first event.
    pub initial_params: LoRaParams,
    pub constants: EnergyConstants,
    pub latency: LatencyConstants,
    pub resolutions: Vec<AccuracyEntry>,
    /// Forces this `R_a` every event instead of scheduling. Rounds that
    /// overrun the budget brown out.
    pub fixed_r_a: Option<usize>,
    pub wavelet: Wavelet,
    pub vit: VitConfig,
    pub edge: EdgeModelConfig,
    pub shim: ShimConfig,
}

/// Solves `V_off` for a budget given `C` and `V_on`.
pub fn v_off_for_budget(capacitance_f: f64, v_on: f64, budget_j: f64) -> f64 {
    (v_on * v_on - 2.0 * budget_j / capacitance_f).sqrt()
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::scenario1()
    }
}

impl ScenarioConfig {
    /// 100 mF storage, 685 mJ per cycle.
    pub fn scenario1() -> Self {
        Self {
            name: "scenario1".into(),
            seed: 1,
            capacitor: CapacitorSpec {
                capacitance_f: 0.1,
                v_on: 3.8,
                v_off: v_off_for_budget(0.1, 3.8, 0.685),
            },
            harvest_power_w: 0.012,
            link: LinkConfig::default(),
            adr: AdrConfig::default(),
            adr_mode: AdrMode::Replay,
            initial_params: LoRaParams::default(),
            constants: EnergyConstants::default(),
            latency: LatencyConstants::default(),
            resolutions: [(0, 0.62), (8, 0.70), (16, 0.74), (32, 0.78), (64, 0.80)]
                .into_iter()
                .map(|(r_a, est_accuracy)| AccuracyEntry { r_a, est_accuracy })
                .collect(),
            fixed_r_a: None,
            wavelet: Wavelet::Db4,
            vit: VitConfig::default(),
            edge: EdgeModelConfig::default(),
            shim: ShimConfig::default(),
        }
    }

    /// 33 mF storage, 225 mJ per cycle.
    pub fn scenario2() -> Self {
        Self {
            name: "scenario2".into(),
            capacitor: CapacitorSpec {
                capacitance_f: 0.033,
                v_on: 3.8,
                v_off: v_off_for_budget(0.033, 3.8, 0.225),
            },
            harvest_power_w: 0.011,
            ..Self::scenario1()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn budget_j(&self) -> f64 {
        capacitor_energy(&self.capacitor)
    }

    pub fn options(&self) -> Vec<ResolutionOption> {
        self.resolutions.iter().map(|&e| e.into()).collect()
    }

    /// All non-zero resolutions, ascending.
    pub fn assist_resolutions(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.resolutions.iter().map(|e| e.r_a).filter(|&r| r > 0).collect();
        r.sort_unstable();
        r
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(SimError::Config(m));
        self.capacitor.validate()?;
        self.link.validate()?;
        self.adr.validate()?;
        self.constants.validate()?;
        self.vit.validate()?;
        self.edge.validate()?;
        if self.vit.patches != self.edge.patches {
            return err(format!(
                "transformer uses p = {} but the edge model expects p = {}",
                self.vit.patches, self.edge.patches
            ));
        }
        if !(self.harvest_power_w > 0.0 && self.harvest_power_w.is_finite()) {
            return err(format!("harvest power {} W", self.harvest_power_w));
        }
        if !(0.0..=1.0).contains(&self.shim.corrupt_rate) {
            return err(format!("corrupt rate {} outside [0, 1]", self.shim.corrupt_rate));
        }
        let l = &self.latency;
        if [l.t_pre, l.t_server, l.t_inf].iter().any(|t| t.is_nan() || *t < 0.0) {
            return err("latencies must be non-negative".into());
        }
        if !self.resolutions.iter().any(|e| e.r_a == 0) {
            return err("resolution table must include R_a = 0".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.resolutions {
            if !seen.insert(e.r_a) {
                return err(format!("R_a = {} listed twice", e.r_a));
            }
            if !(0.0..=1.0).contains(&e.est_accuracy) {
                return err(format!("accuracy {} for R_a = {}", e.est_accuracy, e.r_a));
            }
            if e.r_a == 0 {
                continue;
            }
            if !e.r_a.is_power_of_two() || e.r_a % self.vit.patches != 0 {
                return err(format!(
                    "R_a = {} must be a power of two divisible by p = {}",
                    e.r_a, self.vit.patches
                ));
            }
            // any SF that admits the cells must also admit the framed message
            let cells = e.r_a * e.r_a;
            let framed = cells + QUANT_HEADER_BYTES + FRAME_OVERHEAD;
            for (i, &max) in self.link.max_payload_bytes.iter().enumerate() {
                if cells <= max && framed > max {
                    return err(format!(
                        "R_a = {} fits SF{} as {cells} B but its {framed} B frame does not",
                        e.r_a,
                        i + 7
                    ));
                }
            }
        }
        if let Some(r) = self.fixed_r_a {
            if !seen.contains(&r) {
                return err(format!("fixed R_a = {r} is not in the resolution table"));
            }
        }
        let bypass = self.constants.e_pre + self.constants.e_inf;
        if bypass > self.budget_j() {
            return err(format!(
                "capacitor budget {:.4} J cannot cover local inference ({bypass:.4} J)",
                self.budget_j()
            ));
        }
        Ok(())
    }
}
