use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{LinkError, LoRaParams, Result, PTX_MAX_DBM, PTX_MIN_DBM, SF_COUNT, SF_MIN};

/// Transmit power change per ADR step.
pub const ADR_STEP_DB: i32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdrConfig {
    pub window: usize,
    pub device_margin_db: f64,
    /// Demodulation floor per SF, SF7 first.
    pub required_snr_db: [f64; SF_COUNT],
}

impl Default for AdrConfig {
    fn default() -> Self {
        Self {
            window: 20,
            device_margin_db: 10.0,
            required_snr_db: [-7.5, -10.0, -12.5, -15.0, -17.5, -20.0],
        }
    }
}

impl AdrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(LinkError::Config("ADR window must be positive".into()));
        }
        if self.required_snr_db.windows(2).any(|w| w[1] >= w[0]) {
            return Err(LinkError::Config(format!(
                "required SNR {:?} must strictly decrease with SF",
                self.required_snr_db
            )));
        }
        Ok(())
    }
}

/// Server-side SNR history for one device.
#[derive(Debug, Clone, PartialEq)]
pub struct AdrState {
    config: AdrConfig,
    history: VecDeque<f64>,
}

impl AdrState {
    pub fn new(config: AdrConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            history: VecDeque::with_capacity(config.window),
            config,
        })
    }

    pub fn config(&self) -> &AdrConfig {
        &self.config
    }

    /// Appends an uplink SNR, evicting the oldest sample past the window.
    pub fn record(&mut self, snr_db: f64) {
        if self.history.len() == self.config.window {
            self.history.pop_front();
        }
        self.history.push_back(snr_db);
    }

    pub fn history(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn max_snr(&self) -> Option<f64> {
        self.history.iter().copied().reduce(f64::max)
    }
}

impl Default for AdrState {
    fn default() -> Self {
        Self::new(AdrConfig::default()).expect("default ADR config is valid")
    }
}

/// Generic LoRaWAN ADR: trade surplus SNR margin for a lower SF, then lower
/// power; claw back deficits with more power.
pub fn adr_step(state: &AdrState, current: LoRaParams) -> Result<LoRaParams> {
    let max_snr = state.max_snr().ok_or(LinkError::EmptyHistory)?;
    let cfg = &state.config;
    let margin = max_snr - cfg.required_snr_db[current.sf_index()] - cfg.device_margin_db;
    let mut n_step = (margin / ADR_STEP_DB as f64).floor() as i64;
    let mut sf = current.sf() as i32;
    let mut ptx = current.ptx_dbm() as i32;
    while n_step > 0 {
        if sf > SF_MIN as i32 {
            sf -= 1;
        } else {
            ptx = (ptx - ADR_STEP_DB).max(PTX_MIN_DBM as i32);
        }
        n_step -= 1;
    }
    while n_step < 0 {
        ptx = (ptx + ADR_STEP_DB).min(PTX_MAX_DBM as i32);
        n_step += 1;
    }
    Ok(LoRaParams::clamped(sf, ptx))
}
