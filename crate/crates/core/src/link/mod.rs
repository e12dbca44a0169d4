//! LoRa link and energy model: airtime, radio energy, the capacitor budget,
//! ADR, framed payloads and the intermittent power cycle.

mod adr;
mod frame;
mod power;

pub use adr::{adr_step, AdrConfig, AdrState, ADR_STEP_DB};
pub use frame::{crc16, frame_decode, frame_encode, Frame, MsgType, FRAME_MAGIC, FRAME_OVERHEAD, FRAME_VERSION};
pub use power::{power_cycle_advance, Phase, PowerCycleState, PowerEvent};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("{0}")]
    Range(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{payload} B exceeds the {max} B limit at SF{sf}")]
    Infeasible { payload: usize, sf: u8, max: usize },
    #[error("framing error: {0}")]
    Framing(String),
    #[error("integrity error: crc {expected:#06x} != {actual:#06x}")]
    Integrity { expected: u16, actual: u16 },
    #[error("illegal event {event:?} in phase {phase:?}")]
    StateMachine { phase: Phase, event: PowerEvent },
    #[error("ADR needs at least one SNR sample")]
    EmptyHistory,
}

pub type Result<T> = std::result::Result<T, LinkError>;

pub const SF_MIN: u8 = 7;
pub const SF_MAX: u8 = 12;
pub const PTX_MIN_DBM: i8 = 5;
pub const PTX_MAX_DBM: i8 = 17;
/// Number of spreading factors, SF7..=SF12.
pub const SF_COUNT: usize = 6;

/// Spreading factor and transmit power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct LoRaParams {
    sf: u8,
    ptx_dbm: i8,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    sf: u8,
    ptx_dbm: i8,
}

impl TryFrom<RawParams> for LoRaParams {
    type Error = LinkError;
    fn try_from(r: RawParams) -> Result<Self> {
        Self::new(r.sf, r.ptx_dbm)
    }
}

impl From<LoRaParams> for RawParams {
    fn from(p: LoRaParams) -> Self {
        Self {
            sf: p.sf,
            ptx_dbm: p.ptx_dbm,
        }
    }
}

impl LoRaParams {
    pub fn new(sf: u8, ptx_dbm: i8) -> Result<Self> {
        if !(SF_MIN..=SF_MAX).contains(&sf) {
            return Err(LinkError::Range(format!("SF{sf} outside 7..=12")));
        }
        if !(PTX_MIN_DBM..=PTX_MAX_DBM).contains(&ptx_dbm) {
            return Err(LinkError::Range(format!("{ptx_dbm} dBm outside 5..=17")));
        }
        Ok(Self { sf, ptx_dbm })
    }

    /// Clamps both fields into range; never fails.
    pub fn clamped(sf: i32, ptx_dbm: i32) -> Self {
        Self {
            sf: sf.clamp(SF_MIN as i32, SF_MAX as i32) as u8,
            ptx_dbm: ptx_dbm.clamp(PTX_MIN_DBM as i32, PTX_MAX_DBM as i32) as i8,
        }
    }

    pub fn sf(&self) -> u8 {
        self.sf
    }

    pub fn ptx_dbm(&self) -> i8 {
        self.ptx_dbm
    }

    /// Index into per-SF tables.
    pub fn sf_index(&self) -> usize {
        (self.sf - SF_MIN) as usize
    }

    /// Radiated power in watts.
    pub fn ptx_watts(&self) -> f64 {
        10f64.powf(self.ptx_dbm as f64 / 10.0) / 1000.0
    }
}

impl Default for LoRaParams {
    fn default() -> Self {
        Self {
            sf: SF_MIN,
            ptx_dbm: PTX_MAX_DBM,
        }
    }
}

impl std::fmt::Display for LoRaParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SF{}@{}dBm", self.sf, self.ptx_dbm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToaModel {
    /// `(8·S + S_p)/DR`.
    #[default]
    Linear,
    /// Symbol-exact airtime at 125 kHz, CR 4/5, explicit header, CRC on,
    /// 8-symbol preamble, low-data-rate optimisation at SF11/12.
    Semtech,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// Bit rate per SF, SF7 first.
    pub data_rate_bps: [f64; SF_COUNT],
    pub preamble_bits: f64,
    /// Largest application payload per SF, SF7 first.
    pub max_payload_bytes: [usize; SF_COUNT],
    pub rx_power_w: f64,
    pub rx_window_s: f64,
    pub pa_efficiency: f64,
    pub toa_model: ToaModel,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            data_rate_bps: [5469.0, 3125.0, 1758.0, 977.0, 537.0, 293.0],
            preamble_bits: 96.0,
            max_payload_bytes: [222, 222, 115, 51, 51, 51],
            rx_power_w: 0.03825,
            rx_window_s: 2.0,
            pa_efficiency: 1.0,
            toa_model: ToaModel::Linear,
        }
    }
}

impl LinkConfig {
    pub fn data_rate(&self, params: LoRaParams) -> f64 {
        self.data_rate_bps[params.sf_index()]
    }

    pub fn max_payload(&self, params: LoRaParams) -> usize {
        self.max_payload_bytes[params.sf_index()]
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(LinkError::Config(m));
        if self.data_rate_bps.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return err("data rates must be positive".into());
        }
        if self.data_rate_bps.windows(2).any(|w| w[1] >= w[0]) {
            return err(format!(
                "data rates {:?} must strictly decrease with SF",
                self.data_rate_bps
            ));
        }
        if !(self.preamble_bits >= 0.0 && self.preamble_bits.is_finite()) {
            return err(format!("preamble of {} bits", self.preamble_bits));
        }
        if let Some(m) = self.max_payload_bytes.iter().find(|&&m| m > u8::MAX as usize) {
            return err(format!("max payload {m} B does not fit a one-byte length"));
        }
        if !(self.rx_power_w >= 0.0 && self.rx_window_s >= 0.0) {
            return err("rx power and window must be non-negative".into());
        }
        if !(self.pa_efficiency > 0.0 && self.pa_efficiency <= 1.0) {
            return err(format!("PA efficiency {} outside (0, 1]", self.pa_efficiency));
        }
        Ok(())
    }

    /// The same table with every SF allowed `bytes`.
    pub fn with_uniform_max_payload(mut self, bytes: usize) -> Self {
        self.max_payload_bytes = [bytes; SF_COUNT];
        self
    }
}

/// Storage capacitor with turn-on and brown-out thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitorSpec {
    pub capacitance_f: f64,
    pub v_on: f64,
    pub v_off: f64,
}

impl CapacitorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacitance_f > 0.0 && self.v_off >= 0.0 && self.v_on > self.v_off) {
            return Err(LinkError::Config(format!(
                "capacitor needs C > 0 and v_on > v_off >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Usable energy per power cycle, `C/2·(V_on² − V_off²)`.
pub fn capacitor_energy(spec: &CapacitorSpec) -> f64 {
    spec.capacitance_f / 2.0 * (spec.v_on * spec.v_on - spec.v_off * spec.v_off)
}

/// Uplink airtime in seconds under the configured model.
pub fn time_on_air(payload_bytes: usize, params: LoRaParams, link: &LinkConfig) -> Result<f64> {
    let max = link.max_payload(params);
    if payload_bytes > max {
        return Err(LinkError::Infeasible {
            payload: payload_bytes,
            sf: params.sf,
            max,
        });
    }
    Ok(match link.toa_model {
        ToaModel::Linear => (8.0 * payload_bytes as f64 + link.preamble_bits) / link.data_rate(params),
        ToaModel::Semtech => semtech_time_on_air(payload_bytes, params.sf),
    })
}

/// Symbol-level airtime for a 125 kHz channel; no payload limit applied.
pub fn semtech_time_on_air(payload_bytes: usize, sf: u8) -> f64 {
    const BW_HZ: f64 = 125_000.0;
    const PREAMBLE_SYMBOLS: f64 = 8.0;
    const CODING_RATE: i64 = 1;
    let sf_i = sf as i64;
    let t_sym = (1u64 << sf) as f64 / BW_HZ;
    let ldro = if sf >= 11 { 1 } else { 0 };
    let num = 8 * payload_bytes as i64 - 4 * sf_i + 28 + 16;
    let den = 4 * (sf_i - 2 * ldro);
    let blocks = if num > 0 { (num + den - 1) / den } else { 0 };
    let payload_symbols = 8 + blocks * (CODING_RATE + 4);
    (PREAMBLE_SYMBOLS + 4.25 + payload_symbols as f64) * t_sym
}

/// Electrical energy of one uplink of duration `toa_s`.
pub fn tx_energy(params: LoRaParams, toa_s: f64, link: &LinkConfig) -> f64 {
    params.ptx_watts() / link.pa_efficiency * toa_s
}

/// Energy of one downlink receive window.
pub fn rx_energy(link: &LinkConfig) -> f64 {
    link.rx_power_w * link.rx_window_s
}
