//! One audio event end to end: restore, schedule, uplink, downlink,
//! inference, checkpoint.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::assist::init_vit_weights;
use crate::edge::{init_edge_weights, multi_res_forward, single_res_forward};
use crate::link::{
    frame_decode, frame_encode, power_cycle_advance, LoRaParams, MsgType, Phase, PowerCycleState, PowerEvent,
};
use crate::scheduler::{choose_resolution, round_breakdown, PhaseEnergy, ResolutionOption, ScheduleProblem};
use crate::tensor::{WeightInit, WeightStore};
use crate::wavelet::{low_resolution, quantize, refine_bands, time_avg_pool, wpt_decompose, AudioClip};

use super::config::{AdrMode, ScenarioConfig};
use super::net::{AssistServer, DownlinkMessage, InProcess, Transport, UplinkMeta};
use super::report::SimulationReport;
use super::trace::ChannelTraceRow;
use super::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventPath {
    Assisted,
    BypassScheduled,
    BypassLoss,
    FailedPower,
}

/// One row of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMetrics {
    pub event_id: usize,
    pub t_s: f64,
    pub sf: u8,
    pub ptx_dbm: i8,
    pub chosen_r_a: usize,
    pub payload_bytes: usize,
    pub path: EventPath,
    pub e_pre_j: f64,
    pub e_tx_j: f64,
    pub e_sleep_j: f64,
    pub e_rx_j: f64,
    pub e_inf_j: f64,
    pub energy_total_j: f64,
    pub end_to_end_latency_s: f64,
    pub predicted_class: Option<usize>,
    pub mask: Option<String>,
    pub integrity_failure: bool,
    pub retransmissions: u32,
    pub next_sf: u8,
    pub next_ptx_dbm: i8,
}

impl EventMetrics {
    pub fn phase_energy(&self) -> PhaseEnergy {
        PhaseEnergy {
            pre: self.e_pre_j,
            tx: self.e_tx_j,
            sleep: self.e_sleep_j,
            rx: self.e_rx_j,
            inf: self.e_inf_j,
        }
    }
}

/// Seeded transformer and edge weights for a scenario, in one store.
pub fn init_model_weights(scenario: &ScenarioConfig, seed: u64) -> Result<WeightStore> {
    let mut init = WeightInit::new(seed);
    let mut store = init_vit_weights(&scenario.vit, &scenario.assist_resolutions(), &mut init)?;
    store.extend(init_edge_weights(&scenario.edge, &mut init)?);
    Ok(store)
}

/// Per-device simulation state driving one transport.
pub struct Simulator<'a, T: Transport> {
    scenario: &'a ScenarioConfig,
    weights: &'a WeightStore,
    transport: T,
    power: PowerCycleState,
}

impl<'a> Simulator<'a, InProcess> {
    /// Simulator with its own in-process server.
    pub fn in_process(scenario: &'a ScenarioConfig, weights: &'a WeightStore) -> Result<Self> {
        let server = AssistServer::for_scenario(scenario, weights)?;
        Self::new(scenario, weights, InProcess { server })
    }
}

// Shim decisions for one event, from a stream keyed by seed and event id.
fn shim_rng(seed: u64, event_id: usize) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed ^ (event_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

struct Downlink {
    mask: crate::assist::SpectralAttentionMask,
    params: LoRaParams,
}

impl<'a, T: Transport> Simulator<'a, T> {
    pub fn new(scenario: &'a ScenarioConfig, weights: &'a WeightStore, transport: T) -> Result<Self> {
        scenario.validate()?;
        Ok(Self {
            scenario,
            weights,
            transport,
            power: PowerCycleState::new(scenario.initial_params),
        })
    }

    pub fn power_state(&self) -> &PowerCycleState {
        &self.power
    }

    pub fn into_transport(self) -> T {
        self.transport
    }

    fn advance(&mut self, event: PowerEvent) -> Result<()> {
        self.power = power_cycle_advance(self.power, event)?;
        Ok(())
    }

    fn finish_phase(&mut self, expect: Phase) -> Result<()> {
        debug_assert_eq!(self.power.phase, expect);
        self.advance(PowerEvent::PhaseDone)
    }

    pub fn run(&mut self, trace: &[ChannelTraceRow], clips: &[AudioClip]) -> Result<SimulationReport> {
        if !trace.is_empty() && clips.is_empty() {
            return Err(SimError::Config("trace has events but no clips were given".into()));
        }
        let events = trace
            .iter()
            .enumerate()
            .map(|(i, row)| self.run_event(i, row, &clips[i % clips.len()]))
            .collect::<Result<Vec<_>>>()?;
        Ok(SimulationReport::new(self.scenario, events))
    }

    pub fn run_event(&mut self, event_id: usize, row: &ChannelTraceRow, clip: &AudioClip) -> Result<EventMetrics> {
        let sc = self.scenario;
        if sc.adr_mode == AdrMode::Replay {
            self.power.checkpointed_params = row.params();
        }
        self.advance(PowerEvent::Wake)?;
        let params = self.power.volatile_params;
        self.finish_phase(Phase::Restore)?;

        let budget = sc.budget_j();
        let (option, forced) = match sc.fixed_r_a {
            Some(r) => {
                let opt = sc.options().into_iter().find(|o| o.r_a == r).expect("validated");
                (opt, true)
            }
            None => {
                let problem = ScheduleProblem {
                    options: sc.options(),
                    params,
                    link: sc.link.clone(),
                    constants: sc.constants,
                    budget_j: budget,
                };
                let d = choose_resolution(&problem)?;
                (
                    ResolutionOption {
                        r_a: d.chosen_r_a,
                        payload_bytes: d.payload_bytes,
                        est_accuracy: d.est_accuracy,
                    },
                    false,
                )
            }
        };
        // a forced option that cannot be framed at this SF degrades to bypass
        let (option, energy) = match round_breakdown(&option, params, &sc.link, &sc.constants) {
            Ok(e) => (option, e),
            Err(_) if forced => {
                let bypass = ResolutionOption::new(0, 0.0);
                let e = round_breakdown(&bypass, params, &sc.link, &sc.constants)?;
                (bypass, e)
            }
            Err(e) => return Err(e.into()),
        };

        let mut m = EventMetrics {
            event_id,
            t_s: row.t_s,
            sf: params.sf(),
            ptx_dbm: params.ptx_dbm(),
            chosen_r_a: option.r_a,
            payload_bytes: option.payload_bytes,
            path: EventPath::BypassScheduled,
            e_pre_j: energy.pre,
            e_tx_j: energy.tx,
            e_sleep_j: energy.sleep,
            e_rx_j: energy.rx,
            e_inf_j: energy.inf,
            energy_total_j: energy.total(),
            end_to_end_latency_s: 0.0,
            predicted_class: None,
            mask: None,
            integrity_failure: false,
            retransmissions: 0,
            next_sf: 0,
            next_ptx_dbm: 0,
        };
        let toa = if option.is_bypass() {
            0.0
        } else {
            crate::link::time_on_air(option.payload_bytes, params, &sc.link)?
        };
        let lat = &sc.latency;
        let phase_time = [
            (Phase::Preprocess, lat.t_pre),
            (Phase::Tx, if option.is_bypass() { 0.0 } else { toa }),
            (Phase::Sleep, if option.is_bypass() { 0.0 } else { lat.t_server }),
            (Phase::Rx, if option.is_bypass() { 0.0 } else { sc.link.rx_window_s }),
            (Phase::Inference, lat.t_inf),
        ];

        if forced && energy.total() > budget {
            return self.brown_out(m, &energy, budget, &phase_time);
        }

        // Preprocess
        let low = low_resolution(clip, sc.edge.r_l, sc.edge.t_l, sc.wavelet)?;
        let uplink = if option.is_bypass() {
            None
        } else {
            let depth = option.r_a.trailing_zeros();
            let sa = time_avg_pool(&wpt_decompose(clip, depth, sc.wavelet)?)?;
            let cells = quantize(&sa);
            debug_assert_eq!(cells.payload_bytes(), option.payload_bytes);
            Some(frame_encode(MsgType::UplinkSpec, event_id as u16, &cells.to_bytes())?)
        };
        self.finish_phase(Phase::Preprocess)?;

        // Tx, Sleep, Rx
        let mut downlink = None;
        if let Some(frame) = uplink {
            let lost = sc.shim.drop_all || (sc.shim.trace_loss && row.packet_lost);
            let reply = if lost {
                None
            } else {
                let meta = UplinkMeta {
                    snr_db: row.snr_db,
                    params,
                };
                self.transport.exchange(&meta, &frame)?
            };
            self.finish_phase(Phase::Tx)?;
            self.finish_phase(Phase::Sleep)?;
            if let Some(mut bytes) = reply {
                let mut rng = shim_rng(sc.seed, event_id);
                if rng.random::<f64>() < sc.shim.corrupt_rate && !bytes.is_empty() {
                    let bit = rng.random_range(0..bytes.len() * 8);
                    bytes[bit / 8] ^= 1 << (bit % 8);
                }
                match self.parse_downlink(&bytes, event_id as u16) {
                    Ok(d) => {
                        self.power.apply_downlink(d.params)?;
                        downlink = Some(d);
                    }
                    Err(e) => {
                        log::info!("event {event_id}: downlink rejected ({e}); local inference");
                        m.integrity_failure = true;
                    }
                }
            }
            m.path = if downlink.is_some() {
                EventPath::Assisted
            } else {
                EventPath::BypassLoss
            };
        } else {
            self.finish_phase(Phase::Tx)?;
            self.finish_phase(Phase::Sleep)?;
        }
        self.finish_phase(Phase::Rx)?;

        // Inference
        let scores = match &downlink {
            Some(d) => {
                let e = &sc.edge;
                let input = refine_bands(clip, &d.mask, e.r_l, e.r_h, e.t_l, e.t_h, sc.wavelet)?;
                debug_assert_eq!(input.low, low);
                m.mask = Some(d.mask.to_string());
                multi_res_forward(&input, self.weights, e)?
            }
            None => single_res_forward(&low, self.weights, &sc.edge)?,
        };
        m.predicted_class = Some(scores.predicted());
        self.finish_phase(Phase::Inference)?;
        self.finish_phase(Phase::Checkpoint)?;

        let busy: f64 = phase_time.iter().map(|(_, t)| t).sum();
        m.end_to_end_latency_s = busy + m.energy_total_j / sc.harvest_power_w;
        m.next_sf = self.power.checkpointed_params.sf();
        m.next_ptx_dbm = self.power.checkpointed_params.ptx_dbm();
        Ok(m)
    }

    fn parse_downlink(&self, bytes: &[u8], seq: u16) -> Result<Downlink> {
        let f = frame_decode(bytes)?;
        if f.msg_type != MsgType::DownlinkMask || f.seq != seq {
            return Err(SimError::Io(format!("unexpected {:?} seq {}", f.msg_type, f.seq)));
        }
        let msg = DownlinkMessage::from_bytes(&f.payload, self.scenario.edge.patches)?;
        if msg.mask.k() != self.scenario.edge.k {
            return Err(SimError::Io(format!("mask selects {} rows", msg.mask.k())));
        }
        Ok(Downlink {
            mask: msg.mask,
            params: msg.params,
        })
    }

    // Charges phases in order until the capacitor is empty, then fails.
    fn brown_out(
        &mut self,
        mut m: EventMetrics,
        energy: &PhaseEnergy,
        budget: f64,
        phase_time: &[(Phase, f64)],
    ) -> Result<EventMetrics> {
        let demands = [energy.pre, energy.tx, energy.sleep, energy.rx, energy.inf];
        let mut charged = [0.0; 5];
        let mut left = budget;
        let mut busy = 0.0;
        for (i, &need) in demands.iter().enumerate() {
            if need > left {
                charged[i] = left;
                busy += phase_time[i].1 * if need > 0.0 { left / need } else { 0.0 };
                break;
            }
            charged[i] = need;
            left -= need;
            busy += phase_time[i].1;
            self.finish_phase(phase_time[i].0)?;
        }
        log::info!("event {}: brown-out during {:?}", m.event_id, self.power.phase);
        self.advance(PowerEvent::PowerFail)?;
        m.path = EventPath::FailedPower;
        [m.e_pre_j, m.e_tx_j, m.e_sleep_j, m.e_rx_j, m.e_inf_j] = charged;
        m.energy_total_j = m.phase_energy().total();
        m.end_to_end_latency_s = busy + m.energy_total_j / self.scenario.harvest_power_w;
        m.next_sf = self.power.checkpointed_params.sf();
        m.next_ptx_dbm = self.power.checkpointed_params.ptx_dbm();
        Ok(m)
    }
}

/// A single event on a fresh device and in-process server.
pub fn run_event(
    scenario: &ScenarioConfig,
    row: &ChannelTraceRow,
    clip: &AudioClip,
    weights: &WeightStore,
) -> Result<EventMetrics> {
    Simulator::in_process(scenario, weights)?.run_event(0, row, clip)
}

/// Replays a trace in-process; event `i` uses clip `i mod clips.len()`.
pub fn run_simulation(
    scenario: &ScenarioConfig,
    trace: &[ChannelTraceRow],
    clips: &[AudioClip],
    weights: &WeightStore,
) -> Result<SimulationReport> {
    Simulator::in_process(scenario, weights)?.run(trace, clips)
}
