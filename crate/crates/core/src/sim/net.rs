//! The assistance server and the transports that reach it.
//!
//! A UDP datagram carries one frame behind a 10-byte envelope standing in for
//! gateway receive metadata: `snr_db:f64le sf:u8 ptx_dbm:i8`. Replies are bare
//! frames.

use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use crate::assist::{generate_mask, SpectralAttentionMask, VitConfig};
use crate::link::{adr_step, frame_decode, frame_encode, AdrConfig, AdrState, LoRaParams, MsgType};
use crate::tensor::WeightStore;
use crate::wavelet::{dequantize, QuantizedSpectrogram};

use super::config::{AdrMode, ScenarioConfig};
use super::{Result, SimError};

const ENVELOPE_LEN: usize = 10;
const MAX_DATAGRAM: usize = 2048;

/// What the gateway knows about an uplink besides its bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UplinkMeta {
    pub snr_db: f64,
    pub params: LoRaParams,
}

pub fn encode_envelope(meta: &UplinkMeta, frame: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(ENVELOPE_LEN + frame.len());
    out.extend_from_slice(&meta.snr_db.to_le_bytes());
    out.push(meta.params.sf());
    out.push(meta.params.ptx_dbm() as u8);
    out.extend_from_slice(frame);
    out
}

pub fn decode_envelope(bytes: &[u8]) -> Result<(UplinkMeta, &[u8])> {
    if bytes.len() < ENVELOPE_LEN {
        return Err(SimError::Io(format!("datagram of {} B has no envelope", bytes.len())));
    }
    let snr_db = f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let params = LoRaParams::new(bytes[8], bytes[9] as i8)?;
    Ok((UplinkMeta { snr_db, params }, &bytes[ENVELOPE_LEN..]))
}

/// Downlink payload: mask wire bytes followed by the recommended SF and power.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DownlinkMessage {
    pub mask: SpectralAttentionMask,
    pub params: LoRaParams,
}

impl DownlinkMessage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.mask.to_wire();
        out.push(self.params.sf());
        out.push(self.params.ptx_dbm() as u8);
        out
    }

    pub fn from_bytes(bytes: &[u8], p: usize) -> Result<Self> {
        let mask_len = p.div_ceil(8);
        if bytes.len() != mask_len + 2 {
            return Err(SimError::Io(format!(
                "downlink payload of {} B, expected {}",
                bytes.len(),
                mask_len + 2
            )));
        }
        Ok(Self {
            mask: SpectralAttentionMask::from_wire(&bytes[..mask_len], p)?,
            params: LoRaParams::new(bytes[mask_len], bytes[mask_len + 1] as i8)?,
        })
    }
}

/// Turns uplink frames into downlink frames. Holds one device's ADR history.
#[derive(Debug, Clone)]
pub struct AssistServer {
    weights: WeightStore,
    vit: VitConfig,
    k: usize,
    adr_mode: AdrMode,
    adr: AdrState,
}

impl AssistServer {
    pub fn new(weights: WeightStore, vit: VitConfig, k: usize, adr_mode: AdrMode, adr: AdrConfig) -> Result<Self> {
        vit.validate()?;
        Ok(Self {
            weights,
            vit,
            k,
            adr_mode,
            adr: AdrState::new(adr)?,
        })
    }

    /// Server for a scenario, keeping only the transformer weights.
    pub fn for_scenario(scenario: &ScenarioConfig, weights: &WeightStore) -> Result<Self> {
        let mut vit = WeightStore::new();
        for (name, t) in weights.iter().filter(|(n, _)| n.starts_with("vit.")) {
            vit.insert(name, t.clone())?;
        }
        Self::new(
            vit,
            scenario.vit.clone(),
            scenario.edge.k,
            scenario.adr_mode,
            scenario.adr.clone(),
        )
    }

    /// Replies to one uplink, or `None` when the frame is unusable; the
    /// device then sees an empty receive window.
    pub fn handle(&mut self, meta: &UplinkMeta, frame: &[u8]) -> Option<Vec<u8>> {
        match self.try_handle(meta, frame) {
            Ok(reply) => Some(reply),
            Err(e) => {
                log::warn!("dropping uplink: {e}");
                None
            }
        }
    }

    fn try_handle(&mut self, meta: &UplinkMeta, frame: &[u8]) -> Result<Vec<u8>> {
        let frame = frame_decode(frame)?;
        if frame.msg_type != MsgType::UplinkSpec {
            return Err(SimError::Io(format!("unexpected {:?}", frame.msg_type)));
        }
        let sa = dequantize(&QuantizedSpectrogram::from_bytes(&frame.payload)?)?;
        let mask = generate_mask(&sa, &self.weights, &self.vit, self.k)?;
        self.adr.record(meta.snr_db);
        let params = match self.adr_mode {
            AdrMode::Replay => meta.params,
            AdrMode::AdrStep => adr_step(&self.adr, meta.params)?,
        };
        log::debug!("seq {}: mask {mask}, recommend {params}", frame.seq);
        let reply = DownlinkMessage { mask, params };
        Ok(frame_encode(MsgType::DownlinkMask, frame.seq, &reply.to_bytes())?)
    }
}

/// One request-response exchange per uplink. `Ok(None)` is a receive window
/// that closed empty.
pub trait Transport {
    fn exchange(&mut self, meta: &UplinkMeta, frame: &[u8]) -> Result<Option<Vec<u8>>>;
}

/// Calls the server directly.
pub struct InProcess {
    pub server: AssistServer,
}

impl Transport for InProcess {
    fn exchange(&mut self, meta: &UplinkMeta, frame: &[u8]) -> Result<Option<Vec<u8>>> {
        Ok(self.server.handle(meta, frame))
    }
}

pub struct UdpTransport {
    socket: UdpSocket,
    server: SocketAddr,
    timeout: Duration,
}

impl UdpTransport {
    /// Binds an ephemeral local port; `timeout` is the receive window.
    pub fn connect(server: SocketAddr, timeout: Duration) -> Result<Self> {
        let local: SocketAddr = if server.is_ipv4() {
            "0.0.0.0:0".parse().expect("literal")
        } else {
            "[::]:0".parse().expect("literal")
        };
        let socket = UdpSocket::bind(local)?;
        Ok(Self {
            socket,
            server,
            timeout,
        })
    }
}

fn frame_seq(bytes: &[u8]) -> Option<u16> {
    (bytes.len() >= 5).then(|| u16::from_le_bytes([bytes[3], bytes[4]]))
}

impl Transport for UdpTransport {
    fn exchange(&mut self, meta: &UplinkMeta, frame: &[u8]) -> Result<Option<Vec<u8>>> {
        self.socket.send_to(&encode_envelope(meta, frame), self.server)?;
        let want = frame_seq(frame);
        let deadline = Instant::now() + self.timeout;
        let mut buf = [0u8; MAX_DATAGRAM];
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            self.socket.set_read_timeout(Some(left))?;
            match self.socket.recv_from(&mut buf) {
                Ok((n, from)) if from == self.server => {
                    let reply = &buf[..n];
                    // a late reply to an earlier uplink is not ours
                    if frame_seq(reply) != want && n >= 5 {
                        log::debug!("discarding stale reply for seq {:?}", frame_seq(reply));
                        continue;
                    }
                    return Ok(Some(reply.to_vec()));
                }
                Ok(_) => continue,
                Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                    return Ok(None);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// Serves requests sequentially until `stop` is set or `limit` requests
/// have been answered or dropped. Returns the number handled.
pub fn serve(socket: &UdpSocket, server: &mut AssistServer, stop: &AtomicBool, limit: Option<usize>) -> Result<usize> {
    socket.set_read_timeout(Some(Duration::from_millis(50)))?;
    let mut buf = [0u8; MAX_DATAGRAM];
    let mut handled = 0;
    while !stop.load(Ordering::Relaxed) && limit.is_none_or(|l| handled < l) {
        let (n, from) = match socket.recv_from(&mut buf) {
            Ok(v) => v,
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => continue,
            Err(e) => return Err(e.into()),
        };
        handled += 1;
        let (meta, frame) = match decode_envelope(&buf[..n]) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("bad datagram from {from}: {e}");
                continue;
            }
        };
        if let Some(reply) = server.handle(&meta, frame) {
            socket.send_to(&reply, from)?;
        }
    }
    Ok(handled)
}
