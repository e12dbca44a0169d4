use super::{AudioClip, Result, WaveletError};

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(WaveletError::Format(msg.into()))
}

/// Reads a RIFF/WAVE file holding 16-bit PCM mono audio. Samples are scaled
/// by 1/32768 and the clip is zero-padded per [`AudioClip::padded`].
pub fn load_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return format_err("missing RIFF/WAVE magic");
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut samples: Option<Vec<f32>> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let Some(body) = bytes.get(body_start..body_start.saturating_add(size)) else {
            return format_err(format!(
                "chunk {:?} at offset {pos} runs past end of file",
                String::from_utf8_lossy(id)
            ));
        };
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return format_err("fmt chunk too short");
                }
                let tag = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes([body[14], body[15]]);
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => {
                let (tag, channels, _, bits) =
                    fmt.ok_or_else(|| WaveletError::Format("data chunk before fmt".into()))?;
                if tag != 1 || bits != 16 {
                    return format_err(format!("only 16-bit PCM supported (format tag {tag}, {bits} bits)"));
                }
                if channels != 1 {
                    return format_err(format!("only mono supported, got {channels} channels"));
                }
                samples = Some(
                    body.chunks_exact(2)
                        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
                        .collect(),
                );
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_start + size + (size & 1);
    }
    let (_, _, rate, _) = fmt.ok_or_else(|| WaveletError::Format("no fmt chunk".into()))?;
    let samples = samples.ok_or_else(|| WaveletError::Format("no data chunk".into()))?;
    if samples.is_empty() {
        return format_err("no samples");
    }
    AudioClip::padded(samples, rate)
}

/// Writes 16-bit PCM mono. Samples are clamped to [-1, 1).
pub fn encode_wav(samples: &[f32], sample_rate_hz: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(sample_rate_hz * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}
