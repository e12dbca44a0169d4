use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::wavelet::{load_wav, AudioClip, CANONICAL_SAMPLE_RATE};

use super::{Result, SimError};

/// Seeded stand-in audio: a few decaying tones over low-level noise.
pub fn synthetic_clips(count: usize, samples: usize, seed: u64) -> Result<Vec<AudioClip>> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let rate = CANONICAL_SAMPLE_RATE as f32;
    (0..count)
        .map(|_| {
            let tones: Vec<(f32, f32, f32)> = (0..rng.random_range(1..=3))
                .map(|_| {
                    (
                        rng.random_range(80.0..7000.0),
                        rng.random_range(0.1..0.5),
                        rng.random_range(0.5..6.0),
                    )
                })
                .collect();
            let noise = rng.random_range(0.0..0.05);
            let data: Vec<f32> = (0..samples)
                .map(|i| {
                    let t = i as f32 / rate;
                    let s: f32 = tones
                        .iter()
                        .map(|&(f, a, decay)| a * (-decay * t).exp() * (std::f32::consts::TAU * f * t).sin())
                        .sum();
                    (s + noise * rng.random_range(-1.0f32..1.0)).clamp(-1.0, 1.0)
                })
                .collect();
            Ok(AudioClip::padded(data, CANONICAL_SAMPLE_RATE)?)
        })
        .collect()
}

/// Every `.wav` file in `dir`, in file-name order.
pub fn load_clip_dir(dir: &Path) -> Result<Vec<AudioClip>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(SimError::Config(format!("no .wav files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p)?;
            load_wav(&bytes).map_err(|e| SimError::Config(format!("{}: {e}", p.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::encode_wav;

    #[test]
    fn synthetic_is_deterministic_and_bounded() {
        let a = synthetic_clips(3, 5000, 7).unwrap();
        assert_eq!(a, synthetic_clips(3, 5000, 7).unwrap());
        assert_ne!(a, synthetic_clips(3, 5000, 8).unwrap());
        assert!(a.iter().all(|c| c.len() == 5120));
        assert!(a.iter().flat_map(|c| c.samples()).all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn directory_loading_is_sorted() {
        let dir = std::env::temp_dir().join(format!("cassist-clips-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("b.wav"), encode_wav(&[0.5; 10], 16_000)).unwrap();
        std::fs::write(dir.join("a.wav"), encode_wav(&[0.25; 10], 16_000)).unwrap();
        std::fs::write(dir.join("notes.txt"), "x").unwrap();
        let clips = load_clip_dir(&dir).unwrap();
        std::fs::remove_dir_all(&dir).unwrap();
        assert_eq!(clips.len(), 2);
        assert_eq!(clips[0].samples()[0], 0.25);
    }
}
