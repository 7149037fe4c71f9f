//! Corpus management and noisy-mixture construction.
//!
//! A [`Corpus`] holds mono speech and noise utterances at a single sample
//! rate, each assigned to a train/validation/test split at the source-signal
//! level. [`make_mixture`] renders one noisy/target pair from a
//! [`MixtureSpec`]; [`sample_spec`] draws specs uniformly from configured
//! SNR and level-offset sets.

pub mod synth;
pub mod wav;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filterbank::Waveform;
use synth::NoiseKind;

/// Corpus partition. Splitting happens at the source-signal level: a given
/// speech or noise recording belongs to exactly one split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Recipe for one synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpusConfig {
    pub n_speech: usize,
    pub n_noise: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub f0_range: (f64, f64),
    /// Noise kinds, cycled over the noise index.
    pub kinds: Vec<NoiseKind>,
    pub seed: u64,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        Self {
            n_speech: 21,
            n_noise: 8,
            duration_s: 3.0,
            sample_rate: 24_000,
            f0_range: (80.0, 120.0),
            kinds: NoiseKind::ALL.to_vec(),
            seed: 0,
        }
    }
}

/// In-memory corpus: speech and noise utterances with split assignments.
#[derive(Debug, Clone)]
pub struct Corpus {
    speech: BTreeMap<String, (Split, Waveform<f64>)>,
    noise: BTreeMap<String, (Split, Waveform<f64>)>,
}

/// Deterministic index-based split for synthetic sources: every seventh
/// signal goes to validation, every seventh (offset by one) to test.
fn index_split(i: usize) -> Split {
    match i % 7 {
        5 => Split::Validation,
        6 => Split::Test,
        _ => Split::Train,
    }
}

/// FNV-1a hash of an id, for stable file-based splits.
fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// 70/15/15 split keyed on the id alone, so membership survives file moves.
fn hash_split(id: &str) -> Split {
    match fnv1a(id) % 100 {
        0..=69 => Split::Train,
        70..=84 => Split::Validation,
        _ => Split::Test,
    }
}

impl Corpus {
    /// Builds a corpus from explicit parts; useful for custom datasets.
    pub fn from_parts(
        speech: Vec<(String, Split, Waveform<f64>)>,
        noise: Vec<(String, Split, Waveform<f64>)>,
    ) -> Self {
        Self {
            speech: speech.into_iter().map(|(id, s, w)| (id, (s, w))).collect(),
            noise: noise.into_iter().map(|(id, s, w)| (id, (s, w))).collect(),
        }
    }

    /// Renders a deterministic synthetic corpus.
    pub fn synthetic(cfg: &SynthCorpusConfig) -> Self {
        let speech = (0..cfg.n_speech)
            .map(|i| {
                let id = format!("sp-{i:03}");
                let w = synth::synth_speech(
                    cfg.seed.wrapping_add(i as u64),
                    cfg.duration_s,
                    cfg.f0_range,
                    cfg.sample_rate,
                );
                (id, index_split(i), w)
            })
            .collect();
        let noise = (0..cfg.n_noise)
            .map(|i| {
                let kind = cfg.kinds[i % cfg.kinds.len()];
                let id = format!("ns-{i:03}-{kind}");
                let w = synth::synth_noise(
                    cfg.seed.wrapping_add(1000 + i as u64),
                    cfg.duration_s,
                    kind,
                    cfg.sample_rate,
                );
                (id, index_split(i), w)
            })
            .collect();
        Self::from_parts(speech, noise)
    }

    /// Loads `<root>/speech/*.wav` and `<root>/noise/*.wav`, all mono at
    /// `expected_rate`, splitting 70/15/15 by a hash of each file stem.
    pub fn load_dir(root: &Path, expected_rate: u32) -> Result<Self> {
        let read_all = |sub: &str| -> Result<Vec<(String, Split, Waveform<f64>)>> {
            let dir = root.join(sub);
            let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
            let mut paths: Vec<_> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().map(|e| e == "wav").unwrap_or(false))
                .collect();
            paths.sort();
            let mut out = Vec::with_capacity(paths.len());
            for p in paths {
                let id = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| Error::wav(&p, "non-UTF-8 file name"))?
                    .to_string();
                let w = wav::read_wav(&p)?;
                if w.sample_rate != expected_rate {
                    return Err(Error::SampleRate { expected: expected_rate, got: w.sample_rate });
                }
                out.push((id.clone(), hash_split(&id), w));
            }
            if out.is_empty() {
                return Err(Error::Wav {
                    path: dir,
                    msg: "directory contains no .wav files".into(),
                });
            }
            Ok(out)
        };
        Ok(Self::from_parts(read_all("speech")?, read_all("noise")?))
    }

    pub fn speech_ids(&self, split: Split) -> Vec<&str> {
        self.speech
            .iter()
            .filter(|(_, (s, _))| *s == split)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn noise_ids(&self, split: Split) -> Vec<&str> {
        self.noise
            .iter()
            .filter(|(_, (s, _))| *s == split)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn speech(&self, id: &str) -> Result<&Waveform<f64>> {
        self.speech
            .get(id)
            .map(|(_, w)| w)
            .ok_or_else(|| Error::Config(format!("unknown speech id {id:?}")))
    }

    pub fn noise(&self, id: &str) -> Result<&Waveform<f64>> {
        self.noise
            .get(id)
            .map(|(_, w)| w)
            .ok_or_else(|| Error::Config(format!("unknown noise id {id:?}")))
    }

    /// CSV of every source signal and its split, rows `id,split`.
    pub fn split_manifest_csv(&self) -> String {
        let mut out = String::from("id,split\n");
        for (id, (split, _)) in &self.speech {
            out.push_str(&format!("speech/{id},{split}\n"));
        }
        for (id, (split, _)) in &self.noise {
            out.push_str(&format!("noise/{id},{split}\n"));
        }
        out
    }
}

/// Energy-based voice-activity mask: 20 ms frames every 10 ms; a frame is
/// active when its RMS is within 40 dB of the loudest frame.
#[derive(Debug, Clone)]
pub struct ActivityMask {
    frame: usize,
    hop: usize,
    active: Vec<bool>,
}

impl ActivityMask {
    /// Mean power of `x` over the active frames.
    pub fn mean_power(&self, x: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, &act) in self.active.iter().enumerate() {
            if act {
                let lo = i * self.hop;
                let hi = (lo + self.frame).min(x.len());
                sum += x[lo..hi].iter().map(|v| v * v).sum::<f64>();
                n += hi - lo;
            }
        }
        if n == 0 { 0.0 } else { sum / n as f64 }
    }
}

/// Detects speech-active frames and returns the mean power over them.
/// An all-zero signal has no defined activity and is an error.
pub fn speech_active_power(x: &[f64], sample_rate: u32) -> Result<(f64, ActivityMask)> {
    let frame = (sample_rate as usize / 50).max(1); // 20 ms
    let hop = (frame / 2).max(1); // 10 ms
    let n_frames = if x.len() <= frame { 1 } else { 1 + (x.len() - frame) / hop };
    let powers: Vec<f64> = (0..n_frames)
        .map(|i| {
            let lo = i * hop;
            let hi = (lo + frame).min(x.len());
            x[lo..hi].iter().map(|v| v * v).sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let peak = powers.iter().fold(0.0f64, |m, &v| m.max(v));
    if peak <= 0.0 {
        return Err(Error::SilentSpeech);
    }
    let threshold = peak * 1e-4; // 40 dB below the loudest frame (power)
    let active: Vec<bool> = powers.iter().map(|&p| p >= threshold).collect();
    let mask = ActivityMask { frame, hop, active };
    Ok((mask.mean_power(x), mask))
}

/// Complete recipe for one noisy/target pair. Given the corpus, the spec
/// fully determines the output.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub speech_id: String,
    /// 1 to 4 noise picks (repeats allowed).
    pub noise_ids: Vec<String>,
    /// Per-noise level offset in dB, same length as `noise_ids`.
    pub level_offsets_db: Vec<f64>,
    /// Speech-to-noise ratio of the noisy output, in dB.
    pub snr_db: f64,
    /// How much quieter the noise is in the target than in the noisy input.
    pub delta_snr_t_db: f64,
    /// Seed for noise cropping/looping positions.
    pub seed: u64,
}

/// One rendered mixture.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub clean: Waveform<f64>,
    /// `clean` plus the offset-scaled, SNR-scaled noise sum.
    pub noisy: Waveform<f64>,
    /// `clean` plus the same noise attenuated by `delta_snr_t_db`.
    pub target: Waveform<f64>,
}

/// Renders the mixture a spec describes.
///
/// Each noise is fitted to the speech length (random contiguous crop when
/// longer, looped from a random phase when shorter), scaled by its level
/// offset, and summed. The sum is then scaled so that the speech-to-noise
/// power ratio over speech-active frames equals `snr_db`.
pub fn make_mixture(spec: &MixtureSpec, corpus: &Corpus) -> Result<Mixture> {
    if spec.noise_ids.is_empty() || spec.noise_ids.len() > 4 {
        return Err(Error::Config(format!(
            "mixture needs 1..=4 noises, spec has {}",
            spec.noise_ids.len()
        )));
    }
    if spec.noise_ids.len() != spec.level_offsets_db.len() {
        return Err(Error::Config(format!(
            "{} noises but {} level offsets",
            spec.noise_ids.len(),
            spec.level_offsets_db.len()
        )));
    }
    let clean = corpus.speech(&spec.speech_id)?.clone();
    let len = clean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noise_sum = vec![0.0f64; len];
    for (id, &off_db) in spec.noise_ids.iter().zip(&spec.level_offsets_db) {
        let noise = corpus.noise(id)?;
        if noise.sample_rate != clean.sample_rate {
            return Err(Error::SampleRate { expected: clean.sample_rate, got: noise.sample_rate });
        }
        if noise.is_empty() {
            return Err(Error::Degenerate(format!("noise {id:?} is empty")));
        }
        let gain = 10f64.powf(off_db / 20.0);
        if noise.len() >= len {
            let start = rng.gen_range(0..=noise.len() - len);
            for (acc, &v) in noise_sum.iter_mut().zip(&noise.samples[start..start + len]) {
                *acc += gain * v;
            }
        } else {
            let start = rng.gen_range(0..noise.len());
            for (i, acc) in noise_sum.iter_mut().enumerate() {
                *acc += gain * noise.samples[(start + i) % noise.len()];
            }
        }
    }
    let (p_speech, mask) = speech_active_power(&clean.samples, clean.sample_rate)?;
    let p_noise = mask.mean_power(&noise_sum);
    if p_noise <= 0.0 {
        return Err(Error::Degenerate(
            "noise sum has no energy in the speech-active region".into(),
        ));
    }
    let k = (p_speech / (p_noise * 10f64.powf(spec.snr_db / 10.0))).sqrt();
    let att = 10f64.powf(-spec.delta_snr_t_db / 20.0);
    let mut noisy = Vec::with_capacity(len);
    let mut target = Vec::with_capacity(len);
    for (i, &c) in clean.samples.iter().enumerate() {
        let scaled = k * noise_sum[i];
        noisy.push(c + scaled);
        target.push(c + att * scaled);
    }
    let rate = clean.sample_rate;
    Ok(Mixture {
        clean,
        noisy: Waveform::new(noisy, rate),
        target: Waveform::new(target, rate),
    })
}

/// Sampling policy for [`sample_spec`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixPolicy {
    pub snr_set_db: Vec<f64>,
    pub offset_set_db: Vec<f64>,
    /// Uniform noise count in `1..=max_noises`.
    pub max_noises: usize,
    pub delta_snr_t_db: f64,
}

impl Default for MixPolicy {
    fn default() -> Self {
        Self {
            snr_set_db: vec![-100.0, -5.0, 0.0, 5.0, 10.0, 20.0],
            offset_set_db: vec![-6.0, 0.0, 6.0],
            max_noises: 4,
            delta_snr_t_db: 14.0,
        }
    }
}

/// Draws one mixture spec uniformly: speech id, noise count, per-noise id
/// and level offset, and SNR, all from the given split and policy.
pub fn sample_spec<R: Rng>(
    rng: &mut R,
    corpus: &Corpus,
    split: Split,
    policy: &MixPolicy,
) -> Result<MixtureSpec> {
    let speech_pool = corpus.speech_ids(split);
    if speech_pool.is_empty() {
        return Err(Error::EmptySplit(format!("no speech in {split}")));
    }
    let noise_pool = corpus.noise_ids(split);
    if noise_pool.is_empty() {
        return Err(Error::EmptySplit(format!("no noise in {split}")));
    }
    if policy.max_noises == 0 || policy.max_noises > 4 {
        return Err(Error::Config(format!(
            "max_noises must be 1..=4, got {}",
            policy.max_noises
        )));
    }
    if policy.snr_set_db.is_empty() || policy.offset_set_db.is_empty() {
        return Err(Error::Config("snr and offset sets must be non-empty".into()));
    }
    let speech_id = speech_pool[rng.gen_range(0..speech_pool.len())].to_string();
    let n_noises = rng.gen_range(1..=policy.max_noises);
    let mut noise_ids = Vec::with_capacity(n_noises);
    let mut level_offsets_db = Vec::with_capacity(n_noises);
    for _ in 0..n_noises {
        noise_ids.push(noise_pool[rng.gen_range(0..noise_pool.len())].to_string());
        level_offsets_db.push(policy.offset_set_db[rng.gen_range(0..policy.offset_set_db.len())]);
    }
    let snr_db = policy.snr_set_db[rng.gen_range(0..policy.snr_set_db.len())];
    Ok(MixtureSpec {
        speech_id,
        noise_ids,
        level_offsets_db,
        snr_db,
        delta_snr_t_db: policy.delta_snr_t_db,
        seed: rng.gen(),
    })
}
