//! Deterministic synthetic speech and noise generators.
//!
//! These stand in for recorded corpora: the speech generator produces a
//! harmonic source with formant-like colouring, syllabic amplitude
//! modulation and pauses; the noise generators cover stationary (white,
//! pink, mains hum) and non-stationary (babble-like) interferers. Every
//! signal is a pure function of its seed.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::filterbank::Waveform;

const TAU: f64 = std::f64::consts::TAU;
/// Highest harmonic frequency the speech generator emits.
const SPEECH_TOP_HZ: f64 = 8_000.0;
/// Amplitude envelopes are refreshed every this many samples and linearly
/// interpolated in between; they vary far slower than one block.
const ENV_BLOCK: usize = 48;

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn derive_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt)
}

fn peak_normalize(samples: &mut [f64], peak: f64) {
    let max = samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max > 0.0 {
        let g = peak / max;
        for v in samples.iter_mut() {
            *v *= g;
        }
    }
}

/// Formant-like spectral envelope: three resonance bumps over a gentle
/// low-pass tilt, floored so every harmonic keeps some energy.
struct SpectralEnvelope {
    formants: [(f64, f64, f64); 3], // (centre Hz, width Hz, gain)
}

impl SpectralEnvelope {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let f1 = rng.gen_range(300.0..900.0);
        let f2 = rng.gen_range(900.0..2_200.0);
        let f3 = rng.gen_range(2_200.0..3_500.0);
        Self {
            formants: [
                (f1, rng.gen_range(60.0..120.0), 1.0),
                (f2, rng.gen_range(80.0..160.0), 0.6),
                (f3, rng.gen_range(120.0..240.0), 0.35),
            ],
        }
    }

    fn at(&self, f: f64) -> f64 {
        let tilt = 1.0 / (1.0 + f / 700.0);
        let bumps: f64 = self
            .formants
            .iter()
            .map(|&(fc, bw, g)| {
                let d = (f - fc) / bw;
                g * (-0.5 * d * d).exp()
            })
            .sum();
        tilt * (0.05 + bumps)
    }
}

/// Speech/pause gating: alternating voiced segments and silences with
/// 20 ms cosine ramps. Pauses are exactly zero so energy-based activity
/// detection sees them as inactive.
fn pause_gate(rng: &mut ChaCha8Rng, n: usize, rate: f64) -> Vec<f64> {
    let ramp = (0.02 * rate) as usize;
    let mut gate = vec![0.0; n];
    let mut pos = 0usize;
    let mut speech = true; // always start voiced so the signal is never all-zero
    while pos < n {
        let dur_s = if speech { rng.gen_range(0.4..1.2) } else { rng.gen_range(0.1..0.3) };
        let len = ((dur_s * rate) as usize).min(n - pos);
        if speech {
            for i in 0..len {
                let up = ((i + 1) as f64 / ramp as f64).min(1.0);
                let down = ((len - i) as f64 / ramp as f64).min(1.0);
                let r = up.min(down);
                gate[pos + i] = 0.5 - 0.5 * (std::f64::consts::PI * r).cos();
            }
        }
        pos += len;
        speech = !speech;
    }
    gate
}

/// Synthesizes a speech-like utterance: an f0 glide inside `f0_range`,
/// harmonics up to 8 kHz shaped by a formant envelope, syllabic amplitude
/// modulation and explicit pauses. Deterministic per seed; peak-normalized
/// to 0.5. When the upper f0 stays at or below 125 Hz, every 250 Hz-wide
/// frequency band holds at least two harmonics.
pub fn synth_speech(seed: u64, duration_s: f64, f0_range: (f64, f64), sample_rate: u32) -> Waveform<f64> {
    let rate = sample_rate as f64;
    let n = (duration_s * rate).round().max(1.0) as usize;
    let mut rng = rng_for(seed);

    let (lo, hi) = (f0_range.0.min(f0_range.1), f0_range.0.max(f0_range.1));
    let f0_start = rng.gen_range(lo..=hi);
    let f0_end = rng.gen_range(lo..=hi);
    let env = SpectralEnvelope::draw(&mut rng);
    let n_harm = (SPEECH_TOP_HZ / lo).floor() as usize;
    let phase0: Vec<f64> = (0..n_harm).map(|_| rng.gen_range(0.0..TAU)).collect();
    let f_syl = rng.gen_range(2.5..5.0);
    let syl_phase = rng.gen_range(0.0..TAU);
    let vib_phase = rng.gen_range(0.0..TAU);
    let drift_phase = rng.gen_range(0.0..TAU);
    let gate = pause_gate(&mut rng, n, rate);

    let mut samples = vec![0.0f64; n];
    let mut base_phase = 0.0f64;
    // Per-harmonic amplitudes at the current and next envelope block edge.
    let mut amp_a = vec![0.0f64; n_harm];
    let mut amp_b = vec![0.0f64; n_harm];
    let harm_amps = |t: f64, out: &mut [f64]| {
        let f0 = f0_start + (f0_end - f0_start) * t;
        for (h, a) in out.iter_mut().enumerate() {
            let f = (h + 1) as f64 * f0;
            // Cosine-taper harmonics out between 7.8 and 8 kHz.
            let cut = ((SPEECH_TOP_HZ - f) / 200.0).clamp(0.0, 1.0);
            let taper = 0.5 - 0.5 * (std::f64::consts::PI * cut).cos();
            *a = env.at(f) * taper;
        }
    };
    harm_amps(0.0, &mut amp_b);
    for i in 0..n {
        let t = i as f64 / rate;
        let frac = t / duration_s;
        if i % ENV_BLOCK == 0 {
            std::mem::swap(&mut amp_a, &mut amp_b);
            let t_next = ((i + ENV_BLOCK) as f64 / rate / duration_s).min(1.0);
            harm_amps(t_next, &mut amp_b);
        }
        let mix = (i % ENV_BLOCK) as f64 / ENV_BLOCK as f64;
        let vibrato = 1.0 + 0.002 * (TAU * 5.0 * t + vib_phase).sin();
        let f0 = (f0_start + (f0_end - f0_start) * frac) * vibrato;
        base_phase += TAU * f0 / rate;
        let syllable = 0.15 + 0.85 * (TAU * f_syl * t + syl_phase).sin().max(0.0).powf(1.5);
        let drift = 1.0 + 0.2 * (TAU * 0.3 * t + drift_phase).sin();
        let mut v = 0.0;
        for h in 0..n_harm {
            let a = amp_a[h] + (amp_b[h] - amp_a[h]) * mix;
            if a > 0.0 {
                v += a * ((h + 1) as f64 * base_phase + phase0[h]).sin();
            }
        }
        samples[i] = v * syllable * drift * gate[i];
    }
    peak_normalize(&mut samples, 0.5);
    Waveform::new(samples, sample_rate)
}

/// Noise family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    /// Spectrally flat.
    White,
    /// Power falling 3 dB per octave.
    Pink,
    /// Sum of eight detuned speech-like streams; non-stationary.
    Babble,
    /// 50 Hz mains fundamental plus harmonics with slow amplitude wander.
    Hum,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [NoiseKind::White, NoiseKind::Pink, NoiseKind::Babble, NoiseKind::Hum];

    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Babble => "babble",
            NoiseKind::Hum => "hum",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "white" => Ok(NoiseKind::White),
            "pink" => Ok(NoiseKind::Pink),
            "babble" => Ok(NoiseKind::Babble),
            "hum" => Ok(NoiseKind::Hum),
            other => Err(Error::Config(format!(
                "unknown noise kind {other:?}; expected white, pink, babble or hum"
            ))),
        }
    }
}

fn white(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn pink(rng: &mut ChaCha8Rng, n: usize, rate: f64) -> Vec<f64> {
    let mut spec: Vec<Complex<f64>> =
        white(rng, n).into_iter().map(|v| Complex::new(v, 0.0)).collect();
    let mut planner = rustfft::FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    fwd.process(&mut spec);
    spec[0] = Complex::new(0.0, 0.0);
    // Amplitude ∝ 1/sqrt(f) above a 20 Hz corner, applied symmetrically so
    // the inverse transform stays real.
    for k in 1..=n / 2 {
        let f = k as f64 * rate / n as f64;
        let g = 1.0 / f.max(20.0).sqrt();
        spec[k] *= g;
        if k != n - k {
            spec[n - k] *= g;
        }
    }
    inv.process(&mut spec);
    spec.iter().map(|c| c.re / n as f64).collect()
}

fn hum(rng: &mut ChaCha8Rng, n: usize, rate: f64) -> Vec<f64> {
    let f_mod = rng.gen_range(0.2..1.0);
    let mod_phase = rng.gen_range(0.0..TAU);
    let phases: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..TAU)).collect();
    let floor: Vec<f64> = white(rng, n);
    (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let am = 0.6 + 0.4 * (TAU * f_mod * t + mod_phase).sin();
            let tone: f64 = phases
                .iter()
                .enumerate()
                .map(|(h, &p)| (TAU * 50.0 * (h + 1) as f64 * t + p).sin() / (h + 1) as f64)
                .sum();
            am * tone + 1e-3 * floor[i]
        })
        .collect()
}

fn babble(seed: u64, duration_s: f64, sample_rate: u32, n: usize) -> Vec<f64> {
    let mut sum = vec![0.0f64; n];
    for i in 0..8u64 {
        let lo = 75.0 + 12.0 * i as f64;
        let stream = synth_speech(derive_seed(seed, 1 + i), duration_s, (lo, lo + 30.0), sample_rate);
        for (acc, &v) in sum.iter_mut().zip(&stream.samples) {
            *acc += v;
        }
    }
    sum
}

/// Synthesizes `duration_s` seconds of the requested noise kind,
/// deterministic per seed, peak-normalized to 0.5.
pub fn synth_noise(seed: u64, duration_s: f64, kind: NoiseKind, sample_rate: u32) -> Waveform<f64> {
    let rate = sample_rate as f64;
    let n = (duration_s * rate).round().max(1.0) as usize;
    let mut rng = rng_for(derive_seed(seed, kind as u64));
    let mut samples = match kind {
        NoiseKind::White => white(&mut rng, n),
        NoiseKind::Pink => pink(&mut rng, n, rate),
        NoiseKind::Hum => hum(&mut rng, n, rate),
        NoiseKind::Babble => babble(seed, duration_s, sample_rate, n),
    };
    peak_normalize(&mut samples, 0.5);
    Waveform::new(samples, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RATE: u32 = 24_000;

    /// Welch power-spectral-density estimate: Hann windows of `seg` samples,
    /// half-overlap, averaged periodograms.
    fn welch_psd(x: &[f64], seg: usize) -> Vec<f64> {
        let hop = seg / 2;
        let window: Vec<f64> =
            (0..seg).map(|i| 0.5 - 0.5 * (TAU * i as f64 / seg as f64).cos()).collect();
        let mut planner = rustfft::FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(seg);
        let mut psd = vec![0.0f64; seg / 2 + 1];
        let mut count = 0usize;
        let mut start = 0usize;
        while start + seg <= x.len() {
            let mut buf: Vec<Complex<f64>> = x[start..start + seg]
                .iter()
                .zip(&window)
                .map(|(&v, &w)| Complex::new(v * w, 0.0))
                .collect();
            fft.process(&mut buf);
            for (k, p) in psd.iter_mut().enumerate() {
                *p += buf[k].norm_sqr();
            }
            count += 1;
            start += hop;
        }
        for p in psd.iter_mut() {
            *p /= count as f64;
        }
        psd
    }

    fn band_mean_db(psd: &[f64], seg: usize, lo_hz: f64, hi_hz: f64) -> f64 {
        let hz_per_bin = RATE as f64 / seg as f64;
        let lo = (lo_hz / hz_per_bin).round() as usize;
        let hi = ((hi_hz / hz_per_bin).round() as usize).min(psd.len() - 1);
        let mean = psd[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
        10.0 * mean.log10()
    }

    #[test]
    fn generators_are_deterministic() {
        let a = synth_speech(7, 0.5, (80.0, 120.0), RATE);
        let b = synth_speech(7, 0.5, (80.0, 120.0), RATE);
        assert_eq!(a.samples, b.samples);
        let c = synth_speech(8, 0.5, (80.0, 120.0), RATE);
        assert_ne!(a.samples, c.samples);
        for kind in NoiseKind::ALL {
            let x = synth_noise(3, 0.5, kind, RATE);
            let y = synth_noise(3, 0.5, kind, RATE);
            assert_eq!(x.samples, y.samples, "{kind}");
            assert!(x.rms() > 0.0, "{kind}");
        }
    }

    #[test]
    fn fixed_f0_gives_harmonics_at_exact_multiples() {
        let w = synth_speech(11, 2.0, (100.0, 100.0), RATE);
        let seg = 16_384;
        let psd = welch_psd(&w.samples, seg);
        for h in 1..=10 {
            let f = 100.0 * h as f64;
            let on = band_mean_db(&psd, seg, f - 10.0, f + 10.0);
            let off = band_mean_db(&psd, seg, f + 40.0, f + 60.0);
            assert!(on > off + 10.0, "harmonic {h}: on {on:.1} dB, off {off:.1} dB");
        }
    }

    #[test]
    fn low_f0_puts_two_harmonics_in_a_250_hz_band() {
        let w = synth_speech(13, 2.0, (100.0, 125.0), RATE);
        // Find the loudest 8192-sample stretch so pauses don't blank the FFT.
        let seg = 8_192;
        let(mut best, mut best_e) = (0usize, -1.0f64);
        let mut start = 0;
        while start + seg <= w.len() {
            let e: f64 = w.samples[start..start + seg].iter().map(|v| v * v).sum();
            if e > best_e {
                best_e = e;
                best = start;
            }
            start += seg / 2;
        }
        let window: Vec<f64> =
            (0..seg).map(|i| 0.5 - 0.5 * (TAU * i as f64 / seg as f64).cos()).collect();
        let mut buf: Vec<Complex<f64>> = w.samples[best..best + seg]
            .iter()
            .zip(&window)
            .map(|(&v, &wv)| Complex::new(v * wv, 0.0))
            .collect();
        rustfft::FftPlanner::<f64>::new().plan_fft_forward(seg).process(&mut buf);
        let hz_per_bin = RATE as f64 / seg as f64;
        let lo = (1_000.0 / hz_per_bin) as usize;
        let hi = (1_250.0 / hz_per_bin) as usize;
        let mags: Vec<f64> = buf[lo..=hi].iter().map(|c| c.norm()).collect();
        let peak = mags.iter().fold(0.0f64, |m, &v| m.max(v));
        let mut peaks = 0;
        for i in 1..mags.len() - 1 {
            if mags[i] > mags[i - 1] && mags[i] >= mags[i + 1] && mags[i] > 0.1 * peak {
                peaks += 1;
            }
        }
        assert!(peaks >= 2, "found {peaks} harmonic peaks in 1–1.25 kHz");
    }

    #[test]
    fn speech_contains_pauses_and_activity() {
        let w = synth_speech(5, 3.0, (80.0, 120.0), RATE);
        let frame = 480;
        let powers: Vec<f64> = w
            .samples
            .chunks_exact(frame)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>() / frame as f64)
            .collect();
        let peak = powers.iter().fold(0.0f64, |m, &v| m.max(v));
        let quiet = powers.iter().filter(|&&p| p < peak * 1e-6).count();
        let loud = powers.iter().filter(|&&p| p > peak * 1e-4).count();
        assert!(quiet > 0, "no pauses found");
        assert!(loud > powers.len() / 3, "mostly silence");
    }

    #[test]
    fn white_noise_is_flat() {
        let w = synth_noise(1, 4.0, NoiseKind::White, RATE);
        let seg = 4_096;
        let psd = welch_psd(&w.samples, seg);
        let bands = [(100.0, 200.0), (200.0, 400.0), (400.0, 800.0), (800.0, 1_600.0),
                     (1_600.0, 3_200.0), (3_200.0, 6_400.0), (6_400.0, 10_000.0)];
        let levels: Vec<f64> =
            bands.iter().map(|&(lo, hi)| band_mean_db(&psd, seg, lo, hi)).collect();
        let mean = levels.iter().sum::<f64>() / levels.len() as f64;
        for (level, band) in levels.iter().zip(&bands) {
            assert!((level - mean).abs() < 3.0, "band {band:?}: {level:.2} dB vs mean {mean:.2}");
        }
    }

    #[test]
    fn pink_noise_falls_three_db_per_octave() {
        let w = synth_noise(2, 4.0, NoiseKind::Pink, RATE);
        let seg = 4_096;
        let psd = welch_psd(&w.samples, seg);
        // Octave-spaced levels from 100 Hz to 6.4 kHz; least-squares slope.
        let centers = [150.0f64, 300.0, 600.0, 1_200.0, 2_400.0, 4_800.0];
        let pts: Vec<(f64, f64)> = centers
            .iter()
            .map(|&c| (c.log2(), band_mean_db(&psd, seg, c / 1.5, c * 1.5)))
            .collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((slope + 3.0).abs() < 1.0, "slope {slope:.2} dB/octave");
    }

    #[test]
    fn hum_peaks_at_mains_frequency_and_wanders() {
        let w = synth_noise(4, 4.0, NoiseKind::Hum, RATE);
        let seg = 8_192;
        let psd = welch_psd(&w.samples, seg);
        let at50 = band_mean_db(&psd, seg, 45.0, 55.0);
        let at75 = band_mean_db(&psd, seg, 70.0, 80.0);
        assert!(at50 > at75 + 20.0, "50 Hz {at50:.1} dB vs 75 Hz {at75:.1} dB");
        // Slow amplitude modulation: RMS varies across half-second chunks.
        let chunk = RATE as usize / 2;
        let rms: Vec<f64> = w
            .samples
            .chunks_exact(chunk)
            .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / chunk as f64).sqrt())
            .collect();
        let lo = rms.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = rms.iter().cloned().fold(0.0f64, f64::max);
        assert!(hi / lo > 1.2, "hum amplitude too steady: {lo:.4}..{hi:.4}");
    }

    #[test]
    fn noise_kind_round_trips_through_strings() {
        for kind in NoiseKind::ALL {
            assert_eq!(kind.as_str().parse::<NoiseKind>().unwrap(), kind);
        }
        assert!("brown".parse::<NoiseKind>().is_err());
    }
}
