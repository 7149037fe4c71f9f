//! Short-time objective intelligibility measure.
//!
//! The classic procedure: both signals are brought to 10 kHz, frames that are
//! silent in the reference are removed from both, one-third-octave band
//! envelopes are formed from 256-sample frames (zero-padded to a 512-point
//! transform), and short temporal envelope segments are compared by
//! normalized correlation after per-band level equalization and clipping.

use num_complex::Complex;
use rustfft::FftPlanner;

use super::resample::resample;
use crate::error::{Error, Result};
use crate::filterbank::Waveform;
use crate::num::{rl, Real};

/// Internal analysis rate in Hz.
const STOI_RATE: u32 = 10_000;
/// Analysis frame length in samples at 10 kHz.
const WIN_LEN: usize = 256;
/// Frame hop in samples.
const HOP: usize = 128;
/// Transform size (frames are zero-padded to this).
const NFFT: usize = 512;
/// Number of one-third-octave bands.
const NUM_BANDS: usize = 15;
/// Center frequency of the lowest band in Hz.
const MIN_CENTER_HZ: f64 = 150.0;
/// Frames per comparison segment (384 ms).
const SEG_FRAMES: usize = 30;
/// Signal-to-distortion bound in dB used for clipping.
const BETA_DB: f64 = -15.0;
/// Energy threshold below the loudest frame for silence removal, in dB.
const DYN_RANGE_DB: f64 = 40.0;

/// Symmetric Hann window of length `n` (endpoints excluded from the cosine
/// lattice, matching the reference implementation).
fn hann_symmetric(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * (i + 1) as f64 / (n + 1) as f64).cos()))
        .collect()
}

/// Removes frames whose reference energy is more than `DYN_RANGE_DB` below
/// the loudest reference frame, reconstructing both signals by windowed
/// overlap-add of the retained frames.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() < WIN_LEN {
        return Err(Error::TooShort { len: x.len(), min: WIN_LEN });
    }
    let w = hann_symmetric(WIN_LEN);
    let starts: Vec<usize> = (0..).map(|j| j * HOP).take_while(|&s| s + WIN_LEN <= x.len()).collect();
    let energies: Vec<f64> = starts
        .iter()
        .map(|&s| (0..WIN_LEN).map(|n| (x[s + n] * w[n]).powi(2)).sum::<f64>().sqrt())
        .collect();
    let max_e = energies.iter().cloned().fold(0.0f64, f64::max);
    if max_e <= 0.0 {
        return Err(Error::ZeroReference);
    }
    let threshold = max_e * 10f64.powf(-DYN_RANGE_DB / 20.0);
    let kept: Vec<usize> =
        starts.iter().zip(&energies).filter(|(_, &e)| e > threshold).map(|(&s, _)| s).collect();
    if kept.is_empty() {
        return Err(Error::Degenerate("no active frames in reference".into()));
    }
    let out_len = (kept.len() - 1) * HOP + WIN_LEN;
    let mut xs = vec![0.0f64; out_len];
    let mut ys = vec![0.0f64; out_len];
    for (c, &s) in kept.iter().enumerate() {
        let o = c * HOP;
        for n in 0..WIN_LEN {
            xs[o + n] += x[s + n] * w[n];
            ys[o + n] += y[s + n] * w[n];
        }
    }
    Ok((xs, ys))
}

/// One-third-octave band edges mapped onto transform bins: band `k` covers
/// bins `[lo, hi)` where `lo`/`hi` are the bins nearest the geometric-mean
/// edges `cf·2^{∓1/6}` of center frequency `cf = 150·2^{k/3}`.
fn band_bins() -> Vec<(usize, usize)> {
    let df = STOI_RATE as f64 / NFFT as f64;
    let nearest = |freq: f64| -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for b in 0..=NFFT / 2 {
            let d = (b as f64 * df - freq).abs();
            if d < best_d {
                best_d = d;
                best = b;
            }
        }
        best
    };
    (0..NUM_BANDS)
        .map(|k| {
            let cf = MIN_CENTER_HZ * 2f64.powf(k as f64 / 3.0);
            let lo = nearest(cf * 2f64.powf(-1.0 / 6.0));
            let hi = nearest(cf * 2f64.powf(1.0 / 6.0));
            (lo, hi)
        })
        .collect()
}

/// One-third-octave band envelopes: `out[band][frame]` is the root of the
/// summed spectral power inside the band.
fn band_envelopes(sig: &[f64]) -> Vec<Vec<f64>> {
    let w = hann_symmetric(WIN_LEN);
    let bands = band_bins();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(NFFT);
    let starts: Vec<usize> =
        (0..).map(|j| j * HOP).take_while(|&s| s + WIN_LEN <= sig.len()).collect();
    let mut out = vec![Vec::with_capacity(starts.len()); NUM_BANDS];
    let mut buf = vec![Complex::new(0.0f64, 0.0); NFFT];
    for &s in &starts {
        for n in 0..NFFT {
            buf[n] = if n < WIN_LEN {
                Complex::new(sig[s + n] * w[n], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (k, &(lo, hi)) in bands.iter().enumerate() {
            let p: f64 = (lo..hi).map(|b| buf[b].norm_sqr()).sum();
            out[k].push(p.sqrt());
        }
    }
    out
}

/// Zero-mean normalized correlation with epsilon-guarded denominators.
fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        num += (a - mx) * (b - my);
        dx += (a - mx).powi(2);
        dy += (b - my).powi(2);
    }
    num / (dx.sqrt() * dy.sqrt() + f64::EPSILON)
}

/// Computes the intelligibility score of `estimate` against `reference`.
///
/// Both signals must share length and sample rate; anything other than
/// 10 kHz is resampled internally. Scores lie in roughly `[-1, 1]` and hit
/// 1 for a perfect copy. Fails on an all-silent reference and on inputs too
/// short to fill one 384 ms comparison segment after silence removal.
pub fn stoi<T: Real>(reference: &Waveform<T>, estimate: &Waveform<T>) -> Result<T> {
    if reference.sample_rate != estimate.sample_rate {
        return Err(Error::SampleRate {
            expected: reference.sample_rate,
            got: estimate.sample_rate,
        });
    }
    if reference.len() != estimate.len() {
        return Err(Error::LengthMismatch { a: reference.len(), b: estimate.len() });
    }
    if reference.is_empty() {
        return Err(Error::Empty);
    }
    let to_f64 = |w: &Waveform<T>| -> Vec<f64> {
        w.samples.iter().map(|v| v.to_f64().unwrap()).collect()
    };
    let x = resample(&to_f64(reference), reference.sample_rate, STOI_RATE)?;
    let y = resample(&to_f64(estimate), estimate.sample_rate, STOI_RATE)?;

    let (xs, ys) = remove_silent_frames(&x, &y)?;
    let xb = band_envelopes(&xs);
    let yb = band_envelopes(&ys);
    let n_frames = xb[0].len();
    if n_frames < SEG_FRAMES {
        return Err(Error::TooShort { len: n_frames, min: SEG_FRAMES });
    }

    let clip = 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0f64;
    let mut count = 0usize;
    for m in SEG_FRAMES..=n_frames {
        let lo = m - SEG_FRAMES;
        for j in 0..NUM_BANDS {
            let xseg = &xb[j][lo..m];
            let yseg = &yb[j][lo..m];
            let ex: f64 = xseg.iter().map(|v| v * v).sum();
            let ey: f64 = yseg.iter().map(|v| v * v).sum();
            let alpha = (ex / (ey + f64::EPSILON)).sqrt();
            let yprime: Vec<f64> = xseg
                .iter()
                .zip(yseg)
                .map(|(&xv, &yv)| (alpha * yv).min(xv * (1.0 + clip)))
                .collect();
            total += correlation(xseg, &yprime);
            count += 1;
        }
    }
    Ok(rl::<T>(total / count as f64))
}
