//! Analysis/synthesis filter bank between the time domain and a low-resolution
//! complex spectrogram, with explicit latency accounting.
//!
//! The bank is a square-root periodic-Hann STFT pair: 96-sample frames with a
//! 48-sample hop at 24 kHz (2 ms per hop) in the default geometry, storing the
//! 49 non-redundant bins of the real transform. The top (Nyquist) bin is
//! carried through untouched by all enhancement stages; the 48 bins below it
//! are the processed band set.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::num::{rl, Real};

/// Geometry of the analysis/synthesis bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FbConfig {
    /// Frame length in samples (even).
    pub frame_len: usize,
    /// Hop between frames in samples; must equal `frame_len / 2` so the
    /// window pair satisfies the constant-overlap-add condition.
    pub hop: usize,
    /// Sample rate in Hz.
    pub sample_rate: u32,
}

impl Default for FbConfig {
    fn default() -> Self {
        Self { frame_len: 96, hop: 48, sample_rate: 24_000 }
    }
}

impl FbConfig {
    /// Number of stored bins (DC through Nyquist).
    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Number of bins touched by enhancement (all stored bins except Nyquist).
    pub fn processed_bins(&self) -> usize {
        self.frame_len / 2
    }

    /// Hop duration in milliseconds.
    pub fn hop_ms(&self) -> f64 {
        self.hop as f64 * 1000.0 / self.sample_rate as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 4 || self.frame_len % 2 != 0 {
            return Err(Error::Config(format!(
                "frame_len must be even and >= 4, got {}",
                self.frame_len
            )));
        }
        if self.hop * 2 != self.frame_len {
            return Err(Error::Config(format!(
                "hop must be frame_len/2 for the overlap-add identity, got hop {} for frame_len {}",
                self.hop, self.frame_len
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        Ok(())
    }
}

/// End-to-end algorithmic latency in milliseconds for a coefficient offset
/// `l`: one frame of buffering plus `max(l, 0)` hops of lookahead.
///
/// `l = 1` in the default geometry gives 6 ms; `l = 0` and `l = -1` give 4 ms.
pub fn algorithmic_latency(cfg: &FbConfig, offset: i32) -> f64 {
    let look = offset.max(0) as usize * cfg.hop;
    (cfg.frame_len + look) as f64 / cfg.sample_rate as f64 * 1000.0
}

/// Same latency expressed in whole samples.
pub fn algorithmic_latency_samples(cfg: &FbConfig, offset: i32) -> usize {
    cfg.frame_len + offset.max(0) as usize * cfg.hop
}

/// Mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Real> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> T {
        if self.samples.is_empty() {
            return T::zero();
        }
        let e: T = self.samples.iter().map(|&x| x * x).sum();
        (e / rl(self.samples.len() as f64)).sqrt()
    }
}

/// Complex spectrogram in frame-major storage (`frame * n_bins + bin`).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    data: Vec<Complex<T>>,
    n_frames: usize,
    n_bins: usize,
    pub hop: usize,
    pub frame_len: usize,
    pub sample_rate: u32,
}

impl<T: Real> Spectrogram<T> {
    pub fn zeros(cfg: &FbConfig, n_frames: usize) -> Self {
        Self {
            data: vec![Complex::new(T::zero(), T::zero()); n_frames * cfg.n_bins()],
            n_frames,
            n_bins: cfg.n_bins(),
            hop: cfg.hop,
            frame_len: cfg.frame_len,
            sample_rate: cfg.sample_rate,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Bins below the Nyquist bin, i.e. the ones enhancement may modify.
    pub fn processed_bins(&self) -> usize {
        self.n_bins - 1
    }

    #[inline]
    pub fn at(&self, frame: usize, bin: usize) -> Complex<T> {
        self.data[frame * self.n_bins + bin]
    }

    #[inline]
    pub fn at_mut(&mut self, frame: usize, bin: usize) -> &mut Complex<T> {
        &mut self.data[frame * self.n_bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[Complex<T>] {
        &self.data[frame * self.n_bins..(frame + 1) * self.n_bins]
    }

    pub fn frame_mut(&mut self, frame: usize) -> &mut [Complex<T>] {
        &mut self.data[frame * self.n_bins..(frame + 1) * self.n_bins]
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn geometry_matches(&self, cfg: &FbConfig) -> bool {
        self.hop == cfg.hop && self.frame_len == cfg.frame_len && self.sample_rate == cfg.sample_rate
    }
}

/// Square-root periodic Hann window of length `n`.
fn sqrt_hann_window<T: Real>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| {
            let phase = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            rl::<T>((0.5 * (1.0 - phase.cos())).sqrt())
        })
        .collect()
}

/// Planned analysis/synthesis transform for one geometry. Cheap to clone.
#[derive(Clone)]
pub struct Filterbank<T: Real> {
    cfg: FbConfig,
    window: Vec<T>,
    fft_fwd: Arc<dyn Fft<T>>,
    fft_inv: Arc<dyn Fft<T>>,
}

impl<T: Real> Filterbank<T> {
    pub fn new(cfg: FbConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: sqrt_hann_window(cfg.frame_len),
            fft_fwd: planner.plan_fft_forward(cfg.frame_len),
            fft_inv: planner.plan_fft_inverse(cfg.frame_len),
            cfg,
        })
    }

    pub fn cfg(&self) -> &FbConfig {
        &self.cfg
    }

    pub fn window(&self) -> &[T] {
        &self.window
    }

    /// Number of frames for an input of `len` samples: frames start every
    /// `hop` samples and the final partial frame is zero-padded.
    pub fn n_frames_for(&self, len: usize) -> Result<usize> {
        if len < self.cfg.frame_len {
            return Err(Error::TooShort { len, min: self.cfg.frame_len });
        }
        Ok((len - self.cfg.frame_len + self.cfg.hop - 1) / self.cfg.hop + 1)
    }

    /// Output length synthesized from `n_frames` frames.
    pub fn natural_length(&self, n_frames: usize) -> usize {
        if n_frames == 0 {
            0
        } else {
            (n_frames - 1) * self.cfg.hop + self.cfg.frame_len
        }
    }

    /// Windows each frame and takes its real DFT, keeping DC through Nyquist.
    pub fn analyze(&self, w: &Waveform<T>) -> Result<Spectrogram<T>> {
        if w.sample_rate != self.cfg.sample_rate {
            return Err(Error::SampleRate { expected: self.cfg.sample_rate, got: w.sample_rate });
        }
        let n_frames = self.n_frames_for(w.len())?;
        let flen = self.cfg.frame_len;
        let mut out = Spectrogram::zeros(&self.cfg, n_frames);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); flen];
        for k in 0..n_frames {
            let start = k * self.cfg.hop;
            let avail = (w.len() - start).min(flen);
            for n in 0..flen {
                let x = if n < avail { w.samples[start + n] } else { T::zero() };
                buf[n] = Complex::new(x * self.window[n], T::zero());
            }
            self.fft_fwd.process(&mut buf);
            out.frame_mut(k).copy_from_slice(&buf[..self.cfg.n_bins()]);
        }
        Ok(out)
    }

    /// Inverse transform with windowed overlap-add. Output alignment matches
    /// the analysis framing: frame `k` covers samples `k*hop .. k*hop +
    /// frame_len`, so `synthesize(analyze(w))` reproduces `w` without delay
    /// once truncated to the input length; only the first and last
    /// `frame_len` samples carry window-taper edge error.
    pub fn synthesize(&self, s: &Spectrogram<T>) -> Result<Waveform<T>> {
        if !s.geometry_matches(&self.cfg) || s.n_bins() != self.cfg.n_bins() {
            return Err(Error::Geometry(format!(
                "spectrogram geometry {}/{}/{} Hz with {} bins does not match bank {}/{}/{} Hz",
                s.frame_len, s.hop, s.sample_rate, s.n_bins, self.cfg.frame_len, self.cfg.hop,
                self.cfg.sample_rate
            )));
        }
        let flen = self.cfg.frame_len;
        let half = flen / 2;
        let scale = T::one() / rl::<T>(flen as f64);
        let mut out = vec![T::zero(); self.natural_length(s.n_frames())];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); flen];
        for k in 0..s.n_frames() {
            let frame = s.frame(k);
            buf[0] = frame[0];
            buf[half] = frame[half];
            for m in 1..half {
                buf[m] = frame[m];
                buf[flen - m] = frame[m].conj();
            }
            self.fft_inv.process(&mut buf);
            let start = k * self.cfg.hop;
            for n in 0..flen {
                out[start + n] += buf[n].re * scale * self.window[n];
            }
        }
        Ok(Waveform::new(out, self.cfg.sample_rate))
    }

    /// Adjoint of [`Self::synthesize`] as a real-linear map: pulls a gradient
    /// on the synthesized waveform back onto the stored bins. The imaginary
    /// parts of DC and Nyquist receive zero because synthesis discards them.
    pub(crate) fn synthesize_adjoint(&self, grad: &[T], n_frames: usize) -> Spectrogram<T> {
        debug_assert_eq!(grad.len(), self.natural_length(n_frames));
        let flen = self.cfg.frame_len;
        let half = flen / 2;
        let scale1 = T::one() / rl::<T>(flen as f64);
        let scale2 = rl::<T>(2.0) / rl::<T>(flen as f64);
        let mut out = Spectrogram::zeros(&self.cfg, n_frames);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); flen];
        for k in 0..n_frames {
            let start = k * self.cfg.hop;
            for n in 0..flen {
                buf[n] = Complex::new(grad[start + n] * self.window[n], T::zero());
            }
            self.fft_fwd.process(&mut buf);
            let frame = out.frame_mut(k);
            frame[0] = Complex::new(buf[0].re * scale1, T::zero());
            frame[half] = Complex::new(buf[half].re * scale1, T::zero());
            for m in 1..half {
                frame[m] = buf[m] * scale2;
            }
        }
        out
    }
}

/// Frame-at-a-time analysis; owned by one thread at a time.
///
/// Feeding the same samples through [`StreamingAnalyzer::push`] yields the
/// frames [`Filterbank::analyze`] produces, in order; [`StreamingAnalyzer::finish`]
/// emits the zero-padded tail frames of the offline framing.
pub struct StreamingAnalyzer<T: Real> {
    fb: Filterbank<T>,
    pending: Vec<T>,
}

impl<T: Real> StreamingAnalyzer<T> {
    pub fn new(fb: Filterbank<T>) -> Self {
        Self { fb, pending: Vec::new() }
    }

    /// Appends samples and returns every complete frame now available.
    pub fn push(&mut self, samples: &[T]) -> Vec<Vec<Complex<T>>> {
        self.pending.extend_from_slice(samples);
        let flen = self.fb.cfg.frame_len;
        let hop = self.fb.cfg.hop;
        let mut frames = Vec::new();
        while self.pending.len() >= flen {
            frames.push(self.frame_of(&self.pending[..flen].to_vec()));
            self.pending.drain(..hop);
        }
        frames
    }

    /// Flushes the remaining partial frame (zero-padded), if any.
    pub fn finish(&mut self) -> Vec<Vec<Complex<T>>> {
        let flen = self.fb.cfg.frame_len;
        let hop = self.fb.cfg.hop;
        let mut frames = Vec::new();
        // Offline framing emits a padded frame whenever more than one hop of
        // real samples remains past the last complete frame start.
        while self.pending.len() > hop {
            let mut padded = self.pending.clone();
            padded.resize(flen, T::zero());
            frames.push(self.frame_of(&padded));
            self.pending.drain(..hop.min(self.pending.len()));
        }
        self.pending.clear();
        frames
    }

    fn frame_of(&self, samples: &[T]) -> Vec<Complex<T>> {
        let flen = self.fb.cfg.frame_len;
        let mut buf: Vec<Complex<T>> = (0..flen)
            .map(|n| Complex::new(samples[n] * self.fb.window[n], T::zero()))
            .collect();
        self.fb.fft_fwd.process(&mut buf);
        buf.truncate(self.fb.cfg.n_bins());
        buf
    }
}

/// Frame-at-a-time synthesis; owned by one thread at a time.
pub struct StreamingSynthesizer<T: Real> {
    fb: Filterbank<T>,
    overlap: Vec<T>,
    buf: Vec<Complex<T>>,
}

impl<T: Real> StreamingSynthesizer<T> {
    pub fn new(fb: Filterbank<T>) -> Self {
        let flen = fb.cfg.frame_len;
        Self {
            overlap: vec![T::zero(); flen],
            buf: vec![Complex::new(T::zero(), T::zero()); flen],
            fb,
        }
    }

    /// Adds one spectral frame and returns the next `hop` finished samples.
    pub fn push_frame(&mut self, frame: &[Complex<T>]) -> Result<Vec<T>> {
        let flen = self.fb.cfg.frame_len;
        let half = flen / 2;
        if frame.len() != self.fb.cfg.n_bins() {
            return Err(Error::Geometry(format!(
                "expected {} bins per frame, got {}",
                self.fb.cfg.n_bins(),
                frame.len()
            )));
        }
        self.buf[0] = frame[0];
        self.buf[half] = frame[half];
        for m in 1..half {
            self.buf[m] = frame[m];
            self.buf[flen - m] = frame[m].conj();
        }
        self.fb.fft_inv.process(&mut self.buf);
        let scale = T::one() / rl::<T>(flen as f64);
        for n in 0..flen {
            self.overlap[n] += self.buf[n].re * scale * self.fb.window[n];
        }
        let hop = self.fb.cfg.hop;
        let out = self.overlap[..hop].to_vec();
        self.overlap.copy_within(hop.., 0);
        for v in &mut self.overlap[flen - hop..] {
            *v = T::zero();
        }
        Ok(out)
    }
}
