//! Complex linear coding: per-band complex filter stacks applied across
//! neighbouring spectrogram frames, plus the input normalization that feeds
//! the coefficient predictor and the oracle solvers used as references.
//!
//! The operator estimates bin `f` of frame `k` as
//! `Ŝ(k,f) = Σ_{i=0..=order} A(k,i,f) · X(k-i+offset, f)`,
//! reading only bin `f` of the input. `offset = -1` restricts the stack to
//! strictly past frames, which is plain linear prediction; `offset = 1` (the
//! default) grants one frame of lookahead. The Nyquist bin is always copied
//! through untouched.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::filterbank::{FbConfig, Spectrogram};
use crate::linalg::{cholesky_solve, hermitian_pinv_solve};
use crate::num::{rl, Real};

/// Configuration of the running-magnitude input normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormConfig {
    /// Time constant of the per-bin magnitude average, in seconds.
    pub time_constant_s: f64,
    /// Floor applied to the magnitude average before dividing.
    pub epsilon: f64,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self { time_constant_s: 1.0, epsilon: 1e-6 }
    }
}

impl NormConfig {
    /// Per-frame decay factor `exp(-hop_seconds / time_constant)`.
    pub fn decay(&self, fb: &FbConfig) -> f64 {
        (-(fb.hop as f64 / fb.sample_rate as f64) / self.time_constant_s).exp()
    }
}

/// Causal per-bin magnitude statistics; one instance per audio stream.
#[derive(Debug, Clone, PartialEq)]
pub struct NormState<T> {
    /// Running mean of `|X|` per processed bin, floored at `epsilon`.
    pub mu: Vec<T>,
    decay: T,
    epsilon: T,
}

impl<T: Real> NormState<T> {
    /// Fresh state with the magnitude average at 1 (neutral until adapted).
    pub fn new(cfg: &NormConfig, fb: &FbConfig) -> Self {
        Self {
            mu: vec![T::one(); fb.processed_bins()],
            decay: rl(cfg.decay(fb)),
            epsilon: rl(cfg.epsilon),
        }
    }

    /// Advances the statistics by one frame of processed-bin magnitudes.
    fn update(&mut self, frame: &[Complex<T>]) {
        let one_minus = T::one() - self.decay;
        for (m, x) in self.mu.iter_mut().zip(frame) {
            *m = (*m * self.decay + one_minus * x.norm()).max(self.epsilon);
        }
    }
}

/// Trainable per-bin output gains of the normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NormGains<T> {
    pub gamma: Vec<T>,
}

impl<T: Real> NormGains<T> {
    pub fn unit(bins: usize) -> Self {
        Self { gamma: vec![T::one(); bins] }
    }
}

/// Parametric unit-norm normalization: each processed bin is scaled by the
/// real factor `gamma_f / mu(k,f)` after the running magnitude `mu` has been
/// updated with the current frame. Multiplying by a positive real scalar
/// leaves the phase untouched. The Nyquist bin passes through unchanged.
pub fn normalize<T: Real>(
    x: &Spectrogram<T>,
    state: &mut NormState<T>,
    gains: &NormGains<T>,
) -> Result<Spectrogram<T>> {
    Ok(normalize_traced(x, state, gains)?.0)
}

/// [`normalize`] that also returns the `mu` value used for every
/// (frame, bin), frame-major — the backward pass needs them.
pub fn normalize_traced<T: Real>(
    x: &Spectrogram<T>,
    state: &mut NormState<T>,
    gains: &NormGains<T>,
) -> Result<(Spectrogram<T>, Vec<T>)> {
    let bins = x.processed_bins();
    if state.mu.len() != bins || gains.gamma.len() != bins {
        return Err(Error::Geometry(format!(
            "normalization sized for {} bins, spectrogram has {} processed bins",
            state.mu.len(),
            bins
        )));
    }
    let mut out = x.clone();
    let mut mu_trace = Vec::with_capacity(x.n_frames() * bins);
    for k in 0..x.n_frames() {
        state.update(&x.frame(k)[..bins]);
        let frame = out.frame_mut(k);
        for f in 0..bins {
            let scale = gains.gamma[f] / state.mu[f];
            frame[f] = Complex::new(frame[f].re * scale, frame[f].im * scale);
            mu_trace.push(state.mu[f]);
        }
    }
    Ok((out, mu_trace))
}

/// Per-frame, per-band complex coefficient stacks. Storage is frame-major,
/// then tap-major: `data[(frame * (order+1) + tap) * bins + bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTensor<T> {
    data: Vec<Complex<T>>,
    n_frames: usize,
    bins: usize,
    order: usize,
    offset: i32,
}

impl<T: Real> CoeffTensor<T> {
    pub fn zeros(n_frames: usize, bins: usize, order: usize, offset: i32) -> Self {
        Self {
            data: vec![Complex::new(T::zero(), T::zero()); n_frames * (order + 1) * bins],
            n_frames,
            bins,
            order,
            offset,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn offset(&self) -> i32 {
        self.offset
    }

    #[inline]
    pub fn at(&self, frame: usize, tap: usize, bin: usize) -> Complex<T> {
        self.data[(frame * (self.order + 1) + tap) * self.bins + bin]
    }

    #[inline]
    pub fn at_mut(&mut self, frame: usize, tap: usize, bin: usize) -> &mut Complex<T> {
        &mut self.data[(frame * (self.order + 1) + tap) * self.bins + bin]
    }

    /// All taps of one frame, tap-major.
    pub fn frame(&self, frame: usize) -> &[Complex<T>] {
        let w = (self.order + 1) * self.bins;
        &self.data[frame * w..(frame + 1) * w]
    }

    pub fn frame_mut(&mut self, frame: usize) -> &mut [Complex<T>] {
        let w = (self.order + 1) * self.bins;
        &mut self.data[frame * w..(frame + 1) * w]
    }
}

/// Applies a coefficient tensor to a spectrogram.
///
/// Frames of `x` outside `0..n_frames` read as zero; the output has as many
/// frames as `a` (at most as many as `x`) and the Nyquist bin of `x` copied
/// through unmodified.
pub fn apply_clc<T: Real>(x: &Spectrogram<T>, a: &CoeffTensor<T>) -> Result<Spectrogram<T>> {
    let bins = x.processed_bins();
    if a.bins != bins {
        return Err(Error::Geometry(format!(
            "coefficients cover {} bins, spectrogram has {} processed bins",
            a.bins, bins
        )));
    }
    if a.n_frames > x.n_frames() {
        return Err(Error::Geometry(format!(
            "coefficients span {} frames, spectrogram only {}",
            a.n_frames,
            x.n_frames()
        )));
    }
    let cfg = FbConfig { frame_len: x.frame_len, hop: x.hop, sample_rate: x.sample_rate };
    let mut out = Spectrogram::zeros(&cfg, a.n_frames);
    let nyquist = bins;
    for k in 0..a.n_frames {
        for i in 0..=a.order {
            let src = k as i64 - i as i64 + a.offset as i64;
            if src < 0 || src >= x.n_frames() as i64 {
                continue;
            }
            let xin = x.frame(src as usize);
            let taps = &a.frame(k)[i * bins..(i + 1) * bins];
            let acc = out.frame_mut(k);
            for f in 0..bins {
                acc[f] += taps[f] * xin[f];
            }
        }
        *out.at_mut(k, nyquist) = x.at(k, nyquist);
    }
    Ok(out)
}

/// Least-squares oracle coefficients mapping `x` toward the target `s`.
///
/// For every (frame, bin), the taps minimize the squared fit error over a
/// sliding window of `window` frames centred on the frame (clipped at the
/// edges), with Tikhonov damping `ridge_scale × (window energy of the bin)`.
/// Zero `ridge_scale` requests the exact minimum-norm least-squares solution
/// (pseudo-inverse semantics when the window is rank-deficient).
pub fn oracle_clc_coeffs<T: Real>(
    x: &Spectrogram<T>,
    s: &Spectrogram<T>,
    order: usize,
    offset: i32,
    ridge_scale: f64,
    window: usize,
) -> Result<CoeffTensor<T>> {
    if x.n_frames() != s.n_frames() || x.n_bins() != s.n_bins() {
        return Err(Error::Geometry(format!(
            "target {}x{} does not match input {}x{}",
            s.n_frames(),
            s.n_bins(),
            x.n_frames(),
            x.n_bins()
        )));
    }
    if window == 0 || window % 2 == 0 {
        return Err(Error::Config(format!("window must be odd and positive, got {window}")));
    }
    if !(ridge_scale >= 0.0) {
        return Err(Error::Config(format!("ridge_scale must be >= 0, got {ridge_scale}")));
    }
    let bins = x.processed_bins();
    let taps = order + 1;
    let half = window / 2;
    let frames = x.n_frames();
    let mut out = CoeffTensor::zeros(frames, bins, order, offset);
    let mut gram = vec![Complex::new(T::zero(), T::zero()); taps * taps];
    let mut rhs = vec![Complex::new(T::zero(), T::zero()); taps];
    for f in 0..bins {
        for k in 0..frames {
            let lo = k.saturating_sub(half);
            let hi = (k + half).min(frames - 1);
            // Regressor u_i(j) = x(j - i + offset, f), zero outside range.
            let reg = |j: i64, i: usize| -> Complex<T> {
                let src = j - i as i64 + offset as i64;
                if src < 0 || src >= frames as i64 {
                    Complex::new(T::zero(), T::zero())
                } else {
                    x.at(src as usize, f)
                }
            };
            let mut energy = T::zero();
            for c in gram.iter_mut() {
                *c = Complex::new(T::zero(), T::zero());
            }
            for c in rhs.iter_mut() {
                *c = Complex::new(T::zero(), T::zero());
            }
            for j in lo..=hi {
                energy += x.at(j, f).norm_sqr();
                for i in 0..taps {
                    let ui = reg(j as i64, i);
                    rhs[i] += ui.conj() * s.at(j, f);
                    for i2 in i..taps {
                        gram[i * taps + i2] += ui.conj() * reg(j as i64, i2);
                    }
                }
            }
            for i in 0..taps {
                for i2 in 0..i {
                    gram[i * taps + i2] = gram[i2 * taps + i].conj();
                }
            }
            let solution = if ridge_scale > 0.0 {
                let lambda = rl::<T>(ridge_scale) * energy;
                for i in 0..taps {
                    gram[i * taps + i] += Complex::new(lambda, T::zero());
                }
                match cholesky_solve(&gram, &rhs, taps) {
                    Ok(sol) => sol,
                    // Fully silent window: damped system is singular too.
                    Err(_) => hermitian_pinv_solve(&gram, &rhs, taps),
                }
            } else {
                hermitian_pinv_solve(&gram, &rhs, taps)
            };
            for (i, v) in solution.into_iter().enumerate() {
                *out.at_mut(k, i, f) = v;
            }
        }
    }
    Ok(out)
}

/// Best per-window real gain for one bin: minimizes `Σ |g·x(j,f) - s(j,f)|²`
/// over real `g` for the same clipped window [`oracle_clc_coeffs`] uses.
/// Returns (gain, squared fit error over the window).
pub fn best_real_gain_window<T: Real>(
    x: &Spectrogram<T>,
    s: &Spectrogram<T>,
    bin: usize,
    frame: usize,
    window: usize,
) -> (T, T) {
    let half = window / 2;
    let lo = frame.saturating_sub(half);
    let hi = (frame + half).min(x.n_frames() - 1);
    let mut xx = T::zero();
    let mut xs = T::zero();
    let mut ss = T::zero();
    for j in lo..=hi {
        let xv = x.at(j, bin);
        let sv = s.at(j, bin);
        xx += xv.norm_sqr();
        xs += (xv.conj() * sv).re;
        ss += sv.norm_sqr();
    }
    if xx == T::zero() {
        return (T::zero(), ss);
    }
    let g = xs / xx;
    (g, ss - g * xs)
}

/// Squared fit error of a coefficient stack over the clipped window centred
/// on `frame` — the quantity [`oracle_clc_coeffs`] minimizes per bin.
pub fn clc_window_residual<T: Real>(
    x: &Spectrogram<T>,
    s: &Spectrogram<T>,
    a: &CoeffTensor<T>,
    bin: usize,
    frame: usize,
    window: usize,
) -> T {
    let half = window / 2;
    let lo = frame.saturating_sub(half);
    let hi = (frame + half).min(x.n_frames() - 1);
    let mut err = T::zero();
    for j in lo..=hi {
        let mut est = Complex::new(T::zero(), T::zero());
        for i in 0..=a.order {
            let src = j as i64 - i as i64 + a.offset as i64;
            if src >= 0 && src < x.n_frames() as i64 {
                est += a.at(frame, i, bin) * x.at(src as usize, bin);
            }
        }
        err += (est - s.at(j, bin)).norm_sqr();
    }
    err
}

/// Per-bin real gain mask over the processed bins, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMask<T> {
    pub data: Vec<T>,
    pub n_frames: usize,
    pub bins: usize,
}

impl<T: Real> RealMask<T> {
    #[inline]
    pub fn at(&self, frame: usize, bin: usize) -> T {
        self.data[frame * self.bins + bin]
    }
}

/// Per-bin complex mask over the processed bins, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMask<T> {
    pub data: Vec<Complex<T>>,
    pub n_frames: usize,
    pub bins: usize,
}

impl<T: Real> ComplexMask<T> {
    #[inline]
    pub fn at(&self, frame: usize, bin: usize) -> Complex<T> {
        self.data[frame * self.bins + bin]
    }
}

fn check_pair<T: Real>(s: &Spectrogram<T>, n: &Spectrogram<T>) -> Result<()> {
    if s.n_frames() != n.n_frames() || s.n_bins() != n.n_bins() {
        return Err(Error::Geometry(format!(
            "spectrogram shapes {}x{} and {}x{} differ",
            s.n_frames(),
            s.n_bins(),
            n.n_frames(),
            n.n_bins()
        )));
    }
    Ok(())
}

/// Oracle Wiener gain `|S|² / (|S|² + |N|²)` per processed TF bin, from the
/// clean-speech and noise spectrograms. A bin where both are zero gets 0.
pub fn oracle_wiener_gain<T: Real>(
    s: &Spectrogram<T>,
    n: &Spectrogram<T>,
) -> Result<RealMask<T>> {
    check_pair(s, n)?;
    let bins = s.processed_bins();
    let mut data = Vec::with_capacity(s.n_frames() * bins);
    for k in 0..s.n_frames() {
        for f in 0..bins {
            let ps = s.at(k, f).norm_sqr();
            let pn = n.at(k, f).norm_sqr();
            let denom = ps + pn;
            data.push(if denom > T::zero() { ps / denom } else { T::zero() });
        }
    }
    Ok(RealMask { data, n_frames: s.n_frames(), bins })
}

/// Ideal amplitude mask `|S| / |M|`, capped at `cap`; `0/0` gives 0.
pub fn oracle_iam<T: Real>(s: &Spectrogram<T>, m: &Spectrogram<T>, cap: f64) -> Result<RealMask<T>> {
    check_pair(s, m)?;
    let bins = s.processed_bins();
    let cap = rl::<T>(cap);
    let mut data = Vec::with_capacity(s.n_frames() * bins);
    for k in 0..s.n_frames() {
        for f in 0..bins {
            let ms = s.at(k, f).norm();
            let mm = m.at(k, f).norm();
            let g = if mm > T::zero() { (ms / mm).min(cap) } else { T::zero() };
            data.push(g);
        }
    }
    Ok(RealMask { data, n_frames: s.n_frames(), bins })
}

/// Complex ideal ratio mask `S / M`, with the denominator magnitude floored
/// at `epsilon`. Wherever `|M| > epsilon`, applying the mask to `M`
/// reproduces `S` exactly (up to rounding).
pub fn oracle_cirm<T: Real>(
    s: &Spectrogram<T>,
    m: &Spectrogram<T>,
    epsilon: f64,
) -> Result<ComplexMask<T>> {
    check_pair(s, m)?;
    let bins = s.processed_bins();
    let eps = rl::<T>(epsilon);
    let mut data = Vec::with_capacity(s.n_frames() * bins);
    for k in 0..s.n_frames() {
        for f in 0..bins {
            let mv = m.at(k, f);
            let mag = mv.norm().max(eps);
            // S·conj(M) / (|M|·max(|M|, eps)) == S/M when |M| >= eps.
            let denom = mv.norm().max(eps) * mag;
            let val = if mv.norm() > T::zero() {
                s.at(k, f) * mv.conj() / denom
            } else {
                Complex::new(T::zero(), T::zero())
            };
            data.push(val);
        }
    }
    Ok(ComplexMask { data, n_frames: s.n_frames(), bins })
}

/// Applies a real mask to the processed bins; Nyquist passes through.
pub fn apply_real_mask<T: Real>(x: &Spectrogram<T>, mask: &RealMask<T>) -> Result<Spectrogram<T>> {
    if mask.n_frames != x.n_frames() || mask.bins != x.processed_bins() {
        return Err(Error::Geometry("mask shape does not match spectrogram".into()));
    }
    let mut out = x.clone();
    for k in 0..x.n_frames() {
        for f in 0..mask.bins {
            let g = mask.at(k, f);
            let v = out.at(k, f);
            *out.at_mut(k, f) = Complex::new(v.re * g, v.im * g);
        }
    }
    Ok(out)
}

/// Applies a complex mask to the processed bins; Nyquist passes through.
pub fn apply_complex_mask<T: Real>(
    x: &Spectrogram<T>,
    mask: &ComplexMask<T>,
) -> Result<Spectrogram<T>> {
    if mask.n_frames != x.n_frames() || mask.bins != x.processed_bins() {
        return Err(Error::Geometry("mask shape does not match spectrogram".into()));
    }
    let mut out = x.clone();
    for k in 0..x.n_frames() {
        for f in 0..mask.bins {
            *out.at_mut(k, f) = x.at(k, f) * mask.at(k, f);
        }
    }
    Ok(out)
}
