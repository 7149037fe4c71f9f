//! Rational-ratio sample rate conversion with a windowed-sinc polyphase
//! kernel. Only used by the intelligibility metric, which evaluates at
//! 10 kHz regardless of the processing rate.

use crate::error::{Error, Result};
use crate::num::{rl, Real};

/// Half-width of the interpolation kernel in input samples.
const KERNEL_HALF_WIDTH: usize = 24;
/// Cutoff shrink keeping the transition band inside the target Nyquist.
const CUTOFF_SCALE: f64 = 0.95;

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Blackman-windowed sinc, evaluated at `t` input samples from the center,
/// for a lowpass with normalized cutoff `rho` (1.0 = input Nyquist).
fn kernel(t: f64, rho: f64) -> f64 {
    let half = KERNEL_HALF_WIDTH as f64;
    if t.abs() >= half {
        return 0.0;
    }
    let cutoff = rho * CUTOFF_SCALE;
    let sinc = if t == 0.0 {
        1.0
    } else {
        let a = std::f64::consts::PI * cutoff * t;
        a.sin() / a
    };
    let u = std::f64::consts::PI * (t / half);
    let window = 0.42 + 0.5 * u.cos() + 0.08 * (2.0 * u).cos();
    cutoff * sinc * window
}

/// Resamples `x` from `from_rate` to `to_rate` Hz.
///
/// The output has `ceil(len·to/from)` samples; output sample `n` is the
/// windowed-sinc interpolation of the input at position `n·from/to`.
pub fn resample<T: Real>(x: &[T], from_rate: u32, to_rate: u32) -> Result<Vec<T>> {
    if from_rate == 0 || to_rate == 0 {
        return Err(Error::Config("sample rates must be positive".into()));
    }
    if from_rate == to_rate {
        return Ok(x.to_vec());
    }
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let g = gcd(from_rate, to_rate);
    let up = (to_rate / g) as usize; // L
    let down = (from_rate / g) as usize; // M
    let rho = (up as f64 / down as f64).min(1.0);
    let out_len = (x.len() * up).div_ceil(down);
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        // Input-domain center of output sample n; split into an integer part
        // and a fractional phase shared by every (n mod up) residue class.
        let num = n * down;
        let base = num / up;
        let frac = (num % up) as f64 / up as f64;
        let mut acc = 0.0f64;
        let lo = base.saturating_sub(KERNEL_HALF_WIDTH);
        let hi = (base + KERNEL_HALF_WIDTH + 1).min(x.len() - 1);
        for k in lo..=hi {
            let t = (base as f64 + frac) - k as f64;
            let h = kernel(t, rho);
            if h != 0.0 {
                acc += x[k].to_f64().unwrap() * h;
            }
        }
        out.push(rl::<T>(acc));
    }
    Ok(out)
}
