//! Coefficient-predictor network: three ReLU hidden layers and a tanh
//! output head, stored as one flat parameter vector.
//!
//! Per spectrogram frame, the network maps a window of normalized complex
//! bins (real/imaginary interleaved) to one complex coefficient stack. The
//! flat layout keeps the optimizer, serialization and gradient checking
//! trivial: every parameter is addressable by a single index.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::num::{rl, Real};

/// Everything that fixes the parameter shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelGeometry {
    /// Processed (non-Nyquist) frequency bins.
    pub bins: usize,
    /// Context frames before the current one.
    pub tau1_frames: usize,
    /// Context frames after the current one.
    pub tau2_frames: usize,
    /// Coefficient stack order: taps run `0..=order`.
    pub order: usize,
    /// Frame offset of the coefficient stack.
    pub offset: i32,
    /// Hidden layer widths.
    pub hidden: [usize; 3],
}

impl ModelGeometry {
    /// Feature length: real and imaginary parts of every bin over the
    /// context window.
    pub fn input_dim(&self) -> usize {
        2 * self.bins * (self.tau1_frames + 1 + self.tau2_frames)
    }

    /// Output width: real and imaginary parts of every tap of every bin.
    pub fn output_dim(&self) -> usize {
        2 * self.bins * (self.order + 1)
    }

    /// (fan-in, fan-out) of the four dense layers.
    pub fn layer_dims(&self) -> [(usize, usize); 4] {
        let [h1, h2, h3] = self.hidden;
        [(self.input_dim(), h1), (h1, h2), (h2, h3), (h3, self.output_dim())]
    }

    /// Total parameter count: the per-bin output gains plus, per layer,
    /// `fan_in * fan_out` weights and `fan_out` biases.
    pub fn param_count(&self) -> usize {
        self.bins + self.layer_dims().iter().map(|&(i, o)| i * o + o).sum::<usize>()
    }

    /// Named, ordered slices of the flat parameter vector.
    pub fn layout(&self) -> Vec<(&'static str, Range<usize>)> {
        const NAMES: [(&str, &str); 4] =
            [("w1", "b1"), ("w2", "b2"), ("w3", "b3"), ("w4", "b4")];
        let mut out = vec![("gamma", 0..self.bins)];
        let mut pos = self.bins;
        for (&(i, o), &(wn, bn)) in self.layer_dims().iter().zip(NAMES.iter()) {
            out.push((wn, pos..pos + i * o));
            pos += i * o;
            out.push((bn, pos..pos + o));
            pos += o;
        }
        out
    }

    /// Name of the parameter group a flat index belongs to.
    pub fn name_of(&self, index: usize) -> &'static str {
        self.layout()
            .into_iter()
            .find(|(_, r)| r.contains(&index))
            .map(|(n, _)| n)
            .unwrap_or("out-of-range")
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("model needs at least one bin and non-empty hidden layers".into()));
        }
        Ok(())
    }
}

/// All trainable state: per-bin normalization gains followed by the four
/// dense layers (weights row-major by output unit, then biases).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub geom: ModelGeometry,
    pub theta: Vec<T>,
}

/// Pre-activations of the hidden layers and the tanh output of one frame;
/// everything the backward pass needs besides the input features.
#[derive(Debug, Clone)]
pub struct FrameTrace<T> {
    pub z1: Vec<T>,
    pub z2: Vec<T>,
    pub z3: Vec<T>,
    /// Post-tanh output, in `(-1, 1)`.
    pub y: Vec<T>,
}

fn dense_forward<T: Real>(w: &[T], b: &[T], x: &[T], out: &mut [T]) {
    let fan_in = x.len();
    for (o, out_v) in out.iter_mut().enumerate() {
        let row = &w[o * fan_in..(o + 1) * fan_in];
        let mut acc = b[o];
        for (wv, xv) in row.iter().zip(x) {
            acc += *wv * *xv;
        }
        *out_v = acc;
    }
}

/// Accumulates dense-layer gradients and propagates the input gradient.
fn dense_backward<T: Real>(
    w: &[T],
    x: &[T],
    g_out: &[T],
    gw: &mut [T],
    gb: &mut [T],
    g_in: &mut [T],
) {
    let fan_in = x.len();
    for v in g_in.iter_mut() {
        *v = T::zero();
    }
    for (o, &g) in g_out.iter().enumerate() {
        gb[o] += g;
        let row = &w[o * fan_in..(o + 1) * fan_in];
        let grow = &mut gw[o * fan_in..(o + 1) * fan_in];
        for i in 0..fan_in {
            grow[i] += g * x[i];
            g_in[i] += row[i] * g;
        }
    }
}

impl<T: Real> ModelParams<T> {
    /// Seeded initialization: unit gains, zero biases, and weights drawn
    /// uniformly from `±sqrt(1/fan_in)` in layer order.
    pub fn init<R: Rng>(geom: ModelGeometry, rng: &mut R) -> Result<Self> {
        geom.validate()?;
        let mut theta = vec![T::zero(); geom.param_count()];
        for v in &mut theta[..geom.bins] {
            *v = T::one();
        }
        let mut pos = geom.bins;
        for (fan_in, fan_out) in geom.layer_dims() {
            let scale = (1.0 / fan_in as f64).sqrt();
            for v in &mut theta[pos..pos + fan_in * fan_out] {
                *v = rl(rng.gen_range(-scale..scale));
            }
            pos += fan_in * fan_out + fan_out; // biases stay zero
        }
        Ok(Self { geom, theta })
    }

    /// All-zero weights and biases (unit gains): predicts silence.
    pub fn zeros(geom: ModelGeometry) -> Result<Self> {
        geom.validate()?;
        let mut theta = vec![T::zero(); geom.param_count()];
        for v in &mut theta[..geom.bins] {
            *v = T::one();
        }
        Ok(Self { geom, theta })
    }

    pub fn gamma(&self) -> &[T] {
        &self.theta[..self.geom.bins]
    }

    pub fn gamma_mut(&mut self) -> &mut [T] {
        &mut self.theta[..self.geom.bins]
    }

    /// (weights, biases) of dense layer `idx` in `0..4`.
    pub fn layer(&self, idx: usize) -> (&[T], &[T]) {
        let (w, b) = self.layer_ranges(idx);
        (&self.theta[w], &self.theta[b])
    }

    /// Mutable (weights, biases) of dense layer `idx`; borrows disjoint
    /// ranges out of the flat vector.
    pub fn layer_mut(&mut self, idx: usize) -> (&mut [T], &mut [T]) {
        let (wr, br) = self.layer_ranges(idx);
        debug_assert_eq!(wr.end, br.start);
        let (head, b) = self.theta.split_at_mut(br.start);
        (&mut head[wr], &mut b[..br.end - br.start])
    }

    fn layer_ranges(&self, idx: usize) -> (Range<usize>, Range<usize>) {
        let layout = self.geom.layout();
        (layout[1 + 2 * idx].1.clone(), layout[2 + 2 * idx].1.clone())
    }

    /// Runs one frame through the network, recording what backward needs.
    pub fn forward_frame(&self, feat: &[T]) -> Result<FrameTrace<T>> {
        if feat.len() != self.geom.input_dim() {
            return Err(Error::Geometry(format!(
                "feature length {} does not match model input {}",
                feat.len(),
                self.geom.input_dim()
            )));
        }
        let [h1, h2, h3] = self.geom.hidden;
        let mut z1 = vec![T::zero(); h1];
        let mut z2 = vec![T::zero(); h2];
        let mut z3 = vec![T::zero(); h3];
        let mut y = vec![T::zero(); self.geom.output_dim()];
        let (w, b) = self.layer(0);
        dense_forward(w, b, feat, &mut z1);
        let a1: Vec<T> = z1.iter().map(|&z| z.max(T::zero())).collect();
        let (w, b) = self.layer(1);
        dense_forward(w, b, &a1, &mut z2);
        let a2: Vec<T> = z2.iter().map(|&z| z.max(T::zero())).collect();
        let (w, b) = self.layer(2);
        dense_forward(w, b, &a2, &mut z3);
        let a3: Vec<T> = z3.iter().map(|&z| z.max(T::zero())).collect();
        let (w, b) = self.layer(3);
        dense_forward(w, b, &a3, &mut y);
        for v in &mut y {
            *v = v.tanh();
        }
        Ok(FrameTrace { z1, z2, z3, y })
    }

    /// Reverse pass of one frame: accumulates parameter gradients into
    /// `grads` (same layout as `theta`) and writes the feature gradient.
    pub fn backward_frame(
        &self,
        feat: &[T],
        trace: &FrameTrace<T>,
        g_y: &[T],
        grads: &mut [T],
        g_feat: &mut [T],
    ) {
        let relu = |z: &[T]| -> Vec<T> { z.iter().map(|&v| v.max(T::zero())).collect() };
        let a1 = relu(&trace.z1);
        let a2 = relu(&trace.z2);
        let a3 = relu(&trace.z3);
        // tanh head: d/dz tanh = 1 - tanh².
        let g_z4: Vec<T> =
            g_y.iter().zip(&trace.y).map(|(&g, &y)| g * (T::one() - y * y)).collect();
        let mut g_a3 = vec![T::zero(); a3.len()];
        let mut g_a2 = vec![T::zero(); a2.len()];
        let mut g_a1 = vec![T::zero(); a1.len()];
        {
            let (wr, br) = self.layer_ranges(3);
            let w = &self.theta[wr.clone()];
            let (gw, gb) = two_ranges(grads, wr, br);
            dense_backward(w, &a3, &g_z4, gw, gb, &mut g_a3);
        }
        let g_z3: Vec<T> = gate(&g_a3, &trace.z3);
        {
            let (wr, br) = self.layer_ranges(2);
            let w = &self.theta[wr.clone()];
            let (gw, gb) = two_ranges(grads, wr, br);
            dense_backward(w, &a2, &g_z3, gw, gb, &mut g_a2);
        }
        let g_z2: Vec<T> = gate(&g_a2, &trace.z2);
        {
            let (wr, br) = self.layer_ranges(1);
            let w = &self.theta[wr.clone()];
            let (gw, gb) = two_ranges(grads, wr, br);
            dense_backward(w, &a1, &g_z2, gw, gb, &mut g_a1);
        }
        let g_z1: Vec<T> = gate(&g_a1, &trace.z1);
        {
            let (wr, br) = self.layer_ranges(0);
            let w = &self.theta[wr.clone()];
            let (gw, gb) = two_ranges(grads, wr, br);
            dense_backward(w, feat, &g_z1, gw, gb, g_feat);
        }
    }
}

/// ReLU gate: passes the gradient where the pre-activation was positive.
fn gate<T: Real>(g: &[T], z: &[T]) -> Vec<T> {
    g.iter()
        .zip(z)
        .map(|(&gv, &zv)| if zv > T::zero() { gv } else { T::zero() })
        .collect()
}

/// Two disjoint adjacent ranges of one slice, mutably.
fn two_ranges<T>(s: &mut [T], a: Range<usize>, b: Range<usize>) -> (&mut [T], &mut [T]) {
    debug_assert_eq!(a.end, b.start);
    let (head, tail) = s.split_at_mut(b.start);
    (&mut head[a], &mut tail[..b.end - b.start])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_geom() -> ModelGeometry {
        ModelGeometry {
            bins: 3,
            tau1_frames: 2,
            tau2_frames: 1,
            order: 2,
            offset: 1,
            hidden: [8, 8, 8],
        }
    }

    #[test]
    fn param_count_matches_layout_and_theta() {
        let g = tiny_geom();
        assert_eq!(g.input_dim(), 24);
        assert_eq!(g.output_dim(), 18);
        let expect = 3 + (24 * 8 + 8) + (8 * 8 + 8) + (8 * 8 + 8) + (8 * 18 + 18);
        assert_eq!(g.param_count(), expect);
        let layout = g.layout();
        assert_eq!(layout.last().unwrap().1.end, expect);
        let mut pos = 0;
        for (_, r) in &layout {
            assert_eq!(r.start, pos, "layout must be contiguous");
            pos = r.end;
        }
        let p = ModelParams::<f64>::init(g, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(p.theta.len(), expect);
    }

    #[test]
    fn init_is_deterministic_and_scaled() {
        let g = tiny_geom();
        let a = ModelParams::<f64>::init(g, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = ModelParams::<f64>::init(g, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.theta, b.theta);
        assert!(a.gamma().iter().all(|&v| v == 1.0));
        let (w1, b1) = a.layer(0);
        let bound = (1.0f64 / 24.0).sqrt();
        assert!(w1.iter().all(|v| v.abs() < bound));
        assert!(b1.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn outputs_are_bounded_by_tanh() {
        let g = tiny_geom();
        let p = ModelParams::<f64>::init(g, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let feat: Vec<f64> = (0..g.input_dim()).map(|_| rng.gen_range(-100.0..100.0)).collect();
            let t = p.forward_frame(&feat).unwrap();
            assert!(t.y.iter().all(|v| v.abs() < 1.0));
            assert_eq!(t.y.len(), g.output_dim());
        }
    }

    #[test]
    fn zero_params_emit_zero() {
        let g = tiny_geom();
        let p = ModelParams::<f64>::zeros(g).unwrap();
        let feat = vec![0.5; g.input_dim()];
        let t = p.forward_frame(&feat).unwrap();
        assert!(t.y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_feature_length_is_a_geometry_error() {
        let g = tiny_geom();
        let p = ModelParams::<f64>::zeros(g).unwrap();
        assert!(matches!(p.forward_frame(&[0.0; 5]), Err(Error::Geometry(_))));
    }

    #[test]
    fn name_of_resolves_flat_indices() {
        let g = tiny_geom();
        assert_eq!(g.name_of(0), "gamma");
        assert_eq!(g.name_of(3), "w1");
        assert_eq!(g.name_of(g.param_count() - 1), "b4");
    }

    #[test]
    fn layer_mut_matches_layer() {
        let g = tiny_geom();
        let mut p = ModelParams::<f64>::init(g, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        for idx in 0..4 {
            let (w, b) = p.layer(idx);
            let (wl, bl) = (w.len(), b.len());
            let (wm, bm) = p.layer_mut(idx);
            assert_eq!(wm.len(), wl);
            assert_eq!(bm.len(), bl);
        }
    }
}
