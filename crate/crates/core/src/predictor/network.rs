//! Small convolutional regressor: a stack of 3×3 conv + ReLU + 2×2 max-pool
//! stages producing shared features, followed by one two-layer
//! fully-connected branch per output.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::loss::{self, LossBreakdown, LossTarget, LossWeights};
use super::{softmax, ClassHeads, PredictError, PredictionInput, Predictor, PredictorOutput, RawPose, RegressionMode};
use crate::transform::Vec3;
use crate::volume::{InputMode, PlaneImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Side of the square input image.
    pub input_size: usize,
    /// Output channels of each conv stage.
    pub conv_channels: Vec<usize>,
    /// Hidden width of every fully-connected branch.
    pub head_width: usize,
    /// Fixed factor applied to the translation head (and anchor head) output,
    /// so unit-scale activations map to voxel-scale displacements.
    #[serde(default = "default_translation_scale")]
    pub translation_scale: f64,
}

fn default_translation_scale() -> f64 {
    1.0
}

impl Default for Architecture {
    fn default() -> Self {
        Self { input_size: 32, conv_channels: vec![8, 16, 32, 32, 32], head_width: 64, translation_scale: default_translation_scale() }
    }
}

impl Architecture {
    /// Spatial side of the final feature map (each pool floors the size).
    pub fn feature_side(&self) -> usize {
        self.input_size >> self.conv_channels.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Architecture(m));
        if self.conv_channels.is_empty() || self.conv_channels.len() > 8 {
            return bad(format!("expected 1..=8 conv stages, got {}", self.conv_channels.len()));
        }
        if self.conv_channels.iter().any(|&c| c == 0 || c > u16::MAX as usize) || self.head_width == 0 {
            return bad("channel counts and head width must be positive".into());
        }
        if !(self.translation_scale > 0.0 && self.translation_scale.is_finite()) {
            return bad(format!("translation scale {} must be positive", self.translation_scale));
        }
        if self.input_size > u16::MAX as usize || self.feature_side() == 0 {
            return bad(format!(
                "input size {} is too small for {} pooling stages",
                self.input_size,
                self.conv_channels.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("classification heads are only supported in quat mode, not {0}")]
    HeadsNeedQuat(RegressionMode),
    #[error("parameter vector has length {got}, model expects {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HeadKind {
    Translation,
    Regression,
    TranslationClass,
    RotationClass,
}

#[derive(Debug, Clone)]
struct ConvStage {
    c_in: usize,
    c_out: usize,
    /// Input side (output side before pooling is the same).
    n: usize,
    weights: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct DenseHead {
    kind: HeadKind,
    out: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub(crate) struct Trace {
    padded: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
    features: Vec<f64>,
    hidden: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorModel {
    arch: Architecture,
    mode: RegressionMode,
    heads: ClassHeads,
    input_mode: InputMode,
    params: Vec<f64>,
}

impl RegressorModel {
    /// A model with every parameter zero.
    pub fn zeroed(
        arch: Architecture,
        mode: RegressionMode,
        heads: ClassHeads,
        input_mode: InputMode,
    ) -> Result<Self, ModelError> {
        arch.validate()?;
        if mode != RegressionMode::Quat && (heads.translation || heads.rotation) {
            return Err(ModelError::HeadsNeedQuat(mode));
        }
        let mut m = Self { arch, mode, heads, input_mode, params: Vec::new() };
        m.params = vec![0.0; m.layout().2];
        Ok(m)
    }

    /// Weights drawn from `N(0, std²)`, biases zero. Values are rounded to
    /// `f32` so a checkpoint stores them exactly.
    pub fn random<R: Rng + ?Sized>(
        arch: Architecture,
        mode: RegressionMode,
        heads: ClassHeads,
        input_mode: InputMode,
        std: f64,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let mut m = Self::zeroed(arch, mode, heads, input_mode)?;
        let normal = Normal::new(0.0, std).map_err(|e| ModelError::Architecture(format!("init std: {e}")))?;
        let (stages, dense, _) = m.layout();
        let mut fill = |start: usize, len: usize, params: &mut [f64]| {
            for p in &mut params[start..start + len] {
                *p = normal.sample(rng) as f32 as f64;
            }
        };
        for st in &stages {
            fill(st.weights, st.c_out * st.c_in * 9, &mut m.params);
        }
        let feat = m.feature_len();
        let h = m.arch.head_width;
        for d in &dense {
            fill(d.w1, h * feat, &mut m.params);
            fill(d.w2, d.out * h, &mut m.params);
        }
        Ok(m)
    }

    pub fn from_params(
        arch: Architecture,
        mode: RegressionMode,
        heads: ClassHeads,
        input_mode: InputMode,
        params: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let mut m = Self::zeroed(arch, mode, heads, input_mode)?;
        m.set_params(params)?;
        Ok(m)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn mode(&self) -> RegressionMode {
        self.mode
    }

    pub fn heads(&self) -> ClassHeads {
        self.heads
    }

    pub fn channels(&self) -> usize {
        self.input_mode.channels()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<(), ModelError> {
        if params.len() != self.params.len() {
            return Err(ModelError::ParamCount { expected: self.params.len(), got: params.len() });
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(ModelError::NonFinite(i));
        }
        self.params = params;
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn feature_len(&self) -> usize {
        let f = self.arch.feature_side();
        self.arch.conv_channels.last().copied().unwrap_or(0) * f * f
    }

    fn head_kinds(&self) -> Vec<(HeadKind, usize)> {
        let mut k = Vec::with_capacity(4);
        if self.mode.has_translation_head() {
            k.push((HeadKind::Translation, 3));
        }
        k.push((HeadKind::Regression, self.mode.regression_len()));
        if self.heads.translation {
            k.push((HeadKind::TranslationClass, 6));
        }
        if self.heads.rotation {
            k.push((HeadKind::RotationClass, 6));
        }
        k
    }

    /// Parameter offsets; the layout is a pure function of the architecture.
    fn layout(&self) -> (Vec<ConvStage>, Vec<DenseHead>, usize) {
        let mut off = 0;
        let mut stages = Vec::with_capacity(self.arch.conv_channels.len());
        let mut c_in = self.channels();
        let mut n = self.arch.input_size;
        for &c_out in &self.arch.conv_channels {
            let weights = off;
            off += c_out * c_in * 9;
            let bias = off;
            off += c_out;
            stages.push(ConvStage { c_in, c_out, n, weights, bias });
            c_in = c_out;
            n /= 2;
        }
        let feat = self.feature_len();
        let h = self.arch.head_width;
        let mut dense = Vec::new();
        for (kind, out) in self.head_kinds() {
            let w1 = off;
            let b1 = w1 + h * feat;
            let w2 = b1 + h;
            let b2 = w2 + out * h;
            off = b2 + out;
            dense.push(DenseHead { kind, out, w1, b1, w2, b2 });
        }
        (stages, dense, off)
    }

    fn check_input(&self, images: &[PlaneImage]) -> Result<(), PredictError> {
        let s = self.arch.input_size;
        let size = images.first().map_or(0, PlaneImage::size);
        if images.len() != self.channels() || images.iter().any(|im| im.size() != s) {
            return Err(PredictError::InputShape {
                expected_channels: self.channels(),
                expected_size: s,
                channels: images.len(),
                size,
            });
        }
        Ok(())
    }

    pub(crate) fn trace(&self, images: &[PlaneImage]) -> Result<Trace, PredictError> {
        self.check_input(images)?;
        let (stages, dense, _) = self.layout();
        let p = &self.params;
        let mut t = Trace {
            padded: Vec::with_capacity(stages.len()),
            pre: Vec::with_capacity(stages.len()),
            argmax: Vec::with_capacity(stages.len()),
            features: Vec::new(),
            hidden: Vec::with_capacity(dense.len()),
            outputs: Vec::with_capacity(dense.len()),
        };

        let s = self.arch.input_size;
        let mut padded = vec![0.0; images.len() * (s + 2) * (s + 2)];
        for (c, im) in images.iter().enumerate() {
            pad_into(im.pixels(), s, &mut padded[c * (s + 2) * (s + 2)..]);
        }
        for (k, st) in stages.iter().enumerate() {
            let mut pre = vec![0.0; st.c_out * st.n * st.n];
            conv_forward(p, st, &padded, &mut pre);
            let (pooled, arg) = relu_pool(&pre, st.c_out, st.n);
            let m = st.n / 2;
            let next = if k + 1 < stages.len() {
                let mut np = vec![0.0; st.c_out * (m + 2) * (m + 2)];
                for c in 0..st.c_out {
                    pad_into(&pooled[c * m * m..(c + 1) * m * m], m, &mut np[c * (m + 2) * (m + 2)..]);
                }
                np
            } else {
                t.features = pooled;
                Vec::new()
            };
            t.padded.push(std::mem::replace(&mut padded, next));
            t.pre.push(pre);
            t.argmax.push(arg);
        }

        let h = self.arch.head_width;
        let feat = &t.features;
        for d in &dense {
            let hidden: Vec<f64> = (0..h)
                .map(|j| (p[d.b1 + j] + dot(&p[d.w1 + j * feat.len()..][..feat.len()], feat)).max(0.0))
                .collect();
            let out: Vec<f64> = (0..d.out).map(|o| p[d.b2 + o] + dot(&p[d.w2 + o * h..][..h], &hidden)).collect();
            t.hidden.push(hidden);
            t.outputs.push(out);
        }
        Ok(t)
    }

    /// Output multiplier of a head: voxel-valued heads are scaled.
    fn head_scale(&self, kind: HeadKind) -> f64 {
        match kind {
            HeadKind::Translation => self.arch.translation_scale,
            HeadKind::Regression if self.mode == RegressionMode::Anchors => self.arch.translation_scale,
            _ => 1.0,
        }
    }

    fn output_from(&self, outputs: &[Vec<f64>]) -> PredictorOutput {
        let (_, dense, _) = self.layout();
        let mut t = Vec3::ZERO;
        let mut reg = Vec::new();
        let (mut p, mut q) = (None, None);
        for (d, o) in dense.iter().zip(outputs) {
            let k = self.head_scale(d.kind);
            match d.kind {
                HeadKind::Translation => t = Vec3::new(k * o[0], k * o[1], k * o[2]),
                HeadKind::Regression => reg = o.iter().map(|v| k * v).collect(),
                HeadKind::TranslationClass => p = Some(softmax(&six(o))),
                HeadKind::RotationClass => q = Some(softmax(&six(o))),
            }
        }
        let pose = match self.mode {
            RegressionMode::Quat => RawPose::Quaternion { t, q: [reg[0], reg[1], reg[2], reg[3]] },
            RegressionMode::Euler => RawPose::Euler { t, radians: [reg[0], reg[1], reg[2]] },
            RegressionMode::Matrix => RawPose::Matrix { t, r: reg.as_slice().try_into().expect("9 outputs") },
            RegressionMode::Anchors => RawPose::Anchors(reg.as_slice().try_into().expect("9 outputs")),
        };
        PredictorOutput { pose, p, q }
    }

    pub fn forward(&self, images: &[PlaneImage]) -> Result<PredictorOutput, PredictError> {
        Ok(self.output_from(&self.trace(images)?.outputs))
    }

    /// Evaluates the loss on one sample and adds its parameter gradient to `grad`.
    pub fn accumulate_gradient(
        &self,
        images: &[PlaneImage],
        target: &LossTarget,
        weights: &LossWeights,
        grad: &mut [f64],
    ) -> Result<LossBreakdown, PredictError> {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer length");
        let trace = self.trace(images)?;
        let out = self.output_from(&trace.outputs);
        let eval = loss::evaluate(&out, target, weights);
        let (_, dense, _) = self.layout();
        let d_out: Vec<Vec<f64>> = dense
            .iter()
            .map(|d| {
                let g = match d.kind {
                    HeadKind::Translation => eval.gradients.translation.to_vec(),
                    HeadKind::Regression => eval.gradients.regression.clone(),
                    HeadKind::TranslationClass => eval.gradients.p_logits.expect("P head present").to_vec(),
                    HeadKind::RotationClass => eval.gradients.q_logits.expect("Q head present").to_vec(),
                };
                let k = self.head_scale(d.kind);
                g.into_iter().map(|v| k * v).collect()
            })
            .collect();
        self.backward(&trace, &d_out, grad);
        Ok(eval.breakdown)
    }

    fn backward(&self, t: &Trace, d_out: &[Vec<f64>], grad: &mut [f64]) {
        let (stages, dense, _) = self.layout();
        let p = &self.params;
        let h = self.arch.head_width;
        let feat = &t.features;
        let mut d_feat = vec![0.0; feat.len()];
        for (k, d) in dense.iter().enumerate() {
            let hidden = &t.hidden[k];
            let mut d_hidden = vec![0.0; h];
            for (o, &g) in d_out[k].iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grad[d.b2 + o] += g;
                for j in 0..h {
                    grad[d.w2 + o * h + j] += g * hidden[j];
                    d_hidden[j] += p[d.w2 + o * h + j] * g;
                }
            }
            for j in 0..h {
                if hidden[j] <= 0.0 || d_hidden[j] == 0.0 {
                    continue;
                }
                let g = d_hidden[j];
                grad[d.b1 + j] += g;
                let row = d.w1 + j * feat.len();
                for i in 0..feat.len() {
                    grad[row + i] += g * feat[i];
                    d_feat[i] += p[row + i] * g;
                }
            }
        }

        let mut d_pooled = d_feat;
        for (k, st) in stages.iter().enumerate().rev() {
            let pre = &t.pre[k];
            let mut d_pre = vec![0.0; pre.len()];
            for (i, &a) in t.argmax[k].iter().enumerate() {
                if pre[a] > 0.0 {
                    d_pre[a] += d_pooled[i];
                }
            }
            let want_input = k > 0;
            let pw = st.n + 2;
            let mut d_padded = if want_input { vec![0.0; st.c_in * pw * pw] } else { Vec::new() };
            conv_backward(p, st, &t.padded[k], &d_pre, grad, want_input.then_some(d_padded.as_mut_slice()));
            if want_input {
                let n = st.n;
                let mut d_in = vec![0.0; st.c_in * n * n];
                for c in 0..st.c_in {
                    for y in 0..n {
                        let src = &d_padded[c * pw * pw + (y + 1) * pw + 1..][..n];
                        d_in[c * n * n + y * n..][..n].copy_from_slice(src);
                    }
                }
                d_pooled = d_in;
            }
        }
    }
}

impl Predictor for RegressorModel {
    fn input_mode(&self) -> InputMode {
        self.input_mode
    }

    fn predict(&self, input: &PredictionInput<'_>) -> Result<PredictorOutput, PredictError> {
        self.forward(input.images)
    }
}

fn six(v: &[f64]) -> [f64; 6] {
    v.try_into().expect("classification head has 6 outputs")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Copies an `n × n` plane into the interior of an `(n+2) × (n+2)` zero border.
fn pad_into(src: &[f64], n: usize, dst: &mut [f64]) {
    let pw = n + 2;
    for y in 0..n {
        dst[(y + 1) * pw + 1..][..n].copy_from_slice(&src[y * n..(y + 1) * n]);
    }
}

fn conv_forward(p: &[f64], st: &ConvStage, padded: &[f64], out: &mut [f64]) {
    let n = st.n;
    let pw = n + 2;
    for oc in 0..st.c_out {
        let o = &mut out[oc * n * n..(oc + 1) * n * n];
        o.fill(p[st.bias + oc]);
        for ic in 0..st.c_in {
            let src = &padded[ic * pw * pw..(ic + 1) * pw * pw];
            let w = &p[st.weights + (oc * st.c_in + ic) * 9..][..9];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wk = w[ky * 3 + kx];
                    for y in 0..n {
                        let row = &src[(y + ky) * pw + kx..][..n];
                        for (a, b) in o[y * n..(y + 1) * n].iter_mut().zip(row) {
                            *a += wk * b;
                        }
                    }
                }
            }
        }
    }
}

fn conv_backward(p: &[f64], st: &ConvStage, padded: &[f64], d_out: &[f64], grad: &mut [f64], mut d_padded: Option<&mut [f64]>) {
    let n = st.n;
    let pw = n + 2;
    for oc in 0..st.c_out {
        let d = &d_out[oc * n * n..(oc + 1) * n * n];
        grad[st.bias + oc] += d.iter().sum::<f64>();
        for ic in 0..st.c_in {
            let src = &padded[ic * pw * pw..(ic + 1) * pw * pw];
            let wi = st.weights + (oc * st.c_in + ic) * 9;
            for ky in 0..3 {
                for kx in 0..3 {
                    let mut acc = 0.0;
                    for y in 0..n {
                        acc += dot(&src[(y + ky) * pw + kx..][..n], &d[y * n..(y + 1) * n]);
                    }
                    grad[wi + ky * 3 + kx] += acc;
                    if let Some(dp) = d_padded.as_deref_mut() {
                        let wk = p[wi + ky * 3 + kx];
                        let dst = &mut dp[ic * pw * pw..(ic + 1) * pw * pw];
                        for y in 0..n {
                            for (a, b) in dst[(y + ky) * pw + kx..][..n].iter_mut().zip(&d[y * n..(y + 1) * n]) {
                                *a += wk * b;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// ReLU followed by 2×2 max-pool (floor). Returns pooled values and, for each,
/// the index into `pre` it came from (first maximum in raster order).
fn relu_pool(pre: &[f64], channels: usize, n: usize) -> (Vec<f64>, Vec<usize>) {
    let m = n / 2;
    let mut pooled = Vec::with_capacity(channels * m * m);
    let mut arg = Vec::with_capacity(channels * m * m);
    for c in 0..channels {
        let base = c * n * n;
        for py in 0..m {
            for px in 0..m {
                let mut best = base + 2 * py * n + 2 * px;
                let mut best_v = pre[best].max(0.0);
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * py + dy) * n + 2 * px + dx;
                    let v = pre[i].max(0.0);
                    if v > best_v {
                        best = i;
                        best_v = v;
                    }
                }
                pooled.push(best_v);
                arg.push(best);
            }
        }
    }
    (pooled, arg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn image(s: usize, rng: &mut impl Rng) -> PlaneImage {
        PlaneImage::new(s, (0..s * s).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn default_architecture_has_one_pixel_features() {
        let a = Architecture::default();
        assert_eq!(a.feature_side(), 1);
        assert!(Architecture { input_size: 16, ..a.clone() }.validate().is_err());
    }

    #[test]
    fn zero_network_gives_zero_regression_and_uniform_probabilities() {
        let m = RegressorModel::zeroed(Architecture::default(), RegressionMode::Quat, ClassHeads::BOTH, InputMode::Single)
            .unwrap();
        let out = m.forward(&[PlaneImage::new(32, vec![0.0; 1024]).unwrap()]).unwrap();
        assert_eq!(out.pose, RawPose::Quaternion { t: Vec3::ZERO, q: [0.0; 4] });
        assert_eq!(out.p, Some([1.0 / 6.0; 6]));
        assert_eq!(out.q, Some([1.0 / 6.0; 6]));
    }

    #[test]
    fn class_heads_rejected_outside_quat_mode() {
        let r = RegressorModel::zeroed(Architecture::default(), RegressionMode::Euler, ClassHeads::BOTH, InputMode::Single);
        assert!(matches!(r, Err(ModelError::HeadsNeedQuat(RegressionMode::Euler))));
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let m = RegressorModel::zeroed(Architecture::default(), RegressionMode::Quat, ClassHeads::NONE, InputMode::Triplet)
            .unwrap();
        let one = PlaneImage::new(32, vec![0.0; 1024]).unwrap();
        assert!(matches!(m.forward(std::slice::from_ref(&one)), Err(PredictError::InputShape { .. })));
        let small = PlaneImage::new(16, vec![0.0; 256]).unwrap();
        assert!(m.forward(&[small.clone(), small.clone(), small]).is_err());
        assert!(m.forward(&[one.clone(), one.clone(), one]).is_ok());
    }

    #[test]
    fn random_model_is_finite_deterministic_and_normalized() {
        let mut rng = stream_rng(5, 0);
        let m = RegressorModel::random(
            Architecture::default(),
            RegressionMode::Quat,
            ClassHeads::BOTH,
            InputMode::Single,
            0.1,
            &mut rng,
        )
        .unwrap();
        assert!(m.params().iter().all(|&p| p == p as f32 as f64));
        let x = [image(32, &mut rng)];
        let a = m.forward(&x).unwrap();
        assert_eq!(a, m.forward(&x).unwrap());
        let RawPose::Quaternion { t, q } = a.pose else { unreachable!() };
        assert!(t.is_finite() && q.iter().all(|v| v.is_finite()));
        for probs in [a.p.unwrap(), a.q.unwrap()] {
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(probs.iter().all(|&v| v > 0.0));
        }
    }
}
