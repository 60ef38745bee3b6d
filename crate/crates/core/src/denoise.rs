//! Pluggable image denoisers: a normalized gaussian smoother (provably
//! passive, symmetric, gain <= 1), weight-file-driven small CNNs (direct or
//! residual), and a patch-based wrapper that denoises overlapping patches and
//! recombines by uniform averaging.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{DynamicObject, ImageFrame};

const WEIGHT_MAGIC: &[u8; 6] = b"RPDN1\0";

/// Whether a CNN predicts the clean image directly or the noise residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CnnMode {
    Direct,
    Residual,
}

/// One 2-D convolution layer with bias. Kernels are stored row-major,
/// out-channel major: [out][in][kh][kw].
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub kernel: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Ordered convolution layers with rectified-linear interior activations and
/// a linear single-channel output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnWeights {
    pub mode: CnnMode,
    pub layers: Vec<ConvLayer>,
}

impl CnnWeights {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Format("CNN has no layers".into()));
        }
        if self.layers[0].in_ch != 1 {
            return Err(Error::Format("first layer must have in_ch = 1".into()));
        }
        if self.layers.last().unwrap().out_ch != 1 {
            return Err(Error::Format("last layer must have out_ch = 1".into()));
        }
        let mut prev_out = 1;
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_ch != prev_out {
                return Err(Error::Format(format!(
                    "layer {i}: in_ch = {} does not chain from previous out_ch = {prev_out}",
                    l.in_ch
                )));
            }
            if l.kh % 2 == 0 || l.kw % 2 == 0 {
                return Err(Error::Format(format!(
                    "layer {i}: kernel {}x{} must be odd for same padding",
                    l.kh, l.kw
                )));
            }
            if l.kernel.len() != l.out_ch * l.in_ch * l.kh * l.kw {
                return Err(Error::Format(format!("layer {i}: kernel length mismatch")));
            }
            if l.bias.len() != l.out_ch {
                return Err(Error::Format(format!("layer {i}: bias length mismatch")));
            }
            if !l.kernel.iter().all(|v| v.is_finite()) || !l.bias.iter().all(|v| v.is_finite()) {
                return Err(Error::Format(format!("layer {i}: non-finite weights")));
            }
            prev_out = l.out_ch;
        }
        Ok(())
    }
}

/// Denoiser flavor plus parameters.
#[derive(Clone, Debug)]
pub enum DenoiserKind {
    /// Normalized gaussian convolution under reflective boundary handling.
    Gaussian { sigma: f64 },
    /// Forward pass of a small serialized CNN.
    Cnn(CnnWeights),
    /// Apply the inner denoiser to overlapping patches of size `patch` with
    /// stride `stride`; overlaps recombined by uniform averaging.
    Patched {
        inner: Box<Denoiser>,
        patch: usize,
        stride: usize,
    },
}

/// A configured denoiser D with optional Lipschitz metadata.
#[derive(Clone, Debug)]
pub struct Denoiser {
    pub kind: DenoiserKind,
    /// Caller-provided Lipschitz bound L_D, used where a bound is required
    /// and none can be proven.
    pub lipschitz_hint: Option<f64>,
}

impl Denoiser {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParam(format!(
                "gaussian denoiser: sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self {
            kind: DenoiserKind::Gaussian { sigma },
            lipschitz_hint: None,
        })
    }

    pub fn cnn(weights: CnnWeights) -> Result<Self> {
        weights.validate()?;
        Ok(Self {
            kind: DenoiserKind::Cnn(weights),
            lipschitz_hint: None,
        })
    }

    pub fn patched(inner: Denoiser, patch: usize, stride: usize) -> Result<Self> {
        if patch == 0 || stride == 0 || stride > patch {
            return Err(Error::InvalidParam(format!(
                "patched denoiser: need 1 <= stride <= patch, got patch {patch}, stride {stride}"
            )));
        }
        Ok(Self {
            kind: DenoiserKind::Patched {
                inner: Box::new(inner),
                patch,
                stride,
            },
            lipschitz_hint: None,
        })
    }

    pub fn with_lipschitz_hint(mut self, l: f64) -> Self {
        self.lipschitz_hint = Some(l);
        self
    }

    /// A usable bound on the operator gain L_D: exact 1 for the gaussian kind
    /// (normalized non-negative kernel), otherwise the hint.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match &self.kind {
            DenoiserKind::Gaussian { .. } => Some(1.0),
            _ => self.lipschitz_hint,
        }
    }

    /// Apply D to one frame.
    pub fn apply(&self, frame: &ImageFrame) -> Result<ImageFrame> {
        let out = self.apply_raw(frame.as_slice(), frame.n())?;
        ImageFrame::from_vec(frame.n(), out)
    }

    /// Apply D to every column of a dynamic object (parallel over t).
    pub fn apply_dynamic(&self, f: &DynamicObject) -> Result<DynamicObject> {
        let n = f.n();
        let cols: Vec<Result<Vec<f64>>> = (0..f.p())
            .into_par_iter()
            .map(|t| self.apply_raw(f.frame_slice(t), n))
            .collect();
        let mut out = DynamicObject::zeros(n, f.p());
        for (t, col) in cols.into_iter().enumerate() {
            out.data_mut().column_mut(t).copy_from_slice(&col?);
        }
        Ok(out)
    }

    pub(crate) fn apply_raw(&self, data: &[f64], n: usize) -> Result<Vec<f64>> {
        match &self.kind {
            DenoiserKind::Gaussian { sigma } => Ok(gaussian_blur(data, n, *sigma)),
            DenoiserKind::Cnn(w) => cnn_forward(w, data, n),
            DenoiserKind::Patched {
                inner,
                patch,
                stride,
            } => denoise_patched_raw(inner, *patch, *stride, data, n),
        }
    }
}

/// Denoise one frame: same-shape output of the configured operator.
pub fn denoise(spec: &Denoiser, frame: &ImageFrame) -> Result<ImageFrame> {
    spec.apply(frame)
}

/// Patch-based application of the wrapper denoiser (spec must be `Patched`).
pub fn denoise_patched(spec: &Denoiser, frame: &ImageFrame) -> Result<ImageFrame> {
    match &spec.kind {
        DenoiserKind::Patched { .. } => spec.apply(frame),
        _ => Err(Error::InvalidParam(
            "denoise_patched requires a patched denoiser spec".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Gaussian kind
// ---------------------------------------------------------------------------

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * r)
        .map(|i| {
            let x = i as f64 - r as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Half-sample symmetric reflection of index i into [0, n).
#[inline]
fn reflect(mut i: i64, n: i64) -> usize {
    loop {
        if i < 0 {
            i = -1 - i;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable normalized gaussian convolution with half-sample symmetric
/// (reflective) boundary. With a symmetric kernel this extension makes the
/// induced operator symmetric with spectrum bounded by the kernel l1 norm,
/// hence gain <= 1.
fn gaussian_blur(data: &[f64], n: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let ni = n as i64;
    let mut tmp = vec![0.0; n * n];
    // rows
    for row in 0..n {
        for col in 0..n {
            let mut acc = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                let src = reflect(col as i64 + j as i64 - r, ni);
                acc += kv * data[row * n + src];
            }
            tmp[row * n + col] = acc;
        }
    }
    let mut out = vec![0.0; n * n];
    // columns
    for row in 0..n {
        for col in 0..n {
            let mut acc = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                let src = reflect(row as i64 + j as i64 - r, ni);
                acc += kv * tmp[src * n + col];
            }
            out[row * n + col] = acc;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// CNN kind
// ---------------------------------------------------------------------------

/// Zero-padded same-size convolution stack; ReLU between layers, last layer
/// linear. Residual mode returns input minus the network prediction.
fn cnn_forward(w: &CnnWeights, data: &[f64], n: usize) -> Result<Vec<f64>> {
    w.validate()?;
    let mut act: Vec<Vec<f64>> = vec![data.to_vec()];
    for (li, layer) in w.layers.iter().enumerate() {
        let last = li + 1 == w.layers.len();
        let (rh, rw) = ((layer.kh / 2) as i64, (layer.kw / 2) as i64);
        let mut next: Vec<Vec<f64>> = vec![vec![0.0; n * n]; layer.out_ch];
        for (oc, plane) in next.iter_mut().enumerate() {
            for r in 0..n as i64 {
                for c in 0..n as i64 {
                    let mut acc = layer.bias[oc] as f64;
                    for (ic, input) in act.iter().enumerate() {
                        let base = ((oc * layer.in_ch + ic) * layer.kh) * layer.kw;
                        for dr in 0..layer.kh as i64 {
                            let rr = r + dr - rh;
                            if rr < 0 || rr >= n as i64 {
                                continue;
                            }
                            for dc in 0..layer.kw as i64 {
                                let cc = c + dc - rw;
                                if cc < 0 || cc >= n as i64 {
                                    continue;
                                }
                                let kv = layer.kernel
                                    [base + (dr as usize) * layer.kw + dc as usize]
                                    as f64;
                                acc += kv * input[(rr * n as i64 + cc) as usize];
                            }
                        }
                    }
                    plane[(r * n as i64 + c) as usize] = if last { acc } else { acc.max(0.0) };
                }
            }
        }
        act = next;
    }
    let pred = act.into_iter().next().expect("single output channel");
    Ok(match w.mode {
        CnnMode::Direct => pred,
        CnnMode::Residual => data.iter().zip(&pred).map(|(x, e)| x - e).collect(),
    })
}

// ---------------------------------------------------------------------------
// Patched wrapper
// ---------------------------------------------------------------------------

/// Patch start offsets along one axis: stride steps from 0; when the stride
/// does not divide (len - patch), the frame is reflection-padded on the far
/// side so the last patch still fits.
fn patch_starts(len: usize, patch: usize, stride: usize) -> (Vec<usize>, usize) {
    let span = len - patch;
    let pad = (stride - span % stride) % stride;
    let padded = len + pad;
    let starts = (0..=(padded - patch)).step_by(stride).collect();
    (starts, padded)
}

fn denoise_patched_raw(
    inner: &Denoiser,
    patch: usize,
    stride: usize,
    data: &[f64],
    n: usize,
) -> Result<Vec<f64>> {
    if patch > n {
        return Err(Error::InvalidParam(format!(
            "patched denoiser: patch size {patch} exceeds frame size {n}"
        )));
    }
    let (starts, padded) = patch_starts(n, patch, stride);
    // Reflect-pad bottom/right edges so every patch is fully inside.
    let mut ext = vec![0.0; padded * padded];
    for r in 0..padded {
        let rr = reflect(r as i64, n as i64);
        for c in 0..padded {
            let cc = reflect(c as i64, n as i64);
            ext[r * padded + c] = data[rr * n + cc];
        }
    }
    let mut acc = vec![0.0; padded * padded];
    let mut cnt = vec![0.0; padded * padded];
    let mut buf = vec![0.0; patch * patch];
    for &r0 in &starts {
        for &c0 in &starts {
            for r in 0..patch {
                buf[r * patch..(r + 1) * patch].copy_from_slice(
                    &ext[(r0 + r) * padded + c0..(r0 + r) * padded + c0 + patch],
                );
            }
            let den = inner.apply_raw(&buf, patch)?;
            for r in 0..patch {
                for c in 0..patch {
                    acc[(r0 + r) * padded + c0 + c] += den[r * patch + c];
                    cnt[(r0 + r) * padded + c0 + c] += 1.0;
                }
            }
        }
    }
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            out[r * n + c] = acc[r * padded + c] / cnt[r * padded + c];
        }
    }
    Ok(out)
}

/// Number of patch rows produced for a frame of side `n`.
pub fn patch_grid_len(n: usize, patch: usize, stride: usize) -> usize {
    patch_starts(n, patch, stride).0.len()
}

// ---------------------------------------------------------------------------
// Empirical operator metadata
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct LipschitzEstimate {
    /// Max sampled ratio ||D(f1) - D(f2)|| / ||f1 - f2||.
    pub sampled: f64,
    /// A provable bound when one exists (gaussian kind: 1).
    pub exact: Option<f64>,
}

/// Estimate the denoiser gain over random probe pairs and small random
/// perturbations of them.
pub fn estimate_lipschitz(
    spec: &Denoiser,
    n: usize,
    probes: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if probes == 0 {
        return Err(Error::InvalidParam("estimate_lipschitz: probes must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let f1: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
        let f2: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
        let fp: Vec<f64> = f1
            .iter()
            .map(|&v| v + 1e-3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for (a, b) in [(&f1, &f2), (&f1, &fp)] {
            let da = spec.apply_raw(a, n)?;
            let db = spec.apply_raw(b, n)?;
            let num = l2_diff(&da, &db);
            let den = l2_diff(a, b);
            if den > 0.0 {
                worst = worst.max(num / den);
            }
        }
    }
    Ok(LipschitzEstimate {
        sampled: worst,
        exact: spec.lipschitz_bound().filter(|_| matches!(spec.kind, DenoiserKind::Gaussian { .. })),
    })
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug)]
pub struct PassivityReport {
    /// Worst ||D(f)|| / ||f|| over the sample set (0 for zero frames).
    pub worst_ratio: f64,
    pub violations: usize,
    pub n_frames: usize,
}

impl PassivityReport {
    pub fn passive(&self) -> bool {
        self.violations == 0
    }
}

/// Check strong passivity ||D(f)|| <= ||f|| on each sample frame.
pub fn check_passivity(spec: &Denoiser, frames: &[ImageFrame]) -> Result<PassivityReport> {
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for f in frames {
        let d = spec.apply(f)?;
        let nf = f.norm();
        let ratio = if nf == 0.0 { 0.0 } else { d.norm() / nf };
        if ratio > 1.0 + 1e-12 {
            violations += 1;
        }
        worst = worst.max(ratio);
    }
    Ok(PassivityReport {
        worst_ratio: worst,
        violations,
        n_frames: frames.len(),
    })
}

// ---------------------------------------------------------------------------
// Weight file I/O
// ---------------------------------------------------------------------------
// Binary little-endian: magic "RPDN1\0", u32 layer_count, u8 mode (0 direct,
// 1 residual), then per layer u32 x 4 (out, in, kh, kw), f32 kernel
// (row-major, out-major), f32 bias[out].

pub fn save_weights(path: impl AsRef<Path>, w: &CnnWeights) -> Result<()> {
    w.validate()?;
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(WEIGHT_MAGIC);
    buf.extend_from_slice(&(w.layers.len() as u32).to_le_bytes());
    buf.push(match w.mode {
        CnnMode::Direct => 0,
        CnnMode::Residual => 1,
    });
    for l in &w.layers {
        for dim in [l.out_ch, l.in_ch, l.kh, l.kw] {
            buf.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &l.kernel {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &l.bias {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<CnnWeights> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut off = 0usize;
    let take = |off: &mut usize, k: usize| -> Result<&[u8]> {
        if *off + k > bytes.len() {
            return Err(Error::Format("weight file truncated".into()));
        }
        let s = &bytes[*off..*off + k];
        *off += k;
        Ok(s)
    };
    if take(&mut off, 6)? != WEIGHT_MAGIC {
        return Err(Error::Format("bad weight file magic".into()));
    }
    let layer_count = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
    let mode = match take(&mut off, 1)?[0] {
        0 => CnnMode::Direct,
        1 => CnnMode::Residual,
        m => return Err(Error::Format(format!("bad denoiser mode byte {m}"))),
    };
    if layer_count == 0 || layer_count > 1024 {
        return Err(Error::Format(format!("implausible layer count {layer_count}")));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
        }
        let [out_ch, in_ch, kh, kw] = dims;
        let klen = out_ch
            .checked_mul(in_ch)
            .and_then(|v| v.checked_mul(kh))
            .and_then(|v| v.checked_mul(kw))
            .ok_or_else(|| Error::Format("kernel size overflow".into()))?;
        let mut kernel = Vec::with_capacity(klen);
        for _ in 0..klen {
            kernel.push(f32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()));
        }
        let mut bias = Vec::with_capacity(out_ch);
        for _ in 0..out_ch {
            bias.push(f32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()));
        }
        layers.push(ConvLayer {
            out_ch,
            in_ch,
            kh,
            kw,
            kernel,
            bias,
        });
    }
    if off != bytes.len() {
        return Err(Error::Format("trailing bytes in weight file".into()));
    }
    let w = CnnWeights { mode, layers };
    w.validate()?;
    Ok(w)
}

/// A 1x1 identity network, handy for tests and as a neutral default.
pub fn identity_cnn() -> CnnWeights {
    CnnWeights {
        mode: CnnMode::Direct,
        layers: vec![ConvLayer {
            out_ch: 1,
            in_ch: 1,
            kh: 1,
            kw: 1,
            kernel: vec![1.0],
            bias: vec![0.0],
        }],
    }
}

/// A 1x1 scaling network D(f) = alpha f.
pub fn scaling_cnn(alpha: f32) -> CnnWeights {
    CnnWeights {
        mode: CnnMode::Direct,
        layers: vec![ConvLayer {
            out_ch: 1,
            in_ch: 1,
            kh: 1,
            kw: 1,
            kernel: vec![alpha],
            bias: vec![0.0],
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_frame(n: usize, seed: u64) -> ImageFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageFrame::from_fn(n, |_, _| rng.gen::<f64>() - 0.3)
    }

    #[test]
    fn tiny_sigma_is_identity() {
        let f = random_frame(12, 1);
        let d = Denoiser::gaussian(1e-6).unwrap();
        let out = d.apply(&f).unwrap();
        for (a, b) in out.as_slice().iter().zip(f.as_slice()) {
            assert_relative_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn constant_frame_is_fixed_point() {
        let f = ImageFrame::from_fn(10, |_, _| 0.7);
        let d = Denoiser::gaussian(1.5).unwrap();
        let out = d.apply(&f).unwrap();
        for v in out.as_slice() {
            assert_relative_eq!(*v, 0.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_operator_is_linear_and_symmetric() {
        let d = Denoiser::gaussian(1.0).unwrap();
        let f = random_frame(9, 2);
        let g = random_frame(9, 3);
        let df = d.apply(&f).unwrap();
        let dg = d.apply(&g).unwrap();
        // symmetry <D f, g> = <f, D g>
        assert_relative_eq!(
            df.data().dot(g.data()),
            f.data().dot(dg.data()),
            epsilon = 1e-10
        );
        // linearity
        let combo = ImageFrame::from_vec(
            9,
            f.as_slice()
                .iter()
                .zip(g.as_slice())
                .map(|(a, b)| 2.0 * a - 0.5 * b)
                .collect(),
        )
        .unwrap();
        let dc = d.apply(&combo).unwrap();
        for i in 0..81 {
            assert_relative_eq!(
                dc.as_slice()[i],
                2.0 * df.as_slice()[i] - 0.5 * dg.as_slice()[i],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn gaussian_is_passive_on_random_frames() {
        let d = Denoiser::gaussian(0.8).unwrap();
        let frames: Vec<_> = (0..100).map(|s| random_frame(8, s)).collect();
        let report = check_passivity(&d, &frames).unwrap();
        assert!(report.passive(), "worst ratio {}", report.worst_ratio);
        assert!(report.worst_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn passivity_of_zero_frame_is_zero_ratio() {
        let d = Denoiser::gaussian(1.0).unwrap();
        let report = check_passivity(&d, &[ImageFrame::zeros(8)]).unwrap();
        assert_eq!(report.worst_ratio, 0.0);
    }

    #[test]
    fn scaled_identity_violation_is_reported() {
        let mut w = scaling_cnn(1.1);
        w.mode = CnnMode::Direct;
        let d = Denoiser::cnn(w).unwrap();
        let report = check_passivity(&d, &[random_frame(8, 4)]).unwrap();
        assert_eq!(report.violations, 1);
        assert_relative_eq!(report.worst_ratio, 1.1f32 as f64, epsilon = 1e-12);
    }

    #[test]
    fn identity_cnn_is_identity() {
        let d = Denoiser::cnn(identity_cnn()).unwrap();
        let f = random_frame(7, 5);
        assert_eq!(d.apply(&f).unwrap().as_slice(), f.as_slice());
    }

    #[test]
    fn residual_zero_network_is_identity() {
        let w = CnnWeights {
            mode: CnnMode::Residual,
            layers: vec![ConvLayer {
                out_ch: 1,
                in_ch: 1,
                kh: 3,
                kw: 3,
                kernel: vec![0.0; 9],
                bias: vec![0.0],
            }],
        };
        let d = Denoiser::cnn(w).unwrap();
        let f = random_frame(6, 6);
        let out = d.apply(&f).unwrap();
        for (a, b) in out.as_slice().iter().zip(f.as_slice()) {
            assert_relative_eq!(a, b, epsilon = 1e-7);
        }
    }

    #[test]
    fn lipschitz_estimates() {
        let g = Denoiser::gaussian(1.2).unwrap();
        let est = estimate_lipschitz(&g, 8, 20, 11).unwrap();
        assert_eq!(est.exact, Some(1.0));
        assert!(est.sampled <= 1.0 + 1e-9);

        let id = Denoiser::cnn(identity_cnn()).unwrap();
        let est = estimate_lipschitz(&id, 8, 10, 12).unwrap();
        assert_relative_eq!(est.sampled, 1.0, epsilon = 1e-9);

        let half = Denoiser::cnn(scaling_cnn(0.5)).unwrap();
        let est = estimate_lipschitz(&half, 8, 10, 13).unwrap();
        assert_relative_eq!(est.sampled, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn patched_identity_inner_is_identity() {
        let f = random_frame(13, 7);
        for (patch, stride) in [(4, 2), (5, 5), (13, 13), (8, 3), (4, 1)] {
            let d = Denoiser::patched(Denoiser::cnn(identity_cnn()).unwrap(), patch, stride)
                .unwrap();
            let out = d.apply(&f).unwrap();
            for (a, b) in out.as_slice().iter().zip(f.as_slice()) {
                assert_relative_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn non_overlapping_patched_gaussian_equals_blockwise_oracle() {
        let n = 12;
        let (patch, sigma) = (4, 0.9);
        let f = random_frame(n, 8);
        let d = Denoiser::patched(Denoiser::gaussian(sigma).unwrap(), patch, patch).unwrap();
        let out = d.apply(&f).unwrap();
        // blockwise oracle
        let inner = Denoiser::gaussian(sigma).unwrap();
        let mut oracle = vec![0.0; n * n];
        for r0 in (0..n).step_by(patch) {
            for c0 in (0..n).step_by(patch) {
                let mut block = vec![0.0; patch * patch];
                for r in 0..patch {
                    for c in 0..patch {
                        block[r * patch + c] = f.get(r0 + r, c0 + c);
                    }
                }
                let den = inner.apply_raw(&block, patch).unwrap();
                for r in 0..patch {
                    for c in 0..patch {
                        oracle[(r0 + r) * n + c0 + c] = den[r * patch + c];
                    }
                }
            }
        }
        for (a, b) in out.as_slice().iter().zip(&oracle) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn paper_patch_grid_size() {
        // 8x8 patches with stride 2 tile a 128-pixel side into 61 rows.
        assert_eq!(patch_grid_len(128, 8, 2), 61);
    }

    #[test]
    fn patch_larger_than_frame_is_rejected() {
        let d = Denoiser::patched(Denoiser::gaussian(1.0).unwrap(), 16, 2).unwrap();
        assert!(d.apply(&ImageFrame::zeros(8)).is_err());
    }

    #[test]
    fn denoise_is_deterministic() {
        let d = Denoiser::gaussian(1.3).unwrap();
        let f = random_frame(10, 9);
        let a = d.apply(&f).unwrap();
        let b = d.apply(&f).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn weight_file_roundtrip_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let w = CnnWeights {
            mode: CnnMode::Residual,
            layers: vec![
                ConvLayer {
                    out_ch: 3,
                    in_ch: 1,
                    kh: 3,
                    kw: 3,
                    kernel: (0..27).map(|_| rng.gen::<f32>() - 0.5).collect(),
                    bias: (0..3).map(|_| rng.gen::<f32>()).collect(),
                },
                ConvLayer {
                    out_ch: 1,
                    in_ch: 3,
                    kh: 1,
                    kw: 1,
                    kernel: (0..3).map(|_| rng.gen::<f32>()).collect(),
                    bias: vec![rng.gen::<f32>()],
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.rpdn");
        save_weights(&path, &w).unwrap();
        let loaded = load_weights(&path).unwrap();
        assert_eq!(w, loaded);
    }

    #[test]
    fn truncated_weight_file_is_rejected() {
        let w = identity_cnn();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.rpdn");
        save_weights(&path, &w).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_weights(&path), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.rpdn");
        std::fs::write(&path, b"NOPE!\0rest").unwrap();
        assert!(load_weights(&path).is_err());
    }

    #[test]
    fn identity_weight_file_acts_as_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("id.rpdn");
        save_weights(&path, &identity_cnn()).unwrap();
        let d = Denoiser::cnn(load_weights(&path).unwrap()).unwrap();
        let f = random_frame(5, 30);
        assert_eq!(d.apply(&f).unwrap().as_slice(), f.as_slice());
    }

    #[test]
    fn mismatched_chain_is_rejected() {
        let w = CnnWeights {
            mode: CnnMode::Direct,
            layers: vec![
                ConvLayer {
                    out_ch: 2,
                    in_ch: 1,
                    kh: 1,
                    kw: 1,
                    kernel: vec![1.0, 1.0],
                    bias: vec![0.0, 0.0],
                },
                ConvLayer {
                    out_ch: 1,
                    in_ch: 3, // does not chain
                    kh: 1,
                    kw: 1,
                    kernel: vec![1.0, 1.0, 1.0],
                    bias: vec![0.0],
                },
            ],
        };
        assert!(w.validate().is_err());
    }
}
