//! Reconstruction quality metrics: PSNR, single-scale SSIM, MAE, and the
//! high-frequency error norm (L2 norm of the Laplacian-of-Gaussian filtered
//! difference).

use crate::error::{Error, Result};
use crate::image::{DynamicObject, ImageFrame};

/// Reported PSNR for a zero-MSE (identical) pair.
pub const PSNR_CAP_DB: f64 = 99.0;

fn check_shapes(a: &ImageFrame, b: &ImageFrame, what: &'static str) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::shape(what, a.n(), b.n()));
    }
    Ok(())
}

/// 10 log10(peak^2 / MSE) in dB; `peak` defaults to the max of the reference.
/// Identical frames report the documented cap of 99 dB.
pub fn psnr(reference: &ImageFrame, estimate: &ImageFrame, peak: Option<f64>) -> Result<f64> {
    check_shapes(reference, estimate, "psnr")?;
    let peak = peak.unwrap_or_else(|| reference.max());
    if !(peak > 0.0) {
        return Err(Error::InvalidParam(format!("psnr: peak must be positive, got {peak}")));
    }
    let n2 = reference.len() as f64;
    let mse: f64 = reference
        .as_slice()
        .iter()
        .zip(estimate.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n2;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size * size)
        .map(|i| {
            let y = (i / size) as f64 - r;
            let x = (i % size) as f64 - r;
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    for v in &mut w {
        *v /= s;
    }
    w
}

/// Standard single-scale SSIM: 11 x 11 gaussian window (sigma 1.5),
/// k1 = 0.01, k2 = 0.03 on the reference dynamic range, averaged over all
/// fully-interior window positions.
pub fn ssim(reference: &ImageFrame, estimate: &ImageFrame) -> Result<f64> {
    check_shapes(reference, estimate, "ssim")?;
    const WIN: usize = 11;
    let n = reference.n();
    if n < WIN {
        return Err(Error::InvalidParam(format!(
            "ssim: frame side {n} smaller than the {WIN}-pixel window"
        )));
    }
    let l = (reference.max() - reference.min()).max(1e-9);
    let c1 = (0.01 * l) * (0.01 * l);
    let c2 = (0.03 * l) * (0.03 * l);
    let w = gaussian_window(WIN, 1.5);
    let x = reference.as_slice();
    let y = estimate.as_slice();
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=(n - WIN) {
        for c0 in 0..=(n - WIN) {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dr in 0..WIN {
                for dc in 0..WIN {
                    let wv = w[dr * WIN + dc];
                    let xv = x[(r0 + dr) * n + c0 + dc];
                    let yv = y[(r0 + dr) * n + c0 + dc];
                    mx += wv * xv;
                    my += wv * yv;
                    sxx += wv * xv * xv;
                    syy += wv * yv * yv;
                    sxy += wv * xv * yv;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cxy = sxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean absolute error.
pub fn mae(reference: &ImageFrame, estimate: &ImageFrame) -> Result<f64> {
    check_shapes(reference, estimate, "mae")?;
    Ok(reference
        .as_slice()
        .iter()
        .zip(estimate.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / reference.len() as f64)
}

/// Rotationally symmetric Laplacian-of-Gaussian kernel (zero-sum, as in the
/// common fspecial construction), sigma in pixels.
fn log_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let s2 = sigma * sigma;
    let mut g = vec![0.0; size * size];
    let mut gsum = 0.0;
    for i in 0..size * size {
        let y = (i / size) as f64 - r;
        let x = (i % size) as f64 - r;
        let e = (-(x * x + y * y) / (2.0 * s2)).exp();
        g[i] = e;
        gsum += e;
    }
    let mut h = vec![0.0; size * size];
    for i in 0..size * size {
        let y = (i / size) as f64 - r;
        let x = (i % size) as f64 - r;
        h[i] = (x * x + y * y - 2.0 * s2) / (s2 * s2) * g[i] / gsum;
    }
    let mean: f64 = h.iter().sum::<f64>() / (size * size) as f64;
    for v in &mut h {
        *v -= mean;
    }
    h
}

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

fn convolve_reflect(data: &[f64], n: usize, kernel: &[f64], size: usize) -> Vec<f64> {
    let r = (size / 2) as i64;
    let ni = n as i64;
    let mut out = vec![0.0; n * n];
    for row in 0..ni {
        for col in 0..ni {
            let mut acc = 0.0;
            for dr in 0..size as i64 {
                let rr = reflect(row + dr - r, ni);
                for dc in 0..size as i64 {
                    let cc = reflect(col + dc - r, ni);
                    acc += kernel[(dr * size as i64 + dc) as usize] * data[rr * n + cc];
                }
            }
            out[(row * ni + col) as usize] = acc;
        }
    }
    out
}

/// High-frequency error norm: || LoG(ref) - LoG(est) ||_2 with a 15 x 15
/// LoG kernel of sigma = 1.5 px under reflective boundary handling.
pub fn hfen(reference: &ImageFrame, estimate: &ImageFrame) -> Result<f64> {
    check_shapes(reference, estimate, "hfen")?;
    const SIZE: usize = 15;
    let k = log_kernel(SIZE, 1.5);
    let n = reference.n();
    let fr = convolve_reflect(reference.as_slice(), n, &k, SIZE);
    let fe = convolve_reflect(estimate.as_slice(), n, &k, SIZE);
    Ok(fr
        .iter()
        .zip(&fe)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Which reference frame the PSNR peak is taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PeakMode {
    /// Max of the whole reference sequence (default).
    #[default]
    Sequence,
    /// Max of each reference frame separately.
    Frame,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FrameMetrics {
    pub psnr: f64,
    pub ssim: f64,
    pub mae: f64,
    pub hfen: f64,
}

/// Per-frame metrics plus their means, with a free-form method label.
#[derive(Clone, Debug)]
pub struct MetricsReport {
    pub label: String,
    pub per_frame: Vec<FrameMetrics>,
    pub mean: FrameMetrics,
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,psnr,ssim,mae,hfen\n");
        for (t, m) in self.per_frame.iter().enumerate() {
            out.push_str(&format!("{},{},{},{},{}\n", t, m.psnr, m.ssim, m.mae, m.hfen));
        }
        let m = &self.mean;
        out.push_str(&format!("mean,{},{},{},{}\n", m.psnr, m.ssim, m.mae, m.hfen));
        out
    }
}

/// Evaluate all four metrics frame by frame.
pub fn evaluate_object(
    reference: &DynamicObject,
    estimate: &DynamicObject,
    label: impl Into<String>,
    peak_mode: PeakMode,
) -> Result<MetricsReport> {
    if reference.n() != estimate.n() || reference.p() != estimate.p() {
        return Err(Error::shape(
            "evaluate_object",
            format!("{} x {}", reference.n(), reference.p()),
            format!("{} x {}", estimate.n(), estimate.p()),
        ));
    }
    let seq_peak = reference
        .data()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut per_frame = Vec::with_capacity(reference.p());
    let mut mean = FrameMetrics::default();
    for t in 0..reference.p() {
        let fr = reference.frame(t)?;
        let fe = estimate.frame(t)?;
        let peak = match peak_mode {
            PeakMode::Sequence => Some(seq_peak),
            PeakMode::Frame => None,
        };
        let m = FrameMetrics {
            psnr: psnr(&fr, &fe, peak)?,
            ssim: ssim(&fr, &fe)?,
            mae: mae(&fr, &fe)?,
            hfen: hfen(&fr, &fe)?,
        };
        mean.psnr += m.psnr;
        mean.ssim += m.ssim;
        mean.mae += m.mae;
        mean.hfen += m.hfen;
        per_frame.push(m);
    }
    let p = reference.p() as f64;
    mean.psnr /= p;
    mean.ssim /= p;
    mean.mae /= p;
    mean.hfen /= p;
    Ok(MetricsReport {
        label: label.into(),
        per_frame,
        mean,
    })
}
