//! Dynamic phantom synthesis (sinusoidal row warp, time-varying affine
//! motion), view-angle scheduling (bit-reversed, reduced distinct views), and
//! noisy time-sequential acquisition.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::{DynamicObject, ImageFrame};
use crate::tomo::{project_dynamic, Sinogram};

/// Modified Shepp-Logan head phantom on an N x N grid, supported inside the
/// inscribed disc. Each pixel is rasterized by 4 x 4 supersampling so ellipse
/// edges are anti-aliased.
pub fn shepp_logan(n: usize) -> ImageFrame {
    // (a, b, x0, y0, phi degrees, value)
    const E: [(f64, f64, f64, f64, f64, f64); 10] = [
        (0.69, 0.92, 0.0, 0.0, 0.0, 1.0),
        (0.6624, 0.874, 0.0, -0.0184, 0.0, -0.8),
        (0.11, 0.31, 0.22, 0.0, -18.0, -0.2),
        (0.16, 0.41, -0.22, 0.0, 18.0, -0.2),
        (0.21, 0.25, 0.0, 0.35, 0.0, 0.1),
        (0.046, 0.046, 0.0, 0.1, 0.0, 0.1),
        (0.046, 0.046, 0.0, -0.1, 0.0, 0.1),
        (0.046, 0.023, -0.08, -0.605, 0.0, 0.1),
        (0.023, 0.023, 0.0, -0.606, 0.0, 0.1),
        (0.023, 0.046, 0.06, -0.605, 0.0, 0.1),
    ];
    const SS: usize = 4;
    let c0 = (n as f64 - 1.0) / 2.0;
    let half = n as f64 / 2.0;
    let point = |x: f64, y: f64| -> f64 {
        let mut v = 0.0;
        for (a, b, x0, y0, phi, val) in E {
            let t = phi.to_radians();
            let (ct, st) = (t.cos(), t.sin());
            let xr = (x - x0) * ct + (y - y0) * st;
            let yr = -(x - x0) * st + (y - y0) * ct;
            if xr * xr / (a * a) + yr * yr / (b * b) <= 1.0 {
                v += val;
            }
        }
        v.max(0.0)
    };
    ImageFrame::from_fn(n, |r, c| {
        let mut acc = 0.0;
        for sr in 0..SS {
            for sc in 0..SS {
                let dc = (sc as f64 + 0.5) / SS as f64 - 0.5;
                let dr = (sr as f64 + 0.5) / SS as f64 - 0.5;
                let x = (c as f64 + dc - c0) / half;
                let y = (c0 - r as f64 - dr) / half;
                acc += point(x, y);
            }
        }
        acc / (SS * SS) as f64
    })
}

/// Centered flat disc of the given radius fraction of N.
pub fn disc_phantom(n: usize, radius_frac: f64, value: f64) -> ImageFrame {
    let c0 = (n as f64 - 1.0) / 2.0;
    let r2 = (radius_frac * n as f64).powi(2);
    ImageFrame::from_fn(n, |r, c| {
        let x = c as f64 - c0;
        let y = c0 - r as f64;
        if x * x + y * y <= r2 {
            value
        } else {
            0.0
        }
    })
}

#[inline]
fn bilinear_sample(data: &[f64], n: usize, rr: f64, cc: f64) -> f64 {
    let (rf, cf) = (rr.floor(), cc.floor());
    let (wr, wc) = (rr - rf, cc - cf);
    let mut v = 0.0;
    for dr in 0..2i64 {
        for dc in 0..2i64 {
            let ri = rf as i64 + dr;
            let ci = cf as i64 + dc;
            if ri >= 0 && (ri as usize) < n && ci >= 0 && (ci as usize) < n {
                let w = if dr == 0 { 1.0 - wr } else { wr }
                    * if dc == 0 { 1.0 - wc } else { wc };
                v += w * data[ri as usize * n + ci as usize];
            }
        }
    }
    v
}

/// Sinusoidal piecewise-affine dynamic warp: at frame t the content of row
/// `row` is displaced vertically by
///   delta(row, t) = -C(t) sin(3 pi row / N),
/// with C linearly increasing from C(0) = 0 to c_max. Displaced rows are
/// deposited with linear (two-row) interpolation weights, so total mass is
/// conserved exactly while the content stays in frame, and frame 0 is the
/// input bit-exactly.
pub fn warp_phantom(frame: &ImageFrame, p: usize, c_max: f64) -> Result<DynamicObject> {
    if c_max < 0.0 || !c_max.is_finite() {
        return Err(Error::InvalidParam(format!(
            "warp_phantom: c_max must be finite and >= 0, got {c_max}"
        )));
    }
    if p == 0 {
        return Err(Error::InvalidParam("warp_phantom: p must be >= 1".into()));
    }
    let n = frame.n();
    if c_max >= n as f64 / 2.0 {
        log::warn!(
            "warp_phantom: peak displacement {c_max} px may push content out of the {n}-px frame"
        );
    }
    let mut out = DynamicObject::zeros(n, p);
    for t in 0..p {
        let c_t = if p == 1 {
            0.0
        } else {
            c_max * t as f64 / (p as f64 - 1.0)
        };
        if c_t == 0.0 {
            out.set_frame(t, frame)?;
            continue;
        }
        let mut data = vec![0.0; n * n];
        for r in 0..n {
            let delta = -c_t * (3.0 * std::f64::consts::PI * r as f64 / n as f64).sin();
            let rr = r as f64 + delta;
            let r0 = rr.floor();
            let w = rr - r0;
            let r0 = r0 as i64;
            for c in 0..n {
                let v = frame.get(r, c);
                if v == 0.0 {
                    continue;
                }
                if (0..n as i64).contains(&r0) {
                    data[r0 as usize * n + c] += v * (1.0 - w);
                }
                if w != 0.0 && (0..n as i64).contains(&(r0 + 1)) {
                    data[(r0 + 1) as usize * n + c] += v * w;
                }
            }
        }
        out.set_frame(t, &ImageFrame::from_vec(n, data)?)?;
    }
    Ok(out)
}

/// Per-frame affine motion parameters: rotation about the image center,
/// anisotropic scaling, then translation (pixels).
#[derive(Clone, Copy, Debug)]
pub struct AffineParams {
    pub translate: (f64, f64),
    pub scale: (f64, f64),
    pub rotate: f64,
}

impl AffineParams {
    pub fn identity() -> Self {
        Self {
            translate: (0.0, 0.0),
            scale: (1.0, 1.0),
            rotate: 0.0,
        }
    }

    fn is_identity(&self) -> bool {
        self.translate == (0.0, 0.0) && self.scale == (1.0, 1.0) && self.rotate == 0.0
    }
}

/// Dynamic object from one static frame under a time-varying affine
/// transformation, resampled bilinearly with zero outside.
pub fn affine_dynamic(frame: &ImageFrame, params: &[AffineParams]) -> Result<DynamicObject> {
    if params.is_empty() {
        return Err(Error::InvalidParam("affine_dynamic: empty parameter list".into()));
    }
    let n = frame.n();
    let c0 = (n as f64 - 1.0) / 2.0;
    let mut out = DynamicObject::zeros(n, params.len());
    for (t, prm) in params.iter().enumerate() {
        if prm.scale.0 == 0.0 || prm.scale.1 == 0.0 {
            return Err(Error::InvalidParam(format!(
                "affine_dynamic: singular scale at t = {t}"
            )));
        }
        if prm.is_identity() {
            out.set_frame(t, frame)?;
            continue;
        }
        let (cphi, sphi) = (prm.rotate.cos(), prm.rotate.sin());
        let fr = ImageFrame::from_fn(n, |r, c| {
            // output pixel in centered (x right, y up) coordinates
            let x = c as f64 - c0 - prm.translate.0;
            let y = c0 - r as f64 - prm.translate.1;
            // invert rotation then scaling
            let xr = (cphi * x + sphi * y) / prm.scale.0;
            let yr = (-sphi * x + cphi * y) / prm.scale.1;
            bilinear_sample(frame.as_slice(), n, c0 - yr, xr + c0)
        });
        out.set_frame(t, &fr)?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleScheme {
    BitReversed,
    Sequential,
}

/// P view angles in [0, pi) drawn from a grid of p_hat distinct values,
/// repeated periodically.
#[derive(Clone, Debug)]
pub struct AngleSchedule {
    pub angles: Vec<f64>,
    pub p_hat: usize,
    pub scheme: ScheduleScheme,
}

fn distinct_grid(p: usize, p_hat: usize) -> Result<()> {
    if p_hat == 0 || !p_hat.is_power_of_two() {
        return Err(Error::InvalidParam(format!(
            "p_hat = {p_hat} must be a power of two"
        )));
    }
    if p_hat > p {
        return Err(Error::InvalidParam(format!("p_hat = {p_hat} exceeds p = {p}")));
    }
    Ok(())
}

/// Bit-reversed schedule: the grid k pi / p_hat, k = 0..p_hat-1, visited in
/// bit-reversed index order and repeated periodically to length p.
pub fn bit_reversed_angles(p: usize, p_hat: usize) -> Result<AngleSchedule> {
    distinct_grid(p, p_hat)?;
    let bits = p_hat.trailing_zeros();
    let order: Vec<usize> = (0..p_hat)
        .map(|i| {
            if bits == 0 {
                0
            } else {
                i.reverse_bits() >> (usize::BITS - bits)
            }
        })
        .collect();
    let angles = (0..p)
        .map(|t| order[t % p_hat] as f64 * std::f64::consts::PI / p_hat as f64)
        .collect();
    Ok(AngleSchedule {
        angles,
        p_hat,
        scheme: ScheduleScheme::BitReversed,
    })
}

/// Sequential schedule over the same distinct grid.
pub fn sequential_angles(p: usize, p_hat: usize) -> Result<AngleSchedule> {
    distinct_grid(p, p_hat)?;
    let angles = (0..p)
        .map(|t| (t % p_hat) as f64 * std::f64::consts::PI / p_hat as f64)
        .collect();
    Ok(AngleSchedule {
        angles,
        p_hat,
        scheme: ScheduleScheme::Sequential,
    })
}

/// Time-sequential acquisition: g_t = project(f_t, theta_t) + eta_t with
/// i.i.d. Gaussian noise of standard deviation `sigma`, reproducible per seed.
pub fn acquire(f: &DynamicObject, sched: &AngleSchedule, sigma: f64, seed: u64) -> Result<Sinogram> {
    if sched.angles.len() != f.p() {
        return Err(Error::shape("acquire", f.p(), sched.angles.len()));
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidParam(format!("acquire: bad sigma {sigma}")));
    }
    let clean = project_dynamic(f, &sched.angles)?;
    if sigma == 0.0 {
        return Ok(clean);
    }
    let mut data = clean.data().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    // fixed draw order: time-major, bin-minor
    for t in 0..data.ncols() {
        for i in 0..data.nrows() {
            let eta: f64 = normal.sample(&mut rng);
            data[(i, t)] += sigma * eta;
        }
    }
    Sinogram::new(f.n(), sched.angles.clone(), data)
}
