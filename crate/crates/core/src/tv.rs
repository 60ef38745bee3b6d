//! Total-variation baselines: smoothed (Charbonnier) isotropic spatial TV,
//! the spatio-temporal variant with forward differences in time, and the
//! substituted-constraint factor solver that pairs them with the low-rank
//! model.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::image::{DynamicObject, ImageFrame};
use crate::psm::{compose, PsmFactors, TemporalBasis};
use crate::solver::{Diagnostics, InitScheme, IterRecord};
use crate::tomo::{DynamicOperator, Sinogram};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TvVariant {
    /// Spatial TV per frame.
    Spatial,
    /// Spatial TV per frame plus smoothed absolute temporal forward
    /// differences weighted by lambda_tilde.
    SpatioTemporal,
}

#[derive(Clone, Debug)]
pub struct TvConfig {
    /// Spatial TV weight.
    pub lambda: f64,
    /// Temporal-difference weight (spatio-temporal variant only).
    pub lambda_tilde: f64,
    /// Charbonnier smoothing constant.
    pub epsilon: f64,
    pub k: usize,
    pub d: usize,
    pub xi: f64,
    pub iters: usize,
    pub step: f64,
    pub temporal_basis: TemporalBasis,
    pub init: InitScheme,
}

impl TvConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParam("epsilon must be positive".into()));
        }
        if self.lambda < 0.0 || self.lambda_tilde < 0.0 {
            return Err(Error::InvalidParam("TV weights must be non-negative".into()));
        }
        if !(self.xi > 0.0) {
            return Err(Error::InvalidParam("xi must be positive".into()));
        }
        if self.k == 0 || self.d < self.k || self.d > p {
            return Err(Error::InvalidParam(format!(
                "need 1 <= k <= d <= P, got k = {}, d = {}, P = {p}",
                self.k, self.d
            )));
        }
        if self.iters == 0 || !(self.step > 0.0) {
            return Err(Error::InvalidParam("iters and step must be positive".into()));
        }
        Ok(())
    }
}

/// Smoothed isotropic spatial TV of one frame with forward differences
/// (differences at the far boundary are zero) and its analytic gradient:
/// sum over pixels of sqrt(dx^2 + dy^2 + eps^2).
pub fn tv_s(frame: &ImageFrame, eps: f64) -> Result<(f64, ImageFrame)> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParam("tv_s: eps must be positive".into()));
    }
    let n = frame.n();
    let (value, grad) = tv_s_raw(frame.as_slice(), n, eps);
    Ok((value, ImageFrame::from_vec(n, grad)?))
}

fn tv_s_raw(data: &[f64], n: usize, eps: f64) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            let idx = r * n + c;
            let dx = if c + 1 < n { data[idx + 1] - data[idx] } else { 0.0 };
            let dy = if r + 1 < n { data[idx + n] - data[idx] } else { 0.0 };
            let m = (dx * dx + dy * dy + eps * eps).sqrt();
            value += m;
            if c + 1 < n {
                grad[idx] -= dx / m;
                grad[idx + 1] += dx / m;
            }
            if r + 1 < n {
                grad[idx] -= dy / m;
                grad[idx + n] += dy / m;
            }
        }
    }
    (value, grad)
}

/// Weighted spatio-temporal TV of a dynamic object:
/// lambda * sum_t tv_s(f_t) + lambda_tilde * sum smoothed |f_{t+1} - f_t|,
/// with the analytic gradient as an N^2 x P matrix.
pub fn tv_st(
    f: &DynamicObject,
    eps: f64,
    lambda: f64,
    lambda_tilde: f64,
) -> Result<(f64, DMatrix<f64>)> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParam("tv_st: eps must be positive".into()));
    }
    let n = f.n();
    let n2 = n * n;
    let p = f.p();
    let mut value = 0.0;
    let mut grad = DMatrix::zeros(n2, p);
    for t in 0..p {
        let (v, g) = tv_s_raw(f.frame_slice(t), n, eps);
        value += lambda * v;
        for i in 0..n2 {
            grad[(i, t)] += lambda * g[i];
        }
    }
    if lambda_tilde > 0.0 {
        let d = f.data();
        for t in 0..p {
            for i in 0..n2 {
                let dt = if t + 1 < p { d[(i, t + 1)] - d[(i, t)] } else { 0.0 };
                let m = (dt * dt + eps * eps).sqrt();
                value += lambda_tilde * m;
                if t + 1 < p {
                    grad[(i, t)] -= lambda_tilde * dt / m;
                    grad[(i, t + 1)] += lambda_tilde * dt / m;
                }
            }
        }
    }
    Ok((value, grad))
}

pub struct TvRunOutput {
    pub factors: PsmFactors,
    pub object: DynamicObject,
    pub diagnostics: Diagnostics,
}

/// Minimize
/// ||R Lambda Psi^T - g||^2 + lambda TV + [lambda_tilde temporal]
/// + xi ||Lambda||^2 + xi ||Psi||^2
/// jointly over (Lambda, Z) by first-order descent with step halving; the
/// objective is non-increasing over iterations.
pub fn solve_psm_tv(g: &Sinogram, cfg: &TvConfig, variant: TvVariant) -> Result<TvRunOutput> {
    cfg.validate(g.p())?;
    let n = g.n_det();
    let p = g.p();
    let op = DynamicOperator::new(n, g.angles())?;
    let u = crate::psm::temporal_basis(cfg.temporal_basis, p, cfg.d)?;
    let lambda_tilde = match variant {
        TvVariant::Spatial => 0.0,
        TvVariant::SpatioTemporal => cfg.lambda_tilde,
    };

    let mut factors = match cfg.init {
        InitScheme::Zero => PsmFactors::zeros(n, cfg.k, u.clone())?,
        InitScheme::Random { seed } => {
            use rand::SeedableRng;
            use rand_distr::Distribution;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let normal = rand_distr::StandardNormal;
            let z = DMatrix::from_fn(cfg.d, cfg.k, |_, _| normal.sample(&mut rng));
            PsmFactors::new(n, DMatrix::zeros(n * n, cfg.k), z, u.clone())?
        }
        InitScheme::Svd => {
            let f0 = crate::tomo::adjoint_dynamic(g)?;
            let rf0 = op.forward_matrix(f0.data());
            let denom = rf0.dot(&rf0);
            let alpha = if denom > 0.0 { rf0.dot(g.data()) / denom } else { 0.0 };
            let scaled = DynamicObject::new(n, f0.data() * alpha)?;
            crate::psm::svd_init(&scaled, cfg.k, &u)?
        }
    };

    let objective = |factors: &PsmFactors| -> Result<f64> {
        let fhat = compose(factors);
        let fit = (op.forward_matrix(fhat.data()) - g.data()).norm_squared();
        let (tv, _) = tv_st(&fhat, cfg.epsilon, cfg.lambda, lambda_tilde)?;
        Ok(fit
            + tv
            + cfg.xi * factors.lambda().norm_squared()
            + cfg.xi * factors.psi().norm_squared())
    };

    let started = std::time::Instant::now();
    let mut diagnostics = Diagnostics::default();
    let mut current = objective(&factors)?;
    let mut lr = cfg.step;

    // Adam moments over the concatenated (Lambda, Z) parameters.
    let n2k = n * n * cfg.k;
    let dk = cfg.d * cfg.k;
    let mut m = vec![0.0; n2k + dk];
    let mut v = vec![0.0; n2k + dk];
    let mut tstep = 0u64;
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    for it in 1..=cfg.iters {
        let prev = factors.clone();
        let psi = factors.psi();
        let fhat = compose(&factors);
        let residual =
            op.adjoint_matrix(&op.forward_matrix(fhat.data())).data().clone()
                - op.adjoint_matrix(g.data()).data();
        let (_, tv_grad) = tv_st(&fhat, cfg.epsilon, cfg.lambda, lambda_tilde)?;
        let total = 2.0 * &residual + &tv_grad;
        let grad_lambda = &total * &psi + 2.0 * cfg.xi * factors.lambda();
        let grad_z =
            u.transpose() * (total.transpose() * factors.lambda() + 2.0 * cfg.xi * &psi);
        if !grad_lambda.iter().all(|x| x.is_finite()) || !grad_z.iter().all(|x| x.is_finite()) {
            return Err(Error::SolverAborted {
                iter: it,
                reason: "non-finite gradient".into(),
                dump: diagnostics.to_csv(),
            });
        }

        // One Adam step with snapshot-and-halve backtracking.
        loop {
            let snap = (factors.clone(), m.clone(), v.clone(), tstep);
            tstep += 1;
            let bc1 = 1.0 - B1.powi(tstep as i32);
            let bc2 = 1.0 - B2.powi(tstep as i32);
            {
                let l = factors.lambda_mut();
                for (i, gi) in grad_lambda.iter().enumerate() {
                    m[i] = B1 * m[i] + (1.0 - B1) * gi;
                    v[i] = B2 * v[i] + (1.0 - B2) * gi * gi;
                    l.as_mut_slice()[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + EPS);
                }
            }
            {
                let z = factors.z_mut();
                for (j, gj) in grad_z.iter().enumerate() {
                    let i = n2k + j;
                    m[i] = B1 * m[i] + (1.0 - B1) * gj;
                    v[i] = B2 * v[i] + (1.0 - B2) * gj * gj;
                    z.as_mut_slice()[j] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + EPS);
                }
            }
            let trial = objective(&factors)?;
            if trial.is_finite() && trial <= current {
                current = trial;
                break;
            }
            factors = snap.0;
            m = snap.1;
            v = snap.2;
            tstep = snap.3;
            lr *= 0.5;
            if lr < 1e-18 {
                break;
            }
        }

        let fhat = compose(&factors);
        let fit = (op.forward_matrix(fhat.data()) - g.data()).norm();
        let psi_now = factors.psi();
        diagnostics.rows.push(IterRecord {
            iter: it,
            objective: current,
            lagrangian: current,
            gap: 0.0,
            res_f: 0.0,
            res_lambda: grad_lambda.norm(),
            res_psi: grad_z.norm(),
            res_feas: 0.0,
            data_fit: fit,
            d_f: 0.0,
            d_lambda: (factors.lambda() - prev.lambda()).norm(),
            d_psi: (&psi_now - prev.psi()).norm(),
            d_gamma: 0.0,
            norm_f: fhat.norm(),
            norm_lambda: factors.lambda().norm(),
            norm_psi: psi_now.norm(),
            norm_gamma: 0.0,
            wall_ms: started.elapsed().as_millis(),
        });
        if lr < 1e-18 {
            break;
        }
    }

    let object = compose(&factors);
    Ok(TvRunOutput {
        factors,
        object,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::shepp_logan;
    use crate::tomo::project_dynamic;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(n: usize, seed: u64) -> ImageFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageFrame::from_fn(n, |_, _| rng.gen::<f64>())
    }

    #[test]
    fn constant_frame_has_floor_value_and_zero_gradient() {
        let n = 8;
        let eps = 1e-3;
        let f = ImageFrame::from_fn(n, |_, _| 2.5);
        let (v, g) = tv_s(&f, eps).unwrap();
        assert_relative_eq!(v, (n * n) as f64 * eps, epsilon = 1e-12);
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn vertical_edge_value_matches_direct_sum_oracle() {
        // 2-column image with a step of height h between the columns.
        let n = 6;
        let h = 1.7;
        let eps = 1e-2;
        let f = ImageFrame::from_fn(n, |_, c| if c == 0 { 0.0 } else { h });
        // direct sum: column 0 pixels see dx = h (n of them); all other
        // differences vanish, so every pixel adds a floor eps... except the
        // dx pixels which add sqrt(h^2 + eps^2).
        let mut oracle = 0.0;
        for r in 0..n {
            for c in 0..n {
                let dx = if c == 0 { h } else { 0.0 };
                let _ = r;
                oracle += (dx * dx + eps * eps).sqrt();
            }
        }
        let (v, _) = tv_s(&f, eps).unwrap();
        assert_relative_eq!(v, oracle, epsilon = 1e-10);
    }

    #[test]
    fn tv_s_gradient_matches_finite_differences() {
        let n = 8;
        let eps = 1e-2;
        let f = random_frame(n, 3);
        let (_, g) = tv_s(&f, eps).unwrap();
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let i = rng.gen_range(0..n * n);
            let mut plus = f.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = f.clone();
            minus.as_mut_slice()[i] -= h;
            let fd = (tv_s(&plus, eps).unwrap().0 - tv_s(&minus, eps).unwrap().0) / (2.0 * h);
            assert_relative_eq!(g.as_slice()[i], fd, max_relative = 1e-5, epsilon = 1e-7);
        }
    }

    #[test]
    fn tv_value_is_shift_invariant() {
        let f = random_frame(8, 9);
        let shifted = ImageFrame::from_vec(8, f.as_slice().iter().map(|v| v + 3.7).collect())
            .unwrap();
        let (a, _) = tv_s(&f, 1e-3).unwrap();
        let (b, _) = tv_s(&shifted, 1e-3).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-9);
    }

    #[test]
    fn static_object_temporal_term_is_floor_only() {
        let n = 6;
        let p = 5;
        let fr = random_frame(n, 11);
        let obj = DynamicObject::from_frames(&vec![fr; p]).unwrap();
        let eps = 1e-3;
        let (with_t, _) = tv_st(&obj, eps, 0.0, 1.0).unwrap();
        // all temporal differences vanish; floor = one eps per (pixel, t)
        assert_relative_eq!(with_t, (n * n * p) as f64 * eps, epsilon = 1e-9);
    }

    #[test]
    fn st_reduces_to_sum_of_spatial_terms() {
        let n = 6;
        let obj = DynamicObject::from_frames(&[
            random_frame(n, 1),
            random_frame(n, 2),
            random_frame(n, 3),
        ])
        .unwrap();
        let eps = 1e-2;
        let (v, _) = tv_st(&obj, eps, 1.0, 0.0).unwrap();
        let mut oracle = 0.0;
        for t in 0..3 {
            oracle += tv_s(&obj.frame(t).unwrap(), eps).unwrap().0;
        }
        assert_relative_eq!(v, oracle, epsilon = 1e-12);

        // single frame reduces to tv_s
        let single = DynamicObject::from_frames(&[obj.frame(0).unwrap()]).unwrap();
        let (v1, _) = tv_st(&single, eps, 1.0, 0.7).unwrap();
        let floor = (n * n) as f64 * eps; // temporal term floor at P = 1
        assert_relative_eq!(
            v1,
            tv_s(&obj.frame(0).unwrap(), eps).unwrap().0 + 0.7 * floor,
            epsilon = 1e-10
        );
    }

    #[test]
    fn tv_st_gradient_matches_finite_differences() {
        let n = 5;
        let p = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let obj = DynamicObject::new(
            n,
            DMatrix::from_fn(n * n, p, |_, _| rng.gen::<f64>()),
        )
        .unwrap();
        let (eps, lam, lt) = (1e-2, 0.8, 0.6);
        let (_, g) = tv_st(&obj, eps, lam, lt).unwrap();
        let h = 1e-6;
        for _ in 0..20 {
            let i = rng.gen_range(0..n * n);
            let t = rng.gen_range(0..p);
            let mut plus = obj.clone();
            plus.data_mut()[(i, t)] += h;
            let mut minus = obj.clone();
            minus.data_mut()[(i, t)] -= h;
            let fd = (tv_st(&plus, eps, lam, lt).unwrap().0
                - tv_st(&minus, eps, lam, lt).unwrap().0)
                / (2.0 * h);
            assert_relative_eq!(g[(i, t)], fd, max_relative = 1e-5, epsilon = 1e-7);
        }
    }

    #[test]
    fn ridge_only_fit_reaches_rank_one_phantom() {
        let n = 16;
        let p = 8;
        let truth = shepp_logan(n);
        let obj = DynamicObject::from_frames(&vec![truth; p]).unwrap();
        let angles = crate::phantom::bit_reversed_angles(p, p).unwrap().angles;
        let g = project_dynamic(&obj, &angles).unwrap();
        let cfg = TvConfig {
            lambda: 0.0,
            lambda_tilde: 0.0,
            epsilon: 1e-6,
            k: 1,
            d: 2,
            xi: 1e-6,
            iters: 300,
            step: 2e-2,
            temporal_basis: TemporalBasis::Dct2,
            init: InitScheme::Svd,
        };
        let out = solve_psm_tv(&g, &cfg, TvVariant::Spatial).unwrap();
        let rel = out.diagnostics.rows.last().unwrap().data_fit / g.norm();
        assert!(rel < 1e-2, "relative fit {rel}");
        // objective non-increasing
        for w in out.diagnostics.rows.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-10);
        }
        // rank <= K by construction
        let s = crate::linalg::singular_values(out.object.data());
        assert!(s[cfg.k] < 1e-10 * s[0]);
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let n = 8;
        let g = Sinogram::new(n, vec![0.0, 0.4, 0.8, 1.2], DMatrix::zeros(n, 4)).unwrap();
        let cfg = TvConfig {
            lambda: 0.0,
            lambda_tilde: 0.0,
            epsilon: 1e-6,
            k: 2,
            d: 3,
            xi: 1e-3,
            iters: 50,
            step: 1e-2,
            temporal_basis: TemporalBasis::Dct2,
            init: InitScheme::Zero,
        };
        let out = solve_psm_tv(&g, &cfg, TvVariant::Spatial).unwrap();
        assert_eq!(out.object.norm(), 0.0);
    }

    #[test]
    fn paper_tv_config_is_accepted() {
        // PSM-TV-S for the smallest experiment size: K = 3, d = 4, lambda = 5e-2.
        let cfg = TvConfig {
            lambda: 5e-2,
            lambda_tilde: 0.0,
            epsilon: 1e-6,
            k: 3,
            d: 4,
            xi: 1e-1,
            iters: 1,
            step: 1e-2,
            temporal_basis: TemporalBasis::Dct2,
            init: InitScheme::Random { seed: 0 },
        };
        assert!(cfg.validate(32).is_ok());
    }
}
