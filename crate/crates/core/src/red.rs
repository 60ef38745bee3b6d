//! Denoiser-induced explicit regularizer rho(f) = 1/2 f^T (f - D(f)) with its
//! gradient rule grad rho(f) = f - D(f), per frame and aggregated over time.
//!
//! For denoisers that are not Jacobian-symmetric the gradient rule is taken as
//! the definition of the descent direction; finite-difference agreement is
//! only asserted for linear symmetric kinds (gaussian).

use rayon::prelude::*;

use crate::denoise::Denoiser;
use crate::error::Result;
use crate::image::{DynamicObject, ImageFrame};

/// rho(f) = 1/2 f^T (f - D(f)); non-negative whenever D is strongly passive.
pub fn rho(frame: &ImageFrame, denoiser: &Denoiser) -> Result<f64> {
    Ok(rho_raw(frame.as_slice(), frame.n(), denoiser)?)
}

pub(crate) fn rho_raw(data: &[f64], n: usize, denoiser: &Denoiser) -> Result<f64> {
    let d = denoiser.apply_raw(data, n)?;
    Ok(0.5
        * data
            .iter()
            .zip(&d)
            .map(|(f, df)| f * (f - df))
            .sum::<f64>())
}

/// grad rho(f) = f - D(f).
pub fn grad_rho(frame: &ImageFrame, denoiser: &Denoiser) -> Result<ImageFrame> {
    let g = grad_rho_raw(frame.as_slice(), frame.n(), denoiser)?;
    ImageFrame::from_vec(frame.n(), g)
}

pub(crate) fn grad_rho_raw(data: &[f64], n: usize, denoiser: &Denoiser) -> Result<Vec<f64>> {
    let d = denoiser.apply_raw(data, n)?;
    Ok(data.iter().zip(&d).map(|(f, df)| f - df).collect())
}

/// Aggregated regularizer rho_bar(f) = sum_t rho(f_t).
pub fn rho_bar(f: &DynamicObject, denoiser: &Denoiser) -> Result<f64> {
    let n = f.n();
    let per_t: Vec<Result<f64>> = (0..f.p())
        .into_par_iter()
        .map(|t| rho_raw(f.frame_slice(t), n, denoiser))
        .collect();
    let mut total = 0.0;
    for v in per_t {
        total += v?;
    }
    Ok(total)
}

/// Column-stacked gradient of rho_bar.
pub fn grad_rho_bar(f: &DynamicObject, denoiser: &Denoiser) -> Result<DynamicObject> {
    let n = f.n();
    let per_t: Vec<Result<Vec<f64>>> = (0..f.p())
        .into_par_iter()
        .map(|t| grad_rho_raw(f.frame_slice(t), n, denoiser))
        .collect();
    let mut out = DynamicObject::zeros(n, f.p());
    for (t, col) in per_t.into_iter().enumerate() {
        out.data_mut().column_mut(t).copy_from_slice(&col?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::{identity_cnn, scaling_cnn};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_frame(n: usize, seed: u64) -> ImageFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageFrame::from_fn(n, |_, _| rng.gen::<f64>() - 0.5)
    }

    #[test]
    fn identity_denoiser_gives_zero_rho_and_gradient() {
        let d = Denoiser::cnn(identity_cnn()).unwrap();
        let f = random_frame(8, 1);
        assert_eq!(rho(&f, &d).unwrap(), 0.0);
        assert_eq!(grad_rho(&f, &d).unwrap().norm(), 0.0);
    }

    #[test]
    fn zero_denoiser_gives_half_norm_squared() {
        let d = Denoiser::cnn(scaling_cnn(0.0)).unwrap();
        let f = random_frame(8, 2);
        assert_relative_eq!(rho(&f, &d).unwrap(), 0.5 * f.norm().powi(2), epsilon = 1e-12);
        let g = grad_rho(&f, &d).unwrap();
        assert_eq!(g.as_slice(), f.as_slice());
    }

    #[test]
    fn half_identity_matches_quarter_norm_oracle() {
        let d = Denoiser::cnn(scaling_cnn(0.5)).unwrap();
        let f = random_frame(10, 3);
        // direct inner-product oracle: 1/2 f . (f - 0.5 f)
        let oracle = 0.5
            * f.as_slice()
                .iter()
                .map(|v| v * (v - 0.5 * v))
                .sum::<f64>();
        assert_relative_eq!(rho(&f, &d).unwrap(), oracle, max_relative = 1e-9);
        assert_relative_eq!(oracle, 0.25 * f.norm().powi(2), max_relative = 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences_for_gaussian() {
        // Valid because the gaussian kind is linear and symmetric, for which
        // the gradient rule is exact.
        let d = Denoiser::gaussian(1.0).unwrap();
        let n = 16;
        let f = random_frame(n, 4);
        let g = grad_rho(&f, &d).unwrap();
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..24 {
            let i = rng.gen_range(0..n * n);
            let mut plus = f.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = f.clone();
            minus.as_mut_slice()[i] -= h;
            let fd = (rho(&plus, &d).unwrap() - rho(&minus, &d).unwrap()) / (2.0 * h);
            assert_relative_eq!(g.as_slice()[i], fd, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    #[test]
    fn rho_is_nonnegative_under_passive_denoiser() {
        let d = Denoiser::gaussian(1.4).unwrap();
        for seed in 0..100 {
            let f = random_frame(8, seed);
            assert!(rho(&f, &d).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn rho_bar_matches_loop_oracle_and_reduces_to_rho() {
        let d = Denoiser::gaussian(0.9).unwrap();
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let obj =
            DynamicObject::new(n, DMatrix::from_fn(n * n, 5, |_, _| rng.gen::<f64>())).unwrap();
        let total = rho_bar(&obj, &d).unwrap();
        let mut oracle = 0.0;
        for t in 0..obj.p() {
            oracle += rho(&obj.frame(t).unwrap(), &d).unwrap();
        }
        assert_relative_eq!(total, oracle, epsilon = 1e-12);

        let single = DynamicObject::from_frames(&[obj.frame(2).unwrap()]).unwrap();
        assert_relative_eq!(
            rho_bar(&single, &d).unwrap(),
            rho(&obj.frame(2).unwrap(), &d).unwrap(),
            epsilon = 1e-15
        );

        assert_eq!(rho_bar(&DynamicObject::zeros(n, 4), &d).unwrap(), 0.0);
    }

    #[test]
    fn gradient_lipschitz_bound_holds_for_gaussian() {
        // || grad rho_bar(f1) - grad rho_bar(f2) || <= (1 + L_D) || f1 - f2 ||
        let d = Denoiser::gaussian(1.1).unwrap();
        let n = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let f1 = DynamicObject::new(n, DMatrix::from_fn(n * n, 3, |_, _| rng.gen::<f64>()))
                .unwrap();
            let f2 = DynamicObject::new(n, DMatrix::from_fn(n * n, 3, |_, _| rng.gen::<f64>()))
                .unwrap();
            let g1 = grad_rho_bar(&f1, &d).unwrap();
            let g2 = grad_rho_bar(&f2, &d).unwrap();
            let lhs = (g1.data() - g2.data()).norm();
            let rhs = 2.0 * (f1.data() - f2.data()).norm();
            assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
        }
    }
}
