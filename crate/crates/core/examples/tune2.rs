//! Second probe: K=2 TV, reduced distinct views, and patched parity.

use redpsm_core::denoise::Denoiser;
use redpsm_core::image::DynamicObject;
use redpsm_core::metrics::{evaluate_object, PeakMode};
use redpsm_core::phantom::{acquire, bit_reversed_angles, shepp_logan, warp_phantom};
use redpsm_core::psm::TemporalBasis;
use redpsm_core::solver::{run, FStep, InitScheme, SolverConfig};
use redpsm_core::tv::{solve_psm_tv, TvConfig, TvVariant};

fn setup(phat: usize) -> (DynamicObject, redpsm_core::tomo::Sinogram) {
    let n = 64;
    let p = 32;
    let truth = warp_phantom(&shepp_logan(n), p, 0.05 * n as f64).unwrap();
    let sched = bit_reversed_angles(p, phat).unwrap();
    let g = acquire(&truth, &sched, 5e-3, 42).unwrap();
    (truth, g)
}

fn mean_psnr(truth: &DynamicObject, est: &DynamicObject) -> f64 {
    evaluate_object(truth, est, "x", PeakMode::Sequence).unwrap().mean.psnr
}

fn red_cfg(k: usize, d: usize, lam: f64, den: Denoiser, outer: usize) -> SolverConfig {
    SolverConfig {
        k,
        d,
        lambda: lam,
        xi: 1e-3,
        beta: 8.0 * lam,
        outer_iters: outer,
        inner_iters: 15,
        inner_step: 2e-2,
        f_step: FStep::Efficient,
        temporal_basis: TemporalBasis::Dct2,
        init: InitScheme::Svd,
        denoiser: den,
        stop_gap_rtol: None,
    }
}

fn main() {
    let t0 = std::time::Instant::now();
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("");

    match mode {
        "tvk2" => {
            let (truth, g) = setup(32);
            for lam in [0.02, 0.05] {
                let cfg = TvConfig {
                    lambda: lam,
                    lambda_tilde: 0.0,
                    epsilon: 1e-6,
                    k: 2,
                    d: 3,
                    xi: 1e-3,
                    iters: 1200,
                    step: 2e-2,
                    temporal_basis: TemporalBasis::Dct2,
                    init: InitScheme::Svd,
                };
                let out = solve_psm_tv(&g, &cfg, TvVariant::Spatial).unwrap();
                println!(
                    "tv-s k=2 lam={lam}: psnr={:.2} [{:.0}s]",
                    mean_psnr(&truth, &out.object),
                    t0.elapsed().as_secs_f64()
                );
            }
        }
        "views" => {
            // reduced distinct angles at the current best RED config
            for phat in [32usize, 4] {
                let (truth, g) = setup(phat);
                let cfg = red_cfg(3, 5, 0.1, Denoiser::gaussian(0.7).unwrap(), 200);
                let out = run(&g, &cfg).unwrap();
                println!(
                    "red phat={phat}: psnr={:.2} [{:.0}s]",
                    mean_psnr(&truth, &out.object),
                    t0.elapsed().as_secs_f64()
                );
            }
        }
        "patched" => {
            let (truth, g) = setup(32);
            for patched in [false, true] {
                let den = if patched {
                    Denoiser::patched(Denoiser::gaussian(0.7).unwrap(), 8, 2).unwrap()
                } else {
                    Denoiser::gaussian(0.7).unwrap()
                };
                let cfg = red_cfg(3, 5, 0.1, den, 200);
                let out = run(&g, &cfg).unwrap();
                println!(
                    "red patched={patched}: psnr={:.2} [{:.0}s]",
                    mean_psnr(&truth, &out.object),
                    t0.elapsed().as_secs_f64()
                );
            }
        }
        "motion" => {
            let n = 64;
            let p = 32;
            for cfrac in [0.08f64] {
                let truth = warp_phantom(&shepp_logan(n), p, cfrac * n as f64).unwrap();
                let sched = bit_reversed_angles(p, p).unwrap();
                let g = acquire(&truth, &sched, 5e-3, 42).unwrap();
                let red = run(&g, &red_cfg(3, 5, 0.1, Denoiser::gaussian(0.7).unwrap(), 200))
                    .unwrap();
                let tv_cfg = TvConfig {
                    lambda: 0.05,
                    lambda_tilde: 0.0,
                    epsilon: 1e-6,
                    k: 3,
                    d: 4,
                    xi: 1e-3,
                    iters: 1200,
                    step: 2e-2,
                    temporal_basis: TemporalBasis::Dct2,
                    init: InitScheme::Svd,
                };
                let tv = solve_psm_tv(&g, &tv_cfg, TvVariant::Spatial).unwrap();
                println!(
                    "cmax={cfrac}N: red={:.2} tv={:.2} [{:.0}s]",
                    mean_psnr(&truth, &red.object),
                    mean_psnr(&truth, &tv.object),
                    t0.elapsed().as_secs_f64()
                );
            }
        }
        other => eprintln!("unknown mode {other}"),
    }
}
