//! rpsm: simulate, reconstruct, evaluate, and diagnose time-sequential
//! dynamic tomography runs.

mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use redpsm_core::image::DynamicObject;
use redpsm_core::metrics::{evaluate_object, PeakMode};
use redpsm_core::phantom::{acquire, bit_reversed_angles, disc_phantom, shepp_logan, warp_phantom};
use redpsm_core::tomo::{backproject, Sinogram};
use redpsm_core::tv::{solve_psm_tv, TvVariant};
use redpsm_core::{io, solver};

#[derive(Parser)]
#[command(
    name = "rpsm",
    about = "Dynamic tomography at one projection per time frame: low-rank factor models with denoiser or TV regularization",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhantomKind {
    SheppLogan,
    Disc,
    Import,
}

#[derive(Clone, Copy, ValueEnum)]
enum WarpKind {
    Sin,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    RedPsm,
    PsmTvS,
    PsmTvSt,
    Fbp,
}

#[derive(Clone, Copy, ValueEnum)]
enum PeakArg {
    Sequence,
    Frame,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dynamic phantom, acquire a noisy time-sequential
    /// sinogram, and write ground truth + data + schedule to a directory.
    Simulate {
        #[arg(long, value_enum)]
        phantom: PhantomKind,
        /// Static frame tensor ([n, n] raw) when --phantom import.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Warp family applied over time.
        #[arg(long, value_enum, default_value = "sin")]
        warp: WarpKind,
        /// Peak warp displacement in pixels (default 0.05 n).
        #[arg(long)]
        cmax: Option<f64>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        /// Number of distinct view angles (power of two, default p).
        #[arg(long)]
        phat: Option<usize>,
        /// Measurement noise standard deviation.
        #[arg(long, default_value_t = 5e-3)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a sinogram directory produced by `simulate`.
    Reconstruct {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Frame-by-frame quality metrics between two object tensors.
    Evaluate {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "estimate")]
        label: String,
        #[arg(long, value_enum, default_value = "sequence")]
        peak: PeakArg,
    },
    /// Re-verify convergence guarantees from a reconstruction directory;
    /// exits nonzero on violation.
    Diagnose {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(raw) = std::env::var("RPSM_THREADS") {
        let threads: usize = raw
            .parse()
            .with_context(|| format!("bad RPSM_THREADS value '{raw}'"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("installing the worker pool")?;
    }
    match Cli::parse().command {
        Command::Simulate {
            phantom,
            input,
            warp: WarpKind::Sin,
            cmax,
            n,
            p,
            phat,
            sigma,
            seed,
            out,
        } => simulate(phantom, input, cmax, n, p, phat, sigma, seed, &out),
        Command::Reconstruct {
            method,
            config,
            data,
            out,
        } => reconstruct(method, &config, &data, &out),
        Command::Evaluate {
            reference,
            est,
            out,
            label,
            peak,
        } => evaluate(&reference, &est, &out, &label, peak),
        Command::Diagnose { run } => diagnose(&run),
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    phantom: PhantomKind,
    input: Option<PathBuf>,
    cmax: Option<f64>,
    n: usize,
    p: usize,
    phat: Option<usize>,
    sigma: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let base = match phantom {
        PhantomKind::SheppLogan => shepp_logan(n),
        PhantomKind::Disc => disc_phantom(n, 0.35, 1.0),
        PhantomKind::Import => {
            let path = input.ok_or_else(|| {
                anyhow::anyhow!("--phantom import requires --input <raw frame>")
            })?;
            let frame = io::load_frame(&path)
                .with_context(|| format!("loading {}", path.display()))?;
            if frame.n() != n {
                bail!("imported frame is {} px but --n is {n}", frame.n());
            }
            frame
        }
    };
    let cmax = cmax.unwrap_or(0.05 * n as f64);
    let truth = warp_phantom(&base, p, cmax)?;
    let phat = phat.unwrap_or(p);
    let sched = bit_reversed_angles(p, phat)?;
    let sino = acquire(&truth, &sched, sigma, seed)?;

    std::fs::create_dir_all(out)?;
    io::save_object(out.join("ground_truth.raw"), &truth)?;
    io::save_sinogram(out.join("sinogram.raw"), &sino)?;
    io::write_schedule_csv(out.join("schedule.csv"), &sched.angles)?;
    println!(
        "simulated n={n} p={p} phat={phat} sigma={sigma} seed={seed} cmax={cmax} -> {}",
        out.display()
    );
    Ok(())
}

fn load_data(data: &Path) -> Result<Sinogram> {
    let angles = io::read_schedule_csv(data.join("schedule.csv"))?;
    let sino = io::load_sinogram(data.join("sinogram.raw"), &angles)?;
    Ok(sino)
}

fn write_meta(path: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let mut text = String::from("key,value\n");
    for (k, v) in pairs {
        text.push_str(&format!("{k},{v}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn read_meta(path: &Path) -> Result<std::collections::BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut map = std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        if let Some((k, v)) = line.split_once(',') {
            map.insert(k.to_string(), v.to_string());
        }
    }
    Ok(map)
}

fn reconstruct(method: Method, config: &Path, data: &Path, out: &Path) -> Result<()> {
    let sino = load_data(data)?;
    std::fs::create_dir_all(out)?;
    match method {
        Method::RedPsm => {
            let cfg = config::solver_config(config)?;
            let admm = solver::AdmmSolver::new(&sino, cfg.clone())?;
            for w in admm.warnings() {
                log::warn!("{w}");
            }
            let run = admm.run()?;
            std::fs::write(out.join("diagnostics.csv"), run.diagnostics.to_csv())?;
            io::save_factors(out, &run.factors)?;
            io::save_object(out.join("recon.raw"), &run.object)?;
            export_frames(out, &run.object)?;
            let l_d = cfg.denoiser.lipschitz_bound().unwrap_or(1.0);
            write_meta(
                &out.join("run_meta.csv"),
                &[
                    ("method", "red-psm".into()),
                    ("n", run.object.n().to_string()),
                    ("p", run.object.p().to_string()),
                    ("lambda", cfg.lambda.to_string()),
                    ("beta", cfg.beta.to_string()),
                    ("xi", cfg.xi.to_string()),
                    ("l_bound", (cfg.lambda * (1.0 + l_d)).to_string()),
                    (
                        "f_step",
                        match cfg.f_step {
                            solver::FStep::Efficient => "efficient".into(),
                            solver::FStep::Exact { .. } => "exact".into(),
                        },
                    ),
                ],
            )?;
            println!(
                "red-psm done: {} iterations, final fit {:.3e}, gap {:.3e}",
                run.diagnostics.rows.len(),
                run.diagnostics.rows.last().map(|r| r.data_fit).unwrap_or(0.0),
                run.diagnostics.rows.last().map(|r| r.gap).unwrap_or(0.0),
            );
        }
        Method::PsmTvS | Method::PsmTvSt => {
            let (variant, name) = match method {
                Method::PsmTvS => (TvVariant::Spatial, "psm-tv-s"),
                _ => (TvVariant::SpatioTemporal, "psm-tv-st"),
            };
            let cfg = config::tv_config(config, matches!(variant, TvVariant::SpatioTemporal))?;
            let run = solve_psm_tv(&sino, &cfg, variant)?;
            std::fs::write(out.join("diagnostics.csv"), run.diagnostics.to_csv())?;
            io::save_factors(out, &run.factors)?;
            io::save_object(out.join("recon.raw"), &run.object)?;
            export_frames(out, &run.object)?;
            write_meta(
                &out.join("run_meta.csv"),
                &[
                    ("method", name.into()),
                    ("n", run.object.n().to_string()),
                    ("p", run.object.p().to_string()),
                    ("lambda", cfg.lambda.to_string()),
                ],
            )?;
            println!(
                "{name} done: {} iterations, final fit {:.3e}",
                run.diagnostics.rows.len(),
                run.diagnostics.rows.last().map(|r| r.data_fit).unwrap_or(0.0),
            );
        }
        Method::Fbp => {
            config::fbp_config(config)?;
            // Time-sequential data: each frame sees exactly one view, so the
            // per-frame FBP is the degenerate single-view case and reduces to
            // unfiltered backprojection of that frame's own projection.
            let n = sino.n_det();
            let mut frames = Vec::with_capacity(sino.p());
            for t in 0..sino.p() {
                frames.push(backproject(&sino.projection(t)?)?);
            }
            let object = DynamicObject::from_frames(&frames)?;
            io::save_object(out.join("recon.raw"), &object)?;
            export_frames(out, &object)?;
            write_meta(
                &out.join("run_meta.csv"),
                &[
                    ("method", "fbp".into()),
                    ("n", n.to_string()),
                    ("p", sino.p().to_string()),
                    ("degenerate_frames", sino.p().to_string()),
                ],
            )?;
            println!("fbp done: {} single-view (degenerate) frames", sino.p());
        }
    }
    Ok(())
}

/// Write one 16-bit grayscale PNG per frame (min-max scaled) plus a sidecar
/// CSV recording the per-frame scale.
fn export_frames(out: &Path, object: &DynamicObject) -> Result<()> {
    let dir = out.join("frames");
    std::fs::create_dir_all(&dir)?;
    let n = object.n() as u32;
    let mut sidecar = String::from("frame,min,max\n");
    for t in 0..object.p() {
        let data = object.frame_slice(t);
        let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = if hi > lo { 65535.0 / (hi - lo) } else { 0.0 };
        let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(n, n);
        for (i, px) in img.pixels_mut().enumerate() {
            px.0[0] = ((data[i] - lo) * scale).round().clamp(0.0, 65535.0) as u16;
        }
        img.save(dir.join(format!("frame_{t:04}.png")))?;
        sidecar.push_str(&format!("{t},{lo},{hi}\n"));
    }
    std::fs::write(dir.join("scale.csv"), sidecar)?;
    Ok(())
}

fn evaluate(reference: &Path, est: &Path, out: &Path, label: &str, peak: PeakArg) -> Result<()> {
    let reference = io::load_object(reference)?;
    let estimate = io::load_object(est)?;
    let mode = match peak {
        PeakArg::Sequence => PeakMode::Sequence,
        PeakArg::Frame => PeakMode::Frame,
    };
    let report = evaluate_object(&reference, &estimate, label, mode)?;
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(out, report.to_csv())?;
    println!(
        "{label}: mean psnr {:.2} dB, ssim {:.4}, mae {:.3e}, hfen {:.3e}",
        report.mean.psnr, report.mean.ssim, report.mean.mae, report.mean.hfen
    );
    Ok(())
}

fn diagnose(run: &Path) -> Result<()> {
    let rows = io::read_diagnostics_csv(run.join("diagnostics.csv"))?;
    let meta = read_meta(&run.join("run_meta.csv"))?;
    let method = meta.get("method").map(String::as_str).unwrap_or("red-psm");
    let mut failures = 0usize;

    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{}: {name} — {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    if method == "red-psm" {
        let exact = meta.get("f_step").map(String::as_str) == Some("exact");
        // Lagrangian monotonicity: strict (1e-8 slack) with the exact f step,
        // otherwise over the trailing 80% of iterations.
        let start = if exact { 1 } else { rows.len() / 5 + 1 };
        let mut worst: f64 = 0.0;
        for w in rows.windows(2).skip(start.saturating_sub(1)) {
            worst = worst.max(w[1].lagrangian - w[0].lagrangian);
        }
        check(
            "lagrangian monotone non-increasing",
            worst <= 1e-8,
            format!("worst increase {worst:.3e} ({})", if exact { "all iterations" } else { "trailing 80%" }),
        );
        check(
            "lagrangian lower bounded",
            rows.iter().all(|r| r.lagrangian >= 0.0),
            format!(
                "min {:.3e}",
                rows.iter().map(|r| r.lagrangian).fold(f64::INFINITY, f64::min)
            ),
        );
        if exact {
            let l: f64 = meta
                .get("l_bound")
                .and_then(|s| s.parse().ok())
                .context("run_meta.csv missing l_bound")?;
            let beta: f64 = meta
                .get("beta")
                .and_then(|s| s.parse().ok())
                .context("run_meta.csv missing beta")?;
            let mut worst = f64::NEG_INFINITY;
            for r in &rows {
                worst = worst.max(r.d_gamma - (l / beta) * r.d_f);
            }
            check(
                "dual-primal bound |d_gamma| <= (L/beta) |d_f|",
                worst <= 1e-9,
                format!("worst excess {worst:.3e}"),
            );
        }
        let last = rows.last().unwrap();
        check(
            "constraint gap decayed",
            last.gap <= 1e-3 * last.norm_f.max(f64::MIN_POSITIVE),
            format!("final gap {:.3e} vs 1e-3 ||f|| = {:.3e}", last.gap, 1e-3 * last.norm_f),
        );
    } else {
        // TV and FBP runs: objective monotone (TV writes it to lagrangian)
        let mut worst: f64 = 0.0;
        for w in rows.windows(2) {
            worst = worst.max(w[1].lagrangian - w[0].lagrangian);
        }
        check(
            "objective monotone non-increasing",
            worst <= 1e-8,
            format!("worst increase {worst:.3e}"),
        );
    }

    if failures > 0 {
        bail!("{failures} diagnostic check(s) failed");
    }
    Ok(())
}
