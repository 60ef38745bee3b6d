//! End-to-end tests of the rpsm binary surfaces: simulate, reconstruct
//! (all methods), evaluate, diagnose, and the config-file contract.

use std::path::Path;
use std::process::Command;

fn rpsm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rpsm"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const RED_CFG: &str = "\
k = 2
d = 3
lambda = 0.05
xi = 1e-3
beta = 0.4
outer_iters = 20
inner_iters = 10
inner_step = 1e-2
f_step = exact
f_step_iters = 150
f_step_tol = 1e-11
temporal_basis = dct2
init = random
seed = 3
denoiser = gaussian
denoiser_sigma = 1.0
";

const TV_CFG: &str = "\
k = 2
d = 3
lambda = 0.05
xi = 1e-3
iters = 60
step = 1e-2
init = svd
";

fn simulate(dir: &Path, n: usize, p: usize, seed: u64) {
    let status = rpsm()
        .args([
            "simulate",
            "--phantom",
            "shepp-logan",
            "--warp",
            "sin",
            "--n",
            &n.to_string(),
            "--p",
            &p.to_string(),
            "--sigma",
            "5e-3",
            "--seed",
            &seed.to_string(),
            "--out",
        ])
        .arg(dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.join("ground_truth.raw").exists());
    assert!(dir.join("sinogram.raw").exists());
    assert!(dir.join("schedule.csv").exists());
}

#[test]
fn simulate_reconstruct_evaluate_diagnose_red_psm() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, 16, 4, 1);

    let cfg = tmp.path().join("red.cfg");
    write(&cfg, RED_CFG);
    let out = tmp.path().join("red");
    let status = rpsm()
        .args(["reconstruct", "--method", "red-psm", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(&sim)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for f in [
        "recon.raw",
        "diagnostics.csv",
        "lambda.raw",
        "z.raw",
        "u.raw",
        "run_meta.csv",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(out.join("frames/frame_0000.png").exists());
    assert!(out.join("frames/scale.csv").exists());

    let metrics = out.join("metrics.csv");
    let status = rpsm()
        .args(["evaluate", "--ref"])
        .arg(sim.join("ground_truth.raw"))
        .arg("--est")
        .arg(out.join("recon.raw"))
        .arg("--out")
        .arg(&metrics)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&metrics).unwrap();
    assert!(text.starts_with("frame,psnr,ssim,mae,hfen"));
    assert!(text.lines().last().unwrap().starts_with("mean,"));
    // per-frame rows + header + mean
    assert_eq!(text.lines().count(), 4 + 2);

    let status = rpsm().args(["diagnose", "--run"]).arg(&out).status().unwrap();
    assert!(status.success());
}

#[test]
fn reconstruct_tv_variants_and_fbp() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, 16, 4, 2);

    let cfg_s = tmp.path().join("tv.cfg");
    write(&cfg_s, TV_CFG);
    let out_s = tmp.path().join("tvs");
    assert!(rpsm()
        .args(["reconstruct", "--method", "psm-tv-s", "--config"])
        .arg(&cfg_s)
        .arg("--data")
        .arg(&sim)
        .arg("--out")
        .arg(&out_s)
        .status()
        .unwrap()
        .success());
    assert!(out_s.join("recon.raw").exists());
    assert!(rpsm().args(["diagnose", "--run"]).arg(&out_s).status().unwrap().success());

    // spatio-temporal variant needs lambda_tilde
    let cfg_st = tmp.path().join("tvst.cfg");
    write(&cfg_st, &format!("{TV_CFG}lambda_tilde = 0.05\n"));
    let out_st = tmp.path().join("tvst");
    assert!(rpsm()
        .args(["reconstruct", "--method", "psm-tv-st", "--config"])
        .arg(&cfg_st)
        .arg("--data")
        .arg(&sim)
        .arg("--out")
        .arg(&out_st)
        .status()
        .unwrap()
        .success());

    let cfg_fbp = tmp.path().join("fbp.cfg");
    write(&cfg_fbp, "# no tunables\n");
    let out_fbp = tmp.path().join("fbp");
    assert!(rpsm()
        .args(["reconstruct", "--method", "fbp", "--config"])
        .arg(&cfg_fbp)
        .arg("--data")
        .arg(&sim)
        .arg("--out")
        .arg(&out_fbp)
        .status()
        .unwrap()
        .success());
    let meta = std::fs::read_to_string(out_fbp.join("run_meta.csv")).unwrap();
    assert!(meta.contains("degenerate_frames,4"));
}

#[test]
fn unknown_config_key_fails_fast() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, 16, 4, 3);

    let cfg = tmp.path().join("bad.cfg");
    write(&cfg, &format!("{RED_CFG}not_a_key = 1\n"));
    let out = rpsm()
        .args(["reconstruct", "--method", "red-psm", "--config"])
        .arg(&cfg)
        .arg("--data")
        .arg(&sim)
        .arg("--out")
        .arg(tmp.path().join("x"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("not_a_key"), "stderr: {stderr}");
}

#[test]
fn import_phantom_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    // write a square frame tensor and re-simulate from it
    let n = 16;
    let frame = redpsm_core::phantom::disc_phantom(n, 0.3, 1.0);
    let path = tmp.path().join("static.raw");
    redpsm_core::io::save_frame(&path, &frame).unwrap();
    let sim = tmp.path().join("sim");
    assert!(rpsm()
        .args([
            "simulate",
            "--phantom",
            "import",
            "--input",
        ])
        .arg(&path)
        .args(["--n", "16", "--p", "4", "--cmax", "0", "--sigma", "0", "--seed", "0", "--out"])
        .arg(&sim)
        .status()
        .unwrap()
        .success());
    // cmax 0: every frame equals the imported static frame
    let truth = redpsm_core::io::load_object(sim.join("ground_truth.raw")).unwrap();
    assert_eq!(truth.p(), 4);
    for t in 0..4 {
        for (a, b) in truth.frame_slice(t).iter().zip(frame.as_slice()) {
            assert!((a - *b as f32 as f64).abs() == 0.0);
        }
    }
}

#[test]
fn reduced_distinct_views_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert!(rpsm()
        .args([
            "simulate",
            "--phantom",
            "disc",
            "--n",
            "16",
            "--p",
            "8",
            "--phat",
            "4",
            "--sigma",
            "0",
            "--seed",
            "0",
            "--out",
        ])
        .arg(&sim)
        .status()
        .unwrap()
        .success());
    let angles = redpsm_core::io::read_schedule_csv(sim.join("schedule.csv")).unwrap();
    assert_eq!(angles.len(), 8);
    let distinct: std::collections::BTreeSet<u64> =
        angles.iter().map(|a| a.to_bits()).collect();
    assert_eq!(distinct.len(), 4);
    assert_eq!(&angles[..4], &angles[4..]);
}

#[test]
fn non_power_of_two_phat_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rpsm()
        .args([
            "simulate",
            "--phantom",
            "disc",
            "--n",
            "16",
            "--p",
            "8",
            "--phat",
            "3",
            "--sigma",
            "0",
            "--seed",
            "0",
            "--out",
        ])
        .arg(tmp.path().join("sim"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn identical_seeds_give_bit_identical_simulations() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    simulate(&a, 16, 4, 9);
    simulate(&b, 16, 4, 9);
    assert_eq!(
        std::fs::read(a.join("sinogram.raw")).unwrap(),
        std::fs::read(b.join("sinogram.raw")).unwrap()
    );
}
