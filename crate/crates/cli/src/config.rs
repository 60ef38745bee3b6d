//! Flat key=value config files. Blank lines and `#` comments are allowed;
//! unknown keys fail fast.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use redpsm_core::denoise::{load_weights, Denoiser};
use redpsm_core::solver::{FStep, InitScheme, SolverConfig};
use redpsm_core::tv::TvConfig;
use redpsm_core::TemporalBasis;

pub struct ConfigFile {
    values: BTreeMap<String, String>,
    dir: PathBuf,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value, got '{line}'", lineno + 1))?;
            let key = key.trim().to_string();
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                bail!("duplicate key '{key}'");
            }
        }
        Ok(Self {
            values,
            dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| anyhow!("bad value '{raw}' for key '{key}'")),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        self.parse(key)?
            .ok_or_else(|| anyhow!("missing required config key '{key}'"))
    }

    fn finish(self) -> Result<()> {
        if let Some(key) = self.values.keys().next() {
            bail!("unknown config key '{key}'");
        }
        Ok(())
    }

    fn temporal_basis(&mut self) -> Result<TemporalBasis> {
        match self.take("temporal_basis").as_deref() {
            None | Some("dct2") => Ok(TemporalBasis::Dct2),
            Some("cubic-spline") => Ok(TemporalBasis::CubicSpline),
            Some(other) => bail!("unknown temporal_basis '{other}'"),
        }
    }

    fn init(&mut self) -> Result<InitScheme> {
        let seed: u64 = self.parse("seed")?.unwrap_or(0);
        match self.take("init").as_deref() {
            None | Some("svd") => Ok(InitScheme::Svd),
            Some("random") => Ok(InitScheme::Random { seed }),
            Some("zero") => Ok(InitScheme::Zero),
            Some(other) => bail!("unknown init '{other}'"),
        }
    }

    fn denoiser(&mut self) -> Result<Denoiser> {
        let kind = self.take("denoiser").unwrap_or_else(|| "gaussian".into());
        let mut inner = match kind.as_str() {
            "gaussian" => {
                let sigma: f64 = self.parse("denoiser_sigma")?.unwrap_or(1.0);
                Denoiser::gaussian(sigma)?
            }
            "cnn" => {
                let rel: String = self.require("weights")?;
                let path = self.dir.join(rel);
                Denoiser::cnn(load_weights(&path).with_context(|| {
                    format!("loading denoiser weights {}", path.display())
                })?)?
            }
            other => bail!("unknown denoiser '{other}'"),
        };
        if let Some(hint) = self.parse::<f64>("lipschitz_hint")? {
            inner = inner.with_lipschitz_hint(hint);
        }
        let patched: bool = self.parse("patched")?.unwrap_or(false);
        if patched {
            let patch: usize = self.parse("patch_size")?.unwrap_or(8);
            let stride: usize = self.parse("patch_stride")?.unwrap_or(2);
            Ok(Denoiser::patched(inner, patch, stride)?)
        } else {
            if self.values.contains_key("patch_size") || self.values.contains_key("patch_stride")
            {
                bail!("patch_size/patch_stride given but patched is not true");
            }
            Ok(inner)
        }
    }
}

pub fn solver_config(path: &Path) -> Result<SolverConfig> {
    let mut c = ConfigFile::load(path)?;
    let f_step = match c.take("f_step").as_deref() {
        None | Some("efficient") => {
            if c.values.contains_key("f_step_iters") || c.values.contains_key("f_step_tol") {
                bail!("f_step_iters/f_step_tol only apply to f_step=exact");
            }
            FStep::Efficient
        }
        Some("exact") => FStep::Exact {
            max_iters: c.parse("f_step_iters")?.unwrap_or(200),
            tol: c.parse("f_step_tol")?.unwrap_or(1e-10),
        },
        Some(other) => bail!("unknown f_step '{other}'"),
    };
    let cfg = SolverConfig {
        k: c.require("k")?,
        d: c.require("d")?,
        lambda: c.require("lambda")?,
        xi: c.require("xi")?,
        beta: c.require("beta")?,
        outer_iters: c.parse("outer_iters")?.unwrap_or(100),
        inner_iters: c.parse("inner_iters")?.unwrap_or(20),
        inner_step: c.parse("inner_step")?.unwrap_or(1e-2),
        f_step,
        temporal_basis: c.temporal_basis()?,
        init: c.init()?,
        denoiser: c.denoiser()?,
        stop_gap_rtol: c.parse("stop_gap_rtol")?,
    };
    c.finish()?;
    Ok(cfg)
}

pub fn tv_config(path: &Path, needs_lambda_tilde: bool) -> Result<TvConfig> {
    let mut c = ConfigFile::load(path)?;
    let lambda_tilde = if needs_lambda_tilde {
        c.require("lambda_tilde")?
    } else {
        if c.values.contains_key("lambda_tilde") {
            bail!("lambda_tilde only applies to psm-tv-st");
        }
        0.0
    };
    let cfg = TvConfig {
        lambda: c.require("lambda")?,
        lambda_tilde,
        epsilon: c.parse("epsilon")?.unwrap_or(1e-6),
        k: c.require("k")?,
        d: c.require("d")?,
        xi: c.require("xi")?,
        iters: c.parse("iters")?.unwrap_or(500),
        step: c.parse("step")?.unwrap_or(1e-2),
        temporal_basis: c.temporal_basis()?,
        init: c.init()?,
    };
    c.finish()?;
    Ok(cfg)
}

/// FBP takes no tunables; the config file may be empty but unknown keys still
/// fail.
pub fn fbp_config(path: &Path) -> Result<()> {
    ConfigFile::load(path)?.finish()
}
