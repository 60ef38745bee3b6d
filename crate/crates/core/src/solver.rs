//! Bilinear ADMM for the hard-constrained factorized objective: alternating
//! Lambda and Z subproblem descent, a denoiser-driven f step (single
//! fixed-point evaluation or inner minimization), the scaled dual update, and
//! per-iteration convergence diagnostics.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::image::DynamicObject;
use crate::psm::{compose, svd_init, temporal_basis, PsmFactors, TemporalBasis};
use crate::red;
use crate::tomo::{DynamicOperator, Sinogram};

/// How the f subproblem is handled each outer iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FStep {
    /// Single denoiser evaluation per frame:
    /// f_t = lambda/(lambda+beta) D(f_t) + beta/(lambda+beta) (Lambda Psi^T + gamma) e_t.
    Efficient,
    /// Gradient descent on the strongly convex per-frame subproblem with step
    /// 1/(lambda (1 + L_D) + beta), until `max_iters` or gradient norm < `tol`.
    Exact { max_iters: usize, tol: f64 },
}

/// Initialization of the factors (gamma always starts at zero and
/// f at Lambda Psi^T).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScheme {
    /// Truncated SVD of the scaled backprojection estimate of the data.
    Svd,
    /// Lambda = 0 and z_k drawn from a standard normal with the given seed.
    Random { seed: u64 },
    Zero,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub k: usize,
    pub d: usize,
    /// Regularizer weight lambda >= 0.
    pub lambda: f64,
    /// Frobenius ridge weight xi > 0 on both factors.
    pub xi: f64,
    /// Penalty parameter beta > 0.
    pub beta: f64,
    pub outer_iters: usize,
    /// Inner first-order steps for each of the Lambda and Z subproblems.
    pub inner_iters: usize,
    /// Initial inner step size; halved on objective increase.
    pub inner_step: f64,
    pub f_step: FStep,
    pub temporal_basis: TemporalBasis,
    pub init: InitScheme,
    pub denoiser: Denoiser,
    /// Optional early stop when the constraint gap falls below
    /// `stop_gap_rtol * ||f||_F`.
    pub stop_gap_rtol: Option<f64>,
    /// Minimize over Lambda and Z simultaneously instead of in separate
    /// alternating subproblems. Off by default: the separate ordering is the
    /// one the descent theory covers.
    pub joint_factors: bool,
}

impl SolverConfig {
    /// Validate hard invariants; returns soft warnings (e.g. the descent
    /// condition beta > 2 lambda (1 + L_D) not holding).
    pub fn validate(&self, p: usize) -> Result<Vec<String>> {
        if self.k == 0 {
            return Err(Error::InvalidParam("k must be >= 1".into()));
        }
        if self.d < self.k {
            return Err(Error::InvalidParam(format!(
                "temporal dimension d = {} must be >= k = {}",
                self.d, self.k
            )));
        }
        if self.d > p {
            return Err(Error::InvalidParam(format!(
                "temporal dimension d = {} exceeds P = {p}",
                self.d
            )));
        }
        if !(self.xi > 0.0) {
            return Err(Error::InvalidParam("xi must be positive".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParam("beta must be positive".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidParam("lambda must be non-negative".into()));
        }
        if self.inner_iters == 0 || self.outer_iters == 0 {
            return Err(Error::InvalidParam("iteration counts must be >= 1".into()));
        }
        if !(self.inner_step > 0.0) {
            return Err(Error::InvalidParam("inner_step must be positive".into()));
        }
        let mut warnings = Vec::new();
        let l_d = match self.denoiser.lipschitz_bound() {
            Some(l) => l,
            None => {
                warnings.push(
                    "denoiser Lipschitz bound unknown; assuming L_D = 1 for step sizes".into(),
                );
                1.0
            }
        };
        let l = self.lambda * (1.0 + l_d);
        if self.beta <= 2.0 * l {
            warnings.push(format!(
                "beta = {} does not satisfy beta > 2L with L = lambda (1 + L_D) = {}; \
                 descent guarantees may not hold",
                self.beta, l
            ));
        }
        Ok(warnings)
    }

    fn l_d(&self) -> f64 {
        self.denoiser.lipschitz_bound().unwrap_or(1.0)
    }
}

/// ADMM iterates.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub factors: PsmFactors,
    pub f: DynamicObject,
    /// Scaled dual variable, N^2 x P.
    pub gamma: DMatrix<f64>,
    pub iter: usize,
}

/// One diagnostics row per outer iteration.
#[derive(Clone, Debug)]
pub struct IterRecord {
    pub iter: usize,
    /// Objective H: data fit + lambda rho_bar(f) + ridge terms.
    pub objective: f64,
    /// Augmented Lagrangian (objective + beta <gamma, gap> + beta/2 ||gap||^2).
    pub lagrangian: f64,
    /// Constraint gap || Lambda Psi^T - f ||_F.
    pub gap: f64,
    /// Stationarity residual norms for (f, Lambda, Psi) plus primal
    /// feasibility (which equals `gap`).
    pub res_f: f64,
    pub res_lambda: f64,
    pub res_psi: f64,
    pub res_feas: f64,
    /// Data fit || R_bar Lambda Psi^T - g ||_F.
    pub data_fit: f64,
    pub d_f: f64,
    pub d_lambda: f64,
    pub d_psi: f64,
    pub d_gamma: f64,
    pub norm_f: f64,
    pub norm_lambda: f64,
    pub norm_psi: f64,
    pub norm_gamma: f64,
    pub wall_ms: u128,
}

#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    pub rows: Vec<IterRecord>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub const CSV_HEADER: &'static str = "iter,objective,lagrangian,gap,res_f,res_lambda,res_psi,res_feas,fit,d_f,d_lambda,d_psi,d_gamma,norm_f,wall_ms";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.iter,
                r.objective,
                r.lagrangian,
                r.gap,
                r.res_f,
                r.res_lambda,
                r.res_psi,
                r.res_feas,
                r.data_fit,
                r.d_f,
                r.d_lambda,
                r.d_psi,
                r.d_gamma,
                r.norm_f,
                r.wall_ms
            ));
        }
        out
    }

    /// Max per-variable norms over all recorded iterations.
    pub fn max_norms(&self) -> Option<[f64; 4]> {
        if self.rows.is_empty() {
            return None;
        }
        let mut m = [0.0f64; 4];
        for r in &self.rows {
            m[0] = m[0].max(r.norm_f);
            m[1] = m[1].max(r.norm_lambda);
            m[2] = m[2].max(r.norm_psi);
            m[3] = m[3].max(r.norm_gamma);
        }
        Some(m)
    }
}

pub struct RunOutput {
    pub factors: PsmFactors,
    /// The constrained reconstruction Lambda Psi^T (rank <= K by construction).
    pub object: DynamicObject,
    /// Final value of the split variable f.
    pub f_split: DynamicObject,
    pub diagnostics: Diagnostics,
}

// ---------------------------------------------------------------------------
// Inner first-order optimizer: Adam with step-halving backtracking
// ---------------------------------------------------------------------------

struct Adam {
    lr: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(dim: usize, lr: f64) -> Self {
        Self {
            lr,
            t: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - Self::B1.powi(self.t as i32);
        let bc2 = 1.0 - Self::B2.powi(self.t as i32);
        for i in 0..x.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g[i] * g[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            x[i] -= self.lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

/// Minimize `obj` over `x` by `steps` Adam iterations. Any step that would
/// increase the objective is undone and retried with a halved learning rate,
/// so the returned objective never exceeds the initial one.
fn minimize_adam(
    x: &mut [f64],
    steps: usize,
    lr0: f64,
    mut grad: impl FnMut(&[f64]) -> Vec<f64>,
    mut obj: impl FnMut(&[f64]) -> f64,
) -> Result<f64> {
    let mut adam = Adam::new(x.len(), lr0);
    let mut current = obj(x);
    if !current.is_finite() {
        return Err(Error::NonFinite("inner objective"));
    }
    for _ in 0..steps {
        let g = grad(x);
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("inner gradient"));
        }
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn <= 1e-12 * (1.0 + xn) {
            break;
        }
        loop {
            let snap_x = x.to_vec();
            let snap_m = adam.m.clone();
            let snap_v = adam.v.clone();
            let snap_t = adam.t;
            adam.step(x, &g);
            let trial = obj(x);
            if trial.is_finite() && trial <= current {
                current = trial;
                break;
            }
            x.copy_from_slice(&snap_x);
            adam.m = snap_m;
            adam.v = snap_v;
            adam.t = snap_t;
            adam.lr *= 0.5;
            if adam.lr < 1e-18 {
                return Ok(current);
            }
        }
    }
    Ok(current)
}

// ---------------------------------------------------------------------------
// The solver
// ---------------------------------------------------------------------------

pub struct AdmmSolver {
    cfg: SolverConfig,
    op: DynamicOperator,
    /// Measurements, N x P.
    g: DMatrix<f64>,
    /// Precomputed adjoint of the data, N^2 x P.
    rtg: DMatrix<f64>,
    /// Fixed temporal interpolation basis, P x d.
    u: DMatrix<f64>,
    n: usize,
    warnings: Vec<String>,
}

impl AdmmSolver {
    pub fn new(g: &Sinogram, cfg: SolverConfig) -> Result<Self> {
        let warnings = cfg.validate(g.p())?;
        let n = g.n_det();
        let op = DynamicOperator::new(n, g.angles())?;
        let rtg = op.adjoint_matrix(g.data()).data().clone();
        let u = temporal_basis(cfg.temporal_basis, g.p(), cfg.d)?;
        Ok(Self {
            cfg,
            op,
            g: g.data().clone(),
            rtg,
            u,
            n,
            warnings,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn p(&self) -> usize {
        self.g.ncols()
    }

    pub fn init_state(&self) -> Result<SolverState> {
        let (n, k) = (self.n, self.cfg.k);
        let factors = match self.cfg.init {
            InitScheme::Zero => PsmFactors::zeros(n, k, self.u.clone())?,
            InitScheme::Random { seed } => {
                use rand::SeedableRng;
                use rand_distr::Distribution;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let normal = rand_distr::StandardNormal;
                let z = DMatrix::from_fn(self.cfg.d, k, |_, _| normal.sample(&mut rng));
                PsmFactors::new(n, DMatrix::zeros(n * n, k), z, self.u.clone())?
            }
            InitScheme::Svd => {
                // Backprojection estimate, least-squares rescaled so its
                // projections match the data energy.
                let f0 = DynamicObject::new(n, self.rtg.clone())?;
                let rf0 = self.op.forward_matrix(f0.data());
                let denom = rf0.dot(&rf0);
                let alpha = if denom > 0.0 {
                    rf0.dot(&self.g) / denom
                } else {
                    0.0
                };
                let scaled = DynamicObject::new(n, f0.data() * alpha)?;
                svd_init(&scaled, k, &self.u)?
            }
        };
        let f = compose(&factors);
        let p = self.p();
        Ok(SolverState {
            factors,
            f,
            gamma: DMatrix::zeros(n * n, p),
            iter: 0,
        })
    }

    // -- subproblem objectives and analytic gradients ----------------------

    fn fit_residual_adjoint(&self, fhat: &DMatrix<f64>) -> DMatrix<f64> {
        self.op
            .adjoint_matrix(&self.op.forward_matrix(fhat))
            .data()
            .clone()
            - &self.rtg
    }

    fn data_fit_sq(&self, fhat: &DMatrix<f64>) -> f64 {
        (self.op.forward_matrix(fhat) - &self.g).norm_squared()
    }

    /// S_Lambda = ||R fhat - g||^2 + xi ||Lambda||^2 + beta/2 ||fhat - f + gamma||^2.
    pub fn s_lambda(
        &self,
        lambda: &DMatrix<f64>,
        psi: &DMatrix<f64>,
        f: &DMatrix<f64>,
        gamma: &DMatrix<f64>,
    ) -> f64 {
        let fhat = lambda * psi.transpose();
        self.data_fit_sq(&fhat)
            + self.cfg.xi * lambda.norm_squared()
            + 0.5 * self.cfg.beta * (&fhat - f + gamma).norm_squared()
    }

    pub fn grad_s_lambda(
        &self,
        lambda: &DMatrix<f64>,
        psi: &DMatrix<f64>,
        f: &DMatrix<f64>,
        gamma: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let fhat = lambda * psi.transpose();
        let e = self.fit_residual_adjoint(&fhat);
        2.0 * e * psi
            + 2.0 * self.cfg.xi * lambda
            + self.cfg.beta * (&fhat - f + gamma) * psi
    }

    /// S_Psi as a function of Z (Psi = U Z):
    /// ||R fhat - g||^2 + xi ||U Z||^2 + beta/2 ||fhat - f + gamma||^2.
    pub fn s_z(
        &self,
        z: &DMatrix<f64>,
        lambda: &DMatrix<f64>,
        f: &DMatrix<f64>,
        gamma: &DMatrix<f64>,
    ) -> f64 {
        let psi = &self.u * z;
        let fhat = lambda * psi.transpose();
        self.data_fit_sq(&fhat)
            + self.cfg.xi * psi.norm_squared()
            + 0.5 * self.cfg.beta * (&fhat - f + gamma).norm_squared()
    }

    pub fn grad_s_z(
        &self,
        z: &DMatrix<f64>,
        lambda: &DMatrix<f64>,
        f: &DMatrix<f64>,
        gamma: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let psi = &self.u * z;
        let fhat = lambda * psi.transpose();
        let e = self.fit_residual_adjoint(&fhat);
        let grad_psi = 2.0 * e.transpose() * lambda
            + 2.0 * self.cfg.xi * &psi
            + self.cfg.beta * (&fhat - f + gamma).transpose() * lambda;
        self.u.transpose() * grad_psi
    }

    // -- ADMM steps ---------------------------------------------------------

    /// Descend S_Lambda by `inner_iters` first-order steps; the inner
    /// objective is non-increasing (backtracking on violation).
    pub fn lambda_step(&self, state: &mut SolverState) -> Result<()> {
        let psi = state.factors.psi();
        let f = state.f.data().clone();
        let gamma = state.gamma.clone();
        let (n2, k) = (self.n * self.n, self.cfg.k);
        let mut x: Vec<f64> = state.factors.lambda().as_slice().to_vec();
        minimize_adam(
            &mut x,
            self.cfg.inner_iters,
            self.cfg.inner_step,
            |xs| {
                let l = DMatrix::from_column_slice(n2, k, xs);
                self.grad_s_lambda(&l, &psi, &f, &gamma).as_slice().to_vec()
            },
            |xs| {
                let l = DMatrix::from_column_slice(n2, k, xs);
                self.s_lambda(&l, &psi, &f, &gamma)
            },
        )?;
        state
            .factors
            .lambda_mut()
            .copy_from(&DMatrix::from_column_slice(n2, k, &x));
        Ok(())
    }

    /// Descend S_Psi over the latent coefficients Z.
    pub fn psi_step(&self, state: &mut SolverState) -> Result<()> {
        let lambda = state.factors.lambda().clone();
        let f = state.f.data().clone();
        let gamma = state.gamma.clone();
        let (d, k) = (self.cfg.d, self.cfg.k);
        let mut x: Vec<f64> = state.factors.z().as_slice().to_vec();
        minimize_adam(
            &mut x,
            self.cfg.inner_iters,
            self.cfg.inner_step,
            |xs| {
                let z = DMatrix::from_column_slice(d, k, xs);
                self.grad_s_z(&z, &lambda, &f, &gamma).as_slice().to_vec()
            },
            |xs| {
                let z = DMatrix::from_column_slice(d, k, xs);
                self.s_z(&z, &lambda, &f, &gamma)
            },
        )?;
        state
            .factors
            .z_mut()
            .copy_from(&DMatrix::from_column_slice(d, k, &x));
        Ok(())
    }

    /// Joint variant of the factor updates: one inner descent over the
    /// concatenated (Lambda, Z) parameters of
    /// ||R fhat - g||^2 + xi ||Lambda||^2 + xi ||U Z||^2 + beta/2 ||fhat - f + gamma||^2.
    pub fn joint_factor_step(&self, state: &mut SolverState) -> Result<()> {
        let f = state.f.data().clone();
        let gamma = state.gamma.clone();
        let (n2, k, d) = (self.n * self.n, self.cfg.k, self.cfg.d);
        let mut x: Vec<f64> = state
            .factors
            .lambda()
            .as_slice()
            .iter()
            .chain(state.factors.z().as_slice())
            .copied()
            .collect();
        let split = n2 * k;
        minimize_adam(
            &mut x,
            self.cfg.inner_iters,
            self.cfg.inner_step,
            |xs| {
                let lambda = DMatrix::from_column_slice(n2, k, &xs[..split]);
                let z = DMatrix::from_column_slice(d, k, &xs[split..]);
                let psi = &self.u * &z;
                let mut g = self
                    .grad_s_lambda(&lambda, &psi, &f, &gamma)
                    .as_slice()
                    .to_vec();
                g.extend(self.grad_s_z(&z, &lambda, &f, &gamma).as_slice());
                g
            },
            |xs| {
                let lambda = DMatrix::from_column_slice(n2, k, &xs[..split]);
                let z = DMatrix::from_column_slice(d, k, &xs[split..]);
                self.s_z(&z, &lambda, &f, &gamma) + self.cfg.xi * lambda.norm_squared()
            },
        )?;
        state
            .factors
            .lambda_mut()
            .copy_from(&DMatrix::from_column_slice(n2, k, &x[..split]));
        state
            .factors
            .z_mut()
            .copy_from(&DMatrix::from_column_slice(d, k, &x[split..]));
        Ok(())
    }

    pub fn f_step(&self, state: &mut SolverState) -> Result<()> {
        match self.cfg.f_step {
            FStep::Efficient => self.f_step_efficient(state),
            FStep::Exact { max_iters, tol } => self.f_step_exact(state, max_iters, tol),
        }
    }

    /// Single-denoiser-call update:
    /// f_t = lambda/(lambda+beta) D(f_t^old) + beta/(lambda+beta) (fhat + gamma) e_t.
    pub fn f_step_efficient(&self, state: &mut SolverState) -> Result<()> {
        let (lambda, beta) = (self.cfg.lambda, self.cfg.beta);
        if lambda + beta <= 0.0 {
            return Err(Error::InvalidParam("f step requires lambda + beta > 0".into()));
        }
        let c1 = lambda / (lambda + beta);
        let c2 = beta / (lambda + beta);
        let target = compose(&state.factors).data() + &state.gamma;
        let n = self.n;
        let n2 = n * n;
        let cols: Vec<Result<Vec<f64>>> = (0..self.p())
            .into_par_iter()
            .map(|t| {
                let d = self.cfg.denoiser.apply_raw(state.f.frame_slice(t), n)?;
                let v = &target.as_slice()[t * n2..(t + 1) * n2];
                Ok(d.iter().zip(v).map(|(dv, tv)| c1 * dv + c2 * tv).collect())
            })
            .collect();
        for (t, col) in cols.into_iter().enumerate() {
            state.f.data_mut().column_mut(t).copy_from_slice(&col?);
        }
        Ok(())
    }

    /// Inner minimization of
    /// S_f(f_t) = lambda rho(f_t) + beta/2 ||(fhat + gamma) e_t - f_t||^2
    /// per column, warm-started at the previous f.
    pub fn f_step_exact(&self, state: &mut SolverState, max_iters: usize, tol: f64) -> Result<()> {
        let (lambda, beta) = (self.cfg.lambda, self.cfg.beta);
        if lambda + beta <= 0.0 {
            return Err(Error::InvalidParam("f step requires lambda + beta > 0".into()));
        }
        let step = 1.0 / (lambda * (1.0 + self.cfg.l_d()) + beta);
        let target = compose(&state.factors).data() + &state.gamma;
        let n = self.n;
        let n2 = n * n;
        let cols: Vec<Result<Vec<f64>>> = (0..self.p())
            .into_par_iter()
            .map(|t| {
                let v = &target.as_slice()[t * n2..(t + 1) * n2];
                let mut x: Vec<f64> = state.f.frame_slice(t).to_vec();
                for _ in 0..max_iters {
                    let d = self.cfg.denoiser.apply_raw(&x, n)?;
                    let mut gn = 0.0;
                    let mut grad = vec![0.0; n2];
                    for i in 0..n2 {
                        let gi = lambda * (x[i] - d[i]) + beta * (x[i] - v[i]);
                        grad[i] = gi;
                        gn += gi * gi;
                    }
                    if gn.sqrt() <= tol {
                        break;
                    }
                    for i in 0..n2 {
                        x[i] -= step * grad[i];
                    }
                }
                Ok(x)
            })
            .collect();
        for (t, col) in cols.into_iter().enumerate() {
            state.f.data_mut().column_mut(t).copy_from_slice(&col?);
        }
        Ok(())
    }

    /// gamma <- gamma + Lambda Psi^T - f.
    pub fn dual_step(&self, state: &mut SolverState) {
        let fhat = compose(&state.factors);
        state.gamma += fhat.data() - state.f.data();
    }

    // -- diagnostics --------------------------------------------------------

    /// Objective H: sum_t ||R fhat e_t - g_t||^2 + lambda rho(f e_t)
    /// + xi ||Lambda||^2 + xi ||Psi||^2.
    pub fn objective(&self, state: &SolverState) -> Result<f64> {
        let fhat = compose(&state.factors);
        Ok(self.data_fit_sq(fhat.data())
            + self.cfg.lambda * red::rho_bar(&state.f, &self.cfg.denoiser)?
            + self.cfg.xi * state.factors.lambda().norm_squared()
            + self.cfg.xi * state.factors.psi().norm_squared())
    }

    /// Augmented Lagrangian: H + beta <gamma, gap> + beta/2 ||gap||^2 with
    /// gap = Lambda Psi^T - f.
    pub fn augmented_lagrangian(&self, state: &SolverState) -> Result<f64> {
        let fhat = compose(&state.factors);
        let gap = fhat.data() - state.f.data();
        Ok(self.objective(state)?
            + self.cfg.beta * state.gamma.dot(&gap)
            + 0.5 * self.cfg.beta * gap.norm_squared())
    }

    /// Norms of the four first-order stationarity conditions:
    /// (f, Lambda, Psi) gradients of the Lagrangian and the primal
    /// feasibility gap.
    pub fn stationarity_residuals(&self, state: &SolverState) -> Result<[f64; 4]> {
        let (lambda_w, beta, xi) = (self.cfg.lambda, self.cfg.beta, self.cfg.xi);
        let fhat = compose(&state.factors);
        let psi = state.factors.psi();

        let grad_rho = red::grad_rho_bar(&state.f, &self.cfg.denoiser)?;
        let res_f = (lambda_w * grad_rho.data() - beta * &state.gamma).norm();

        // 2 R^T (R fhat - g) + beta gamma appears in both factor conditions.
        let core = 2.0 * self.fit_residual_adjoint(fhat.data()) + beta * &state.gamma;
        let res_lambda = (&core * &psi + 2.0 * xi * state.factors.lambda()).norm();
        let res_psi = (core.transpose() * state.factors.lambda() + 2.0 * xi * &psi).norm();

        let gap = (fhat.data() - state.f.data()).norm();
        Ok([res_f, res_lambda, res_psi, gap])
    }

    pub fn data_fit(&self, state: &SolverState) -> f64 {
        self.data_fit_sq(compose(&state.factors).data()).sqrt()
    }

    fn record(
        &self,
        state: &SolverState,
        prev: &SolverState,
        started: Instant,
    ) -> Result<IterRecord> {
        let res = self.stationarity_residuals(state)?;
        let psi = state.factors.psi();
        let prev_psi = prev.factors.psi();
        Ok(IterRecord {
            iter: state.iter,
            objective: self.objective(state)?,
            lagrangian: self.augmented_lagrangian(state)?,
            gap: res[3],
            res_f: res[0],
            res_lambda: res[1],
            res_psi: res[2],
            res_feas: res[3],
            data_fit: self.data_fit(state),
            d_f: (state.f.data() - prev.f.data()).norm(),
            d_lambda: (state.factors.lambda() - prev.factors.lambda()).norm(),
            d_psi: (&psi - prev_psi).norm(),
            d_gamma: (&state.gamma - &prev.gamma).norm(),
            norm_f: state.f.norm(),
            norm_lambda: state.factors.lambda().norm(),
            norm_psi: psi.norm(),
            norm_gamma: state.gamma.norm(),
            wall_ms: started.elapsed().as_millis(),
        })
    }

    fn state_is_finite(state: &SolverState) -> bool {
        state.f.data().iter().all(|v| v.is_finite())
            && state.factors.lambda().iter().all(|v| v.is_finite())
            && state.factors.z().iter().all(|v| v.is_finite())
            && state.gamma.iter().all(|v| v.is_finite())
    }

    /// Run init followed by `outer_iters` rounds of
    /// (Lambda step, Z step, f step, dual step), recording diagnostics every
    /// iteration. Deterministic for a fixed config and seed.
    pub fn run(&self) -> Result<RunOutput> {
        let started = Instant::now();
        let mut diagnostics = Diagnostics {
            rows: Vec::with_capacity(self.cfg.outer_iters),
            warnings: self.warnings.clone(),
        };
        let mut state = self.init_state()?;
        for i in 1..=self.cfg.outer_iters {
            let prev = state.clone();
            let step_result = self
                .lambda_step(&mut state)
                .and_then(|_| self.psi_step(&mut state))
                .and_then(|_| self.f_step(&mut state));
            if let Err(e) = step_result {
                return Err(Error::SolverAborted {
                    iter: i,
                    reason: e.to_string(),
                    dump: diagnostics.to_csv(),
                });
            }
            self.dual_step(&mut state);
            state.iter = i;
            if !Self::state_is_finite(&state) {
                return Err(Error::SolverAborted {
                    iter: i,
                    reason: "non-finite iterate".into(),
                    dump: diagnostics.to_csv(),
                });
            }
            let row = self.record(&state, &prev, started)?;
            let stop = self
                .cfg
                .stop_gap_rtol
                .map(|rtol| row.gap <= rtol * state.f.norm().max(f64::MIN_POSITIVE))
                .unwrap_or(false);
            diagnostics.rows.push(row);
            if stop {
                break;
            }
        }
        let object = compose(&state.factors);
        Ok(RunOutput {
            factors: state.factors,
            object,
            f_split: state.f,
            diagnostics,
        })
    }
}

/// Convenience wrapper: build the solver and run it.
pub fn run(g: &Sinogram, cfg: &SolverConfig) -> Result<RunOutput> {
    AdmmSolver::new(g, cfg.clone())?.run()
}
