//! Partially separable (factorized low-rank) object model f = Lambda Psi^T
//! with the temporal subspace parametrization Psi = U Z, plus truncated-SVD
//! initialization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::image::DynamicObject;

/// Fixed temporal interpolation basis family for U.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemporalBasis {
    /// First d orthonormal DCT-II vectors of length P.
    Dct2,
    /// Cardinal natural cubic spline interpolants from d uniform knots
    /// (endpoints included) to P samples.
    CubicSpline,
}

impl std::str::FromStr for TemporalBasis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dct2" => Ok(TemporalBasis::Dct2),
            "cubic-spline" => Ok(TemporalBasis::CubicSpline),
            other => Err(Error::InvalidParam(format!(
                "unknown temporal basis '{other}' (expected dct2 or cubic-spline)"
            ))),
        }
    }
}

/// Rank-K factors of a dynamic object: spatial basis Lambda (N^2 x K), latent
/// temporal coefficients Z (d x K) and the fixed interpolation basis
/// U (P x d), with Psi = U Z.
#[derive(Clone, Debug)]
pub struct PsmFactors {
    n: usize,
    lambda: DMatrix<f64>,
    z: DMatrix<f64>,
    u: DMatrix<f64>,
}

impl PsmFactors {
    pub fn new(n: usize, lambda: DMatrix<f64>, z: DMatrix<f64>, u: DMatrix<f64>) -> Result<Self> {
        if lambda.nrows() != n * n {
            return Err(Error::shape("PsmFactors lambda rows", n * n, lambda.nrows()));
        }
        if z.ncols() != lambda.ncols() {
            return Err(Error::shape("PsmFactors z cols", lambda.ncols(), z.ncols()));
        }
        if u.ncols() != z.nrows() {
            return Err(Error::shape("PsmFactors u cols", z.nrows(), u.ncols()));
        }
        if z.nrows() < lambda.ncols() {
            return Err(Error::InvalidParam(format!(
                "temporal dimension d = {} must be >= PSM order K = {}",
                z.nrows(),
                lambda.ncols()
            )));
        }
        for (name, m) in [("lambda", &lambda), ("z", &z), ("u", &u)] {
            if !m.iter().all(|v| v.is_finite()) {
                let _ = name;
                return Err(Error::NonFinite("PsmFactors"));
            }
        }
        Ok(Self { n, lambda, z, u })
    }

    pub fn zeros(n: usize, k: usize, u: DMatrix<f64>) -> Result<Self> {
        let d = u.ncols();
        Self::new(n, DMatrix::zeros(n * n, k), DMatrix::zeros(d, k), u)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn d(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.u.nrows()
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn lambda_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.lambda
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn z_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.z
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Temporal basis Psi = U Z (P x K).
    pub fn psi(&self) -> DMatrix<f64> {
        &self.u * &self.z
    }

    /// Stored parameter count K N^2 + K d (excluding the fixed basis U).
    pub fn parameter_count(&self) -> usize {
        self.k() * self.n * self.n + self.k() * self.d()
    }
}

/// Evaluate the model: f = Lambda (U Z)^T, an N^2 x P object of rank <= K.
pub fn compose(factors: &PsmFactors) -> DynamicObject {
    let f = &factors.lambda * factors.psi().transpose();
    DynamicObject::new(factors.n, f).expect("finite factors compose to a finite object")
}

/// Build the fixed temporal interpolation basis U (P x d).
pub fn temporal_basis(kind: TemporalBasis, p: usize, d: usize) -> Result<DMatrix<f64>> {
    if d == 0 || p == 0 {
        return Err(Error::InvalidParam("temporal_basis: p and d must be positive".into()));
    }
    if d > p {
        return Err(Error::InvalidParam(format!(
            "temporal_basis: d = {d} exceeds p = {p}"
        )));
    }
    match kind {
        TemporalBasis::Dct2 => {
            let pf = p as f64;
            Ok(DMatrix::from_fn(p, d, |t, j| {
                let cj = if j == 0 { (1.0 / pf).sqrt() } else { (2.0 / pf).sqrt() };
                cj * (std::f64::consts::PI * (t as f64 + 0.5) * j as f64 / pf).cos()
            }))
        }
        TemporalBasis::CubicSpline => Ok(cardinal_spline_basis(p, d)),
    }
}

/// Columns are natural-cubic-spline cardinal interpolants: column m passes
/// through 1 at knot m and 0 at the other knots, sampled at t = 0..P-1.
/// Knots are uniform over [0, P-1] including both endpoints.
fn cardinal_spline_basis(p: usize, d: usize) -> DMatrix<f64> {
    if d == 1 {
        return DMatrix::from_element(p, 1, 1.0);
    }
    let knots: Vec<f64> = (0..d)
        .map(|m| m as f64 * (p as f64 - 1.0) / (d as f64 - 1.0))
        .collect();
    let mut u = DMatrix::zeros(p, d);
    for m in 0..d {
        let mut y = vec![0.0; d];
        y[m] = 1.0;
        let spline = NaturalCubicSpline::fit(&knots, &y);
        for t in 0..p {
            u[(t, m)] = spline.eval(t as f64);
        }
    }
    u
}

/// Natural cubic spline through (x_i, y_i), second derivative zero at the ends.
struct NaturalCubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m2: Vec<f64>,
}

impl NaturalCubicSpline {
    fn fit(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        let mut m2 = vec![0.0; n];
        if n > 2 {
            // Thomas solve of the tridiagonal system for interior second
            // derivatives; natural boundary: m2[0] = m2[n-1] = 0.
            let ni = n - 2;
            let mut sub = vec![0.0; ni];
            let mut diag = vec![0.0; ni];
            let mut sup = vec![0.0; ni];
            let mut rhs = vec![0.0; ni];
            for i in 0..ni {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                sub[i] = h0 / 6.0;
                diag[i] = (h0 + h1) / 3.0;
                sup[i] = h1 / 6.0;
                rhs[i] = (y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0;
            }
            for i in 1..ni {
                let w = sub[i] / diag[i - 1];
                diag[i] -= w * sup[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m2[ni] = rhs[ni - 1] / diag[ni - 1];
            for i in (1..ni).rev() {
                m2[i] = (rhs[i - 1] - sup[i - 1] * m2[i + 1]) / diag[i - 1];
            }
        }
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m2,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let mut i = match self
            .x
            .binary_search_by(|xi| xi.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        if t <= self.x[0] {
            i = 0;
        }
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m2[i] + (b * b * b - b) * self.m2[i + 1]) * h * h / 6.0
    }
}

/// Initialize factors from a crude object estimate by rank-k truncated SVD:
/// Lambda = A_k S_k, Psi_0 = B_k, and Z the least-squares fit of U Z to Psi_0.
///
/// Signs are fixed by forcing the largest-magnitude entry of each right
/// singular vector non-negative. Columns beyond the numerical rank of the
/// estimate are zero-filled.
pub fn svd_init(f0: &DynamicObject, k: usize, u: &DMatrix<f64>) -> Result<PsmFactors> {
    let n = f0.n();
    let p = f0.p();
    if u.nrows() != p {
        return Err(Error::shape("svd_init U rows", p, u.nrows()));
    }
    let d = u.ncols();
    if k > (n * n).min(p) {
        return Err(Error::InvalidParam(format!(
            "svd_init: k = {k} exceeds min(N^2, P) = {}",
            (n * n).min(p)
        )));
    }
    if k > d {
        return Err(Error::InvalidParam(format!(
            "svd_init: k = {k} exceeds temporal dimension d = {d}"
        )));
    }

    let (a, sv, b_right) = crate::linalg::thin_svd(f0.data());
    let tol = sv.max() * (n * n).max(p) as f64 * f64::EPSILON;

    let mut lambda = DMatrix::zeros(n * n, k);
    let mut psi0 = DMatrix::<f64>::zeros(p, k);
    for j in 0..k.min(sv.len()) {
        if sv[j] <= tol {
            continue; // rank exhausted: leave this and later columns zero
        }
        let mut b = DVector::from_fn(p, |t, _| b_right[(t, j)]);
        // Sign convention: largest-magnitude entry of b_j non-negative.
        let mut arg = 0;
        for t in 1..p {
            if b[t].abs() > b[arg].abs() {
                arg = t;
            }
        }
        let sign = if b[arg] < 0.0 { -1.0 } else { 1.0 };
        b *= sign;
        for i in 0..n * n {
            lambda[(i, j)] = sign * a[(i, j)] * sv[j];
        }
        psi0.column_mut(j).copy_from(&b);
    }

    // Z = arg min || U Z - Psi_0 ||_F.
    let z = crate::linalg::lstsq(u, &psi0);

    PsmFactors::new(n, lambda, z, u.clone())
}
