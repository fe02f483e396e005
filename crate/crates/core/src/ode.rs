//! Time integration of the structured tent system
//!
//! ```text
//!     d/dt ( M0(U) - t·M1(U) ) = A(U),   t ∈ [0, τ_end]
//! ```
//!
//! `Y = M(t, U)` is kept as a dual vector (integrals against the basis).
//! SARK steps only ever invert the time-independent `M0`. The classical
//! baseline instead integrates `Y' = A(M⁻¹(t, Y))` and has to invert the
//! time-dependent `M(t)` at every stage.

use crate::tableau::{ButcherTableau, SarkTableau};
use nalgebra::{DMatrix, DVector};
use std::fmt;
use thiserror::Error;

/// Where inside a tent solve an error happened.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolveContext {
    pub tent: Option<usize>,
    pub substep: Option<usize>,
    pub stage: Option<usize>,
}

impl fmt::Display for SolveContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(t) = self.tent {
            parts.push(format!("tent {t}"));
        }
        if let Some(k) = self.substep {
            parts.push(format!("substep {k}"));
        }
        if let Some(i) = self.stage {
            parts.push(format!("stage {i}"));
        }
        write!(f, "{}", parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("Newton iteration on element {element} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NewtonNotConverged {
        element: usize,
        iterations: usize,
        residual: f64,
    },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("reference integration did not reach tolerance {tol:e} (last difference {diff:.3e})")]
    ReferenceNotConverged { tol: f64, diff: f64 },
    #[error("degenerate order fit: {0}")]
    DegenerateFit(String),
    #[error("{context}: {source}")]
    InTent {
        context: SolveContext,
        source: Box<SolveError>,
    },
}

impl SolveError {
    /// Attaches location information, filling only fields not set yet.
    pub fn within(self, update: impl FnOnce(&mut SolveContext)) -> Self {
        match self {
            SolveError::InTent { mut context, source } => {
                let mut extra = SolveContext::default();
                update(&mut extra);
                context.tent = context.tent.or(extra.tent);
                context.substep = context.substep.or(extra.substep);
                context.stage = context.stage.or(extra.stage);
                SolveError::InTent { context, source }
            }
            other => {
                let mut context = SolveContext::default();
                update(&mut context);
                SolveError::InTent {
                    context,
                    source: Box::new(other),
                }
            }
        }
    }

    pub fn context(&self) -> Option<&SolveContext> {
        match self {
            SolveError::InTent { context, .. } => Some(context),
            _ => None,
        }
    }
}

/// The operators of one structured ODE `d/dt M(t, U) = A(U)` with
/// `M(t, W) = M0(W) - t·M1(W)`.
///
/// Coefficient vectors (`W`, `U`) and dual vectors (`Y`, `R`) both have
/// length [`dim`](Self::dim).
pub trait StructuredOde {
    fn dim(&self) -> usize;
    fn apply_a(&self, w: &[f64], out: &mut [f64]);
    fn apply_m0(&self, w: &[f64], out: &mut [f64]);
    fn apply_m1(&self, w: &[f64], out: &mut [f64]);
    /// Inverse of `M(t, ·)`.
    fn solve_m(&self, t: f64, r: &[f64], out: &mut [f64]) -> Result<(), SolveError>;
    fn is_linear(&self) -> bool;

    /// Inverse of `M0`; must agree with `solve_m(0, ·)`.
    fn solve_m0(&self, r: &[f64], out: &mut [f64]) -> Result<(), SolveError> {
        self.solve_m(0.0, r, out)
    }

    fn apply_m(&self, t: f64, w: &[f64], out: &mut [f64]) {
        let mut m1 = vec![0.0; self.dim()];
        self.apply_m0(w, out);
        self.apply_m1(w, &mut m1);
        for (o, v) in out.iter_mut().zip(&m1) {
            *o -= t * v;
        }
    }
}

impl<T: StructuredOde + ?Sized> StructuredOde for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply_a(&self, w: &[f64], out: &mut [f64]) {
        (**self).apply_a(w, out)
    }
    fn apply_m0(&self, w: &[f64], out: &mut [f64]) {
        (**self).apply_m0(w, out)
    }
    fn apply_m1(&self, w: &[f64], out: &mut [f64]) {
        (**self).apply_m1(w, out)
    }
    fn solve_m(&self, t: f64, r: &[f64], out: &mut [f64]) -> Result<(), SolveError> {
        (**self).solve_m(t, r, out)
    }
    fn solve_m0(&self, r: &[f64], out: &mut [f64]) -> Result<(), SolveError> {
        (**self).solve_m0(r, out)
    }
    fn is_linear(&self) -> bool {
        (**self).is_linear()
    }
}

/// Dense linear structured ODE: `M0`, `M1`, `A` are plain matrices.
#[derive(Debug, Clone)]
pub struct LinearOde {
    m0: DMatrix<f64>,
    m1: DMatrix<f64>,
    a: DMatrix<f64>,
    m0_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl LinearOde {
    pub fn new(m0: DMatrix<f64>, m1: DMatrix<f64>, a: DMatrix<f64>) -> Self {
        let n = m0.nrows();
        assert!(m0.is_square() && m1.shape() == (n, n) && a.shape() == (n, n));
        let m0_lu = m0.clone().lu();
        Self { m0, m1, a, m0_lu }
    }

    /// The system with `M0 = I`, so that `Ã = a` and `M̃1 = m1`.
    pub fn with_identity_mass(a: DMatrix<f64>, m1: DMatrix<f64>) -> Self {
        let n = a.nrows();
        Self::new(DMatrix::identity(n, n), m1, a)
    }

    pub fn m0(&self) -> &DMatrix<f64> {
        &self.m0
    }

    pub fn m1(&self) -> &DMatrix<f64> {
        &self.m1
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `Ã = A·M0⁻¹` and `M̃1 = M1·M0⁻¹` as explicit matrices.
    pub fn reduced(&self) -> Result<(DMatrix<f64>, DMatrix<f64>), SolveError> {
        let inv = self
            .m0_lu
            .try_inverse()
            .ok_or_else(|| SolveError::Singular("M0 is not invertible".into()))?;
        Ok((&self.a * &inv, &self.m1 * &inv))
    }
}

fn mat_apply(m: &DMatrix<f64>, w: &[f64], out: &mut [f64]) {
    let n = m.nrows();
    for (i, o) in out.iter_mut().enumerate().take(n) {
        *o = (0..m.ncols()).map(|j| m[(i, j)] * w[j]).sum();
    }
}

impl StructuredOde for LinearOde {
    fn dim(&self) -> usize {
        self.m0.nrows()
    }

    fn apply_a(&self, w: &[f64], out: &mut [f64]) {
        mat_apply(&self.a, w, out)
    }

    fn apply_m0(&self, w: &[f64], out: &mut [f64]) {
        mat_apply(&self.m0, w, out)
    }

    fn apply_m1(&self, w: &[f64], out: &mut [f64]) {
        mat_apply(&self.m1, w, out)
    }

    fn solve_m(&self, t: f64, r: &[f64], out: &mut [f64]) -> Result<(), SolveError> {
        let rhs = DVector::from_column_slice(r);
        let sol = if t == 0.0 {
            self.m0_lu.solve(&rhs)
        } else {
            (&self.m0 - t * &self.m1).lu().solve(&rhs)
        }
        .ok_or_else(|| SolveError::Singular(format!("M({t}) is not invertible")))?;
        out.copy_from_slice(sol.as_slice());
        Ok(())
    }

    fn is_linear(&self) -> bool {
        true
    }
}

/// Uniform partition of the pseudo-time interval `[0, 1]` into `r` substeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubtentPlan {
    r: usize,
}

impl SubtentPlan {
    pub fn new(r: usize) -> Self {
        assert!(r >= 1, "at least one substep is required");
        Self { r }
    }

    pub fn substeps(&self) -> usize {
        self.r
    }

    /// `t̂_k = k/r` for `k = 0..=r`.
    pub fn breakpoints(&self) -> Vec<f64> {
        (0..=self.r).map(|k| k as f64 / self.r as f64).collect()
    }

    pub fn tau(&self) -> f64 {
        1.0 / self.r as f64
    }
}

/// Produces the structured ODE of substep `k` of an `r`-substep plan.
pub trait OdeFamily {
    type Ode: StructuredOde;
    fn substep(&self, k: usize, r: usize) -> Self::Ode;
}

impl<F, O> OdeFamily for F
where
    F: Fn(usize, usize) -> O,
    O: StructuredOde,
{
    type Ode = O;
    fn substep(&self, k: usize, r: usize) -> O {
        self(k, r)
    }
}

/// Initial data of a tent solve.
#[derive(Debug, Clone, Copy)]
pub enum TentInput<'a> {
    /// `U0`, coefficients at the tent bottom; `Y0 = M0(U0)`.
    Coefficients(&'a [f64]),
    /// `Y0`, already in dual form.
    Dual(&'a [f64]),
}

/// `Y^[k]` for `k = 0..=r` and optionally the stage values of each substep.
#[derive(Debug, Clone, Default)]
pub struct StepTrace {
    pub y: Vec<Vec<f64>>,
    pub stages: Option<Vec<Vec<Vec<f64>>>>,
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn sark_step_impl<O: StructuredOde + ?Sized>(
    ode: &O,
    t: &SarkTableau,
    tau: f64,
    y: &[f64],
    mut stages_out: Option<&mut Vec<Vec<f64>>>,
) -> Result<Vec<f64>, SolveError> {
    let m = ode.dim();
    let s = t.stages();
    let mut a_evals: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut m_evals: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut u = vec![0.0; m];
    for i in 0..s {
        let mut z = y.to_vec();
        for j in 0..i {
            let (dij, aij) = (t.d(i, j), t.a(i, j));
            if dij != 0.0 {
                axpy(tau * dij, &m_evals[j], &mut z);
            }
            if aij != 0.0 {
                axpy(tau * aij, &a_evals[j], &mut z);
            }
        }
        ode.solve_m0(&z, &mut u)
            .map_err(|e| e.within(|c| c.stage = Some(i)))?;
        let mut ka = vec![0.0; m];
        ode.apply_a(&u, &mut ka);
        a_evals.push(ka);
        let mut km = vec![0.0; m];
        if i + 1 < s {
            ode.apply_m1(&u, &mut km);
        }
        m_evals.push(km);
        if let Some(out) = stages_out.as_deref_mut() {
            out.push(z);
        }
    }
    let mut next = y.to_vec();
    for (bi, ka) in t.b().iter().zip(&a_evals) {
        if *bi != 0.0 {
            axpy(tau * bi, ka, &mut next);
        }
    }
    Ok(next)
}

/// One SARK step of size `tau` from `y`:
///
/// ```text
/// Z_i = Y + τ Σ_{j<i} d_ij M̃1(Z_j) + τ Σ_{j<i} a_ij Ã(Z_j)
/// Y_τ = Y + τ Σ_i b_i Ã(Z_i)
/// ```
pub fn sark_step<O: StructuredOde + ?Sized>(
    ode: &O,
    t: &SarkTableau,
    tau: f64,
    y: &[f64],
) -> Result<Vec<f64>, SolveError> {
    sark_step_impl(ode, t, tau, y, None)
}

/// One classical explicit RK step on `Y' = A(M⁻¹(t, Y))` from `t = 0`.
pub fn classical_rk_step<O: StructuredOde + ?Sized>(
    ode: &O,
    t: &ButcherTableau,
    tau: f64,
    y: &[f64],
) -> Result<Vec<f64>, SolveError> {
    let m = ode.dim();
    let s = t.stages();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut u = vec![0.0; m];
    for i in 0..s {
        let mut z = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let aij = t.a(i, j);
            if aij != 0.0 {
                axpy(tau * aij, kj, &mut z);
            }
        }
        ode.solve_m(t.c()[i] * tau, &z, &mut u)
            .map_err(|e| e.within(|c| c.stage = Some(i)))?;
        let mut ki = vec![0.0; m];
        ode.apply_a(&u, &mut ki);
        k.push(ki);
    }
    let mut next = y.to_vec();
    for (bi, ki) in t.b().iter().zip(&k) {
        if *bi != 0.0 {
            axpy(tau * bi, ki, &mut next);
        }
    }
    Ok(next)
}

fn initial_dual<O: StructuredOde>(ode0: &O, input: TentInput<'_>) -> Vec<f64> {
    match input {
        TentInput::Dual(y) => y.to_vec(),
        TentInput::Coefficients(u) => {
            let mut y = vec![0.0; ode0.dim()];
            ode0.apply_m0(u, &mut y);
            y
        }
    }
}

/// SARK integration over a whole tent, one step per subtent. Returns the
/// coefficients at the tent top, recovered with the last substep's `M(τ)⁻¹`.
pub fn sark_tent_solve<F: OdeFamily>(
    family: &F,
    t: &SarkTableau,
    plan: SubtentPlan,
    input: TentInput<'_>,
    retain_stages: bool,
) -> Result<(Vec<f64>, StepTrace), SolveError> {
    let r = plan.substeps();
    let tau = plan.tau();
    let mut trace = StepTrace {
        y: Vec::with_capacity(r + 1),
        stages: retain_stages.then(Vec::new),
    };
    let mut ode = family.substep(0, r);
    let mut y = initial_dual(&ode, input);
    trace.y.push(y.clone());
    for k in 0..r {
        if k > 0 {
            ode = family.substep(k, r);
        }
        let mut stages = retain_stages.then(Vec::new);
        y = sark_step_impl(&ode, t, tau, &y, stages.as_mut())
            .map_err(|e| e.within(|c| c.substep = Some(k)))?;
        if let (Some(all), Some(st)) = (trace.stages.as_mut(), stages) {
            all.push(st);
        }
        trace.y.push(y.clone());
    }
    let mut u = vec![0.0; ode.dim()];
    ode.solve_m(tau, &y, &mut u)
        .map_err(|e| e.within(|c| c.substep = Some(r - 1)))?;
    Ok((u, trace))
}

/// Classical RK integration of `Y' = A(M⁻¹(t, Y))` over the same subtent
/// breakpoints, followed by the same top recovery as [`sark_tent_solve`].
pub fn classical_rk_tent_solve<F: OdeFamily>(
    family: &F,
    t: &ButcherTableau,
    plan: SubtentPlan,
    input: TentInput<'_>,
) -> Result<Vec<f64>, SolveError> {
    let r = plan.substeps();
    let tau = plan.tau();
    let mut ode = family.substep(0, r);
    let mut y = initial_dual(&ode, input);
    for k in 0..r {
        if k > 0 {
            ode = family.substep(k, r);
        }
        y = classical_rk_step(&ode, t, tau, &y).map_err(|e| e.within(|c| c.substep = Some(k)))?;
    }
    let mut u = vec![0.0; ode.dim()];
    ode.solve_m(tau, &y, &mut u)
        .map_err(|e| e.within(|c| c.substep = Some(r - 1)))?;
    Ok(u)
}

fn reduced_a<O: StructuredOde + ?Sized>(ode: &O, z: &[f64]) -> Result<Vec<f64>, SolveError> {
    let mut u = vec![0.0; ode.dim()];
    ode.solve_m0(z, &mut u)?;
    let mut out = vec![0.0; ode.dim()];
    ode.apply_a(&u, &mut out);
    Ok(out)
}

/// `M̃1 = M1∘M0⁻¹` assembled column by column (valid when `M̃1` is linear).
fn reduced_m1_matrix<O: StructuredOde + ?Sized>(ode: &O) -> Result<DMatrix<f64>, SolveError> {
    let m = ode.dim();
    let mut b = DMatrix::zeros(m, m);
    let mut e = vec![0.0; m];
    let mut u = vec![0.0; m];
    let mut col = vec![0.0; m];
    for j in 0..m {
        e.fill(0.0);
        e[j] = 1.0;
        ode.solve_m0(&e, &mut u)?;
        ode.apply_m1(&u, &mut col);
        b.set_column(j, &DVector::from_column_slice(&col));
    }
    Ok(b)
}

/// Reference solution `Y(t_end)` of the exact flow
///
/// ```text
/// (I - tB) Z' = Ã(Z) + B Z,   Y' = Ã(Z),   Z(0) = Y(0) = Y0
/// ```
///
/// where `B` is the (linear) `M̃1`. Integrated with fixed-step classical RK4,
/// halving the step until two successive answers differ by less than `tol`.
pub fn reference_flow<O: StructuredOde + ?Sized>(
    ode: &O,
    y0: &[f64],
    t_end: f64,
    tol: f64,
) -> Result<Vec<f64>, SolveError> {
    const MAX_STEPS: usize = 1 << 22;
    let m = ode.dim();
    let b = reduced_m1_matrix(ode)?;
    let ident = DMatrix::<f64>::identity(m, m);

    let rhs = |t: f64, z: &[f64]| -> Result<(Vec<f64>, Vec<f64>), SolveError> {
        let az = reduced_a(ode, z)?;
        let zv = DVector::from_column_slice(z);
        let right = DVector::from_column_slice(&az) + &b * zv;
        let dz = (&ident - t * &b)
            .lu()
            .solve(&right)
            .ok_or_else(|| SolveError::Singular(format!("I - tB is singular at t = {t}")))?;
        Ok((dz.as_slice().to_vec(), az))
    };

    let integrate = |n: usize| -> Result<Vec<f64>, SolveError> {
        let h = t_end / n as f64;
        let mut z = y0.to_vec();
        let mut y = y0.to_vec();
        let shifted = |base: &[f64], k: &[f64], c: f64| -> Vec<f64> {
            base.iter().zip(k).map(|(a, b)| a + c * b).collect()
        };
        for step in 0..n {
            let t = step as f64 * h;
            let (k1z, k1y) = rhs(t, &z)?;
            let (k2z, k2y) = rhs(t + 0.5 * h, &shifted(&z, &k1z, 0.5 * h))?;
            let (k3z, k3y) = rhs(t + 0.5 * h, &shifted(&z, &k2z, 0.5 * h))?;
            let (k4z, k4y) = rhs(t + h, &shifted(&z, &k3z, h))?;
            for i in 0..m {
                z[i] += h / 6.0 * (k1z[i] + 2.0 * k2z[i] + 2.0 * k3z[i] + k4z[i]);
                y[i] += h / 6.0 * (k1y[i] + 2.0 * k2y[i] + 2.0 * k3y[i] + k4y[i]);
            }
        }
        Ok(y)
    };

    if t_end == 0.0 {
        return Ok(y0.to_vec());
    }
    let mut n = 8;
    let mut prev = integrate(n)?;
    let mut diff = f64::INFINITY;
    while n < MAX_STEPS {
        n *= 2;
        let next = integrate(n)?;
        diff = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if diff < tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(SolveError::ReferenceNotConverged { tol, diff })
}

/// Least-squares slope of `log ‖sark_step(τ) - Y(τ)‖` against `log τ`.
///
/// For a scheme of order `p` the slope is close to `p + 1`.
pub fn local_order_estimate<O: StructuredOde + ?Sized>(
    t: &SarkTableau,
    ode: &O,
    y0: &[f64],
    taus: &[f64],
) -> Result<f64, SolveError> {
    if taus.len() < 2 {
        return Err(SolveError::DegenerateFit("need at least two step sizes".into()));
    }
    let scale = y0.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let ref_tol = 1e-15 * scale;
    let floor = 1e-13 * scale;
    let mut pts = Vec::with_capacity(taus.len());
    for &tau in taus {
        let approx = sark_step(ode, t, tau, y0)?;
        let exact = reference_flow(ode, y0, tau, ref_tol)?;
        let err = approx
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if err <= floor {
            return Err(SolveError::DegenerateFit(format!(
                "error {err:.3e} at tau = {tau:e} is at the rounding floor"
            )));
        }
        pts.push((tau.ln(), err.ln()));
    }
    Ok(least_squares_slope(&pts))
}

/// Slope of the least-squares line through `(x, y)` points.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
