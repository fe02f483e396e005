//! Discontinuous Galerkin discretization on tent patches.
//!
//! Each element carries a modal Legendre expansion `û = Σ_i U_i P_i(ξ)` with
//! `ξ ∈ [-1, 1]` the reference coordinate, so the element mass matrix is
//! `diag(h/(2i+1))`. On a tent the mapped system reads
//!
//! ```text
//! M0(U)·v = ∫ (g(û) - f(û)∇φ_b) v
//! M1(U)·v = ∫ f(û)∇δ v
//! A(U)·v  = Σ_K ∫_K δ f(û) ∂_x v - Σ_facets δ f̂·(v_L - v_R)
//! ```
//!
//! where `δ` is the tent height function.

use crate::mesh::{Mesh1D, Tent, TentSlab};
use crate::models::{FluxModel, ModelError, Side};
use crate::ode::{
    classical_rk_tent_solve, sark_tent_solve, SolveError, StructuredOde, SubtentPlan, TentInput,
};
use crate::tableau::{builtin_rk, builtin_sark, ButcherTableau, SarkTableau, TableauError};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DgError {
    #[error("quadrature with {q} points is too coarse for degree {p} (need at least {})", p + 3)]
    Quadrature { p: usize, q: usize },
    #[error("state front at vertex {vertex} is {found}, tent {tent} expects {expected}")]
    FrontMismatch {
        tent: usize,
        vertex: usize,
        expected: f64,
        found: f64,
    },
    #[error("the front is not flat, so the state is not a function of x alone")]
    NonFlatFront,
    #[error("state has degree {found}, space has degree {expected}")]
    DegreeMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let dp = legendre_with_derivative(n, x).1;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = pk;
    }
    let d = if (1.0 - x * x).abs() < 1e-300 {
        0.5 * (n * (n + 1)) as f64 * x.powi(n as i32 + 1)
    } else {
        n as f64 * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, d)
}

/// `P_0(x)..=P_p(x)` and their derivatives.
pub fn legendre(p: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; p + 1];
    let mut d = vec![0.0; p + 1];
    v[0] = 1.0;
    if p >= 1 {
        v[1] = x;
        d[1] = 1.0;
    }
    for k in 2..=p {
        v[k] = ((2 * k - 1) as f64 * x * v[k - 1] - (k - 1) as f64 * v[k - 2]) / k as f64;
        // P_k' = P_{k-2}' + (2k-1) P_{k-1}
        d[k] = d[k - 2] + (2 * k - 1) as f64 * v[k - 1];
    }
    (v, d)
}

/// Basis values on a reference quadrature rule.
#[derive(Debug, Clone)]
struct Tabulation {
    weights: Vec<f64>,
    nodes: Vec<f64>,
    /// `phi[qp * n + i] = P_i(ξ_qp)`.
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

impl Tabulation {
    fn new(p: usize, q: usize) -> Self {
        let (nodes, weights) = gauss_legendre(q);
        let mut phi = Vec::with_capacity(q * (p + 1));
        let mut dphi = Vec::with_capacity(q * (p + 1));
        for &x in &nodes {
            let (v, d) = legendre(p, x);
            phi.extend(v);
            dphi.extend(d);
        }
        Self {
            weights,
            nodes,
            phi,
            dphi,
        }
    }
}

/// Piecewise polynomials of degree `p` with `q`-point Gauss-Legendre
/// quadrature per element.
#[derive(Debug, Clone)]
pub struct DgSpace {
    p: usize,
    q: usize,
    rule: Tabulation,
    fine: Tabulation,
}

impl DgSpace {
    pub fn new(p: usize) -> Self {
        Self::with_quadrature(p, p + 3).expect("q = p + 3 is admissible")
    }

    pub fn with_quadrature(p: usize, q: usize) -> Result<Self, DgError> {
        if q < p + 3 {
            return Err(DgError::Quadrature { p, q });
        }
        Ok(Self {
            p,
            q,
            rule: Tabulation::new(p, q),
            fine: Tabulation::new(p, q + 4),
        })
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn quadrature_points(&self) -> usize {
        self.q
    }

    /// Local dimension `p + 1`.
    pub fn local_dim(&self) -> usize {
        self.p + 1
    }

    pub fn num_dofs(&self, mesh: &Mesh1D) -> usize {
        self.local_dim() * mesh.num_elements()
    }

    /// Diagonal of the element mass matrix.
    pub fn mass(&self, h: f64) -> Vec<f64> {
        (0..=self.p).map(|i| h / (2 * i + 1) as f64).collect()
    }
}

/// Coefficients of `u_h` on every element plus the front they live on.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    p: usize,
    pub coeffs: Vec<f64>,
    pub front: Vec<f64>,
}

impl GlobalState {
    pub fn zeros(mesh: &Mesh1D, space: &DgSpace) -> Self {
        Self {
            p: space.degree(),
            coeffs: vec![0.0; space.num_dofs(mesh)],
            front: vec![0.0; mesh.num_vertices()],
        }
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn element(&self, e: usize) -> &[f64] {
        let n = self.p + 1;
        &self.coeffs[e * n..(e + 1) * n]
    }

    pub fn element_mut(&mut self, e: usize) -> &mut [f64] {
        let n = self.p + 1;
        &mut self.coeffs[e * n..(e + 1) * n]
    }

    /// `u_h` on element `e` at reference coordinate `xi`.
    pub fn eval(&self, e: usize, xi: f64) -> f64 {
        let (v, _) = legendre(self.p, xi);
        v.iter().zip(self.element(e)).map(|(a, b)| a * b).sum()
    }

    /// `∫ u_h dx` over the whole mesh.
    pub fn integral(&self, mesh: &Mesh1D) -> f64 {
        (0..mesh.num_elements())
            .map(|e| mesh.element_length(e) * self.element(e)[0])
            .sum()
    }

    pub fn is_flat(&self) -> bool {
        self.front.windows(2).all(|w| w[0] == w[1])
    }
}

/// Element-wise L² projection of `u0`, on the flat front `t = 0`.
pub fn project_initial(mesh: &Mesh1D, space: &DgSpace, u0: impl Fn(f64) -> f64) -> GlobalState {
    let mut state = GlobalState::zeros(mesh, space);
    let n = space.local_dim();
    let rule = &space.fine;
    for e in 0..mesh.num_elements() {
        let (xl, xr) = mesh.element_bounds(e);
        let h = xr - xl;
        let c = state.element_mut(e);
        for (qp, (&xi, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            let f = u0(xl + 0.5 * h * (xi + 1.0));
            for (i, ci) in c.iter_mut().enumerate() {
                *ci += w * f * rule.phi[qp * n + i];
            }
        }
        for (i, ci) in c.iter_mut().enumerate() {
            *ci *= (2 * i + 1) as f64 / 2.0;
        }
    }
    state
}

/// `‖u_h - u‖_{L²}` with `q + 4` points per element.
pub fn l2_error(
    mesh: &Mesh1D,
    space: &DgSpace,
    state: &GlobalState,
    reference: impl Fn(f64) -> f64,
) -> Result<f64, DgError> {
    try_l2_error(mesh, space, state, |x| Ok(reference(x)))
}

/// As [`l2_error`], for references that can fail to evaluate.
pub fn try_l2_error(
    mesh: &Mesh1D,
    space: &DgSpace,
    state: &GlobalState,
    reference: impl Fn(f64) -> Result<f64, ModelError>,
) -> Result<f64, DgError> {
    if !state.is_flat() {
        return Err(DgError::NonFlatFront);
    }
    if state.degree() != space.degree() {
        return Err(DgError::DegreeMismatch {
            expected: space.degree(),
            found: state.degree(),
        });
    }
    let n = space.local_dim();
    let rule = &space.fine;
    let mut sum = 0.0;
    for e in 0..mesh.num_elements() {
        let (xl, xr) = mesh.element_bounds(e);
        let h = xr - xl;
        let c = state.element(e);
        for (qp, (&xi, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            let uh: f64 = (0..n).map(|i| c[i] * rule.phi[qp * n + i]).sum();
            let diff = uh - reference(xl + 0.5 * h * (xi + 1.0))?;
            sum += 0.5 * h * w * diff * diff;
        }
    }
    Ok(sum.sqrt())
}

/// Everything needed to evaluate patch operators.
#[derive(Clone, Copy)]
pub struct Discretization<'a> {
    pub mesh: &'a Mesh1D,
    pub space: &'a DgSpace,
    pub model: &'a dyn FluxModel,
}

#[derive(Debug, Clone, Copy)]
struct ElementGeometry {
    element: usize,
    h: f64,
    /// `∇φ^[k]`.
    grad_phi: f64,
    grad_delta: f64,
    delta_left: f64,
    delta_right: f64,
}

#[derive(Debug, Clone, Copy)]
struct BoundaryFacet {
    side: Side,
    x: f64,
    delta: f64,
}

/// The structured ODE of substep `k` of a tent: `M0` uses the front
/// `φ^[k] = φ_b + (k/r)δ`, while `M1` and `A` use the full tent height `δ`.
#[derive(Clone)]
pub struct PatchSystem<'a> {
    disc: Discretization<'a>,
    tent_id: usize,
    substep: usize,
    geometry: Vec<ElementGeometry>,
    /// `δ` at the interior patch vertex, if the patch has two elements.
    interior_delta: Option<f64>,
    boundary: Vec<BoundaryFacet>,
}

impl<'a> PatchSystem<'a> {
    pub fn new(disc: Discretization<'a>, tent: &Tent, k: usize, r: usize) -> Self {
        let theta = k as f64 / r as f64;
        let delta = tent.delta();
        let mesh = disc.mesh;
        let geometry = tent
            .elements
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let h = mesh.element_length(e);
                let front = |j: usize| tent.phi_b[j] + theta * delta[j];
                ElementGeometry {
                    element: e,
                    h,
                    grad_phi: (front(i + 1) - front(i)) / h,
                    grad_delta: (delta[i + 1] - delta[i]) / h,
                    delta_left: delta[i],
                    delta_right: delta[i + 1],
                }
            })
            .collect::<Vec<_>>();
        let ne = geometry.len();
        let interior_delta = (ne == 2).then(|| delta[1]);
        let mut boundary = Vec::new();
        let first = tent.vertices[0];
        let last = tent.vertices[ne];
        if mesh.is_boundary_vertex(first) && first == 0 {
            boundary.push(BoundaryFacet {
                side: Side::Left,
                x: mesh.vertex_position(first),
                delta: delta[0],
            });
        }
        if mesh.is_boundary_vertex(last) && last == mesh.num_elements() {
            boundary.push(BoundaryFacet {
                side: Side::Right,
                x: mesh.vertex_position(last),
                delta: delta[ne],
            });
        }
        Self {
            disc,
            tent_id: tent.id,
            substep: k,
            geometry,
            interior_delta,
            boundary,
        }
    }

    pub fn tent_id(&self) -> usize {
        self.tent_id
    }

    pub fn substep(&self) -> usize {
        self.substep
    }

    fn n(&self) -> usize {
        self.disc.space.local_dim()
    }

    /// Values of `û` at the quadrature nodes of local element `i`.
    fn values(&self, w: &[f64], i: usize, out: &mut [f64]) {
        let n = self.n();
        let rule = &self.disc.space.rule;
        let c = &w[i * n..(i + 1) * n];
        for (qp, o) in out.iter_mut().enumerate() {
            *o = (0..n).map(|j| c[j] * rule.phi[qp * n + j]).sum();
        }
    }

    /// `out_i += ∫ integrand(û) ψ_i` on every patch element.
    fn integrate(&self, w: &[f64], out: &mut [f64], integrand: impl Fn(&ElementGeometry, f64) -> f64) {
        let n = self.n();
        let rule = &self.disc.space.rule;
        let mut u = vec![0.0; rule.nodes.len()];
        for (i, g) in self.geometry.iter().enumerate() {
            self.values(w, i, &mut u);
            let o = &mut out[i * n..(i + 1) * n];
            for (qp, &uq) in u.iter().enumerate() {
                let f = 0.5 * g.h * rule.weights[qp] * integrand(g, uq);
                for (j, oj) in o.iter_mut().enumerate() {
                    *oj += f * rule.phi[qp * n + j];
                }
            }
        }
    }

    fn trace(&self, w: &[f64], i: usize, side: Side) -> f64 {
        let c = &w[i * self.n()..(i + 1) * self.n()];
        match side {
            Side::Right => c.iter().sum(),
            Side::Left => c.iter().enumerate().map(|(j, v)| if j % 2 == 0 { *v } else { -v }).sum(),
        }
    }

    /// Newton solve of `M(t)(U) = R` on local element `i`.
    fn solve_element(&self, t: f64, r: &[f64], out: &mut [f64], i: usize) -> Result<(), SolveError> {
        let n = self.n();
        let model = self.disc.model;
        let rule = &self.disc.space.rule;
        let g = &self.geometry[i];
        let grad = g.grad_phi + t * g.grad_delta;
        let mass = self.disc.space.mass(g.h);
        for j in 0..n {
            out[j] = r[j] / mass[j];
        }
        let r_norm = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // dual vectors scale with h, so h plays the role of a unit state
        let tol = NEWTON_TOL * (g.h + r_norm);
        let nq = rule.nodes.len();
        let mut u = vec![0.0; nq];
        let mut residual = vec![0.0; n];
        let mut jac = DMatrix::<f64>::zeros(n, n);
        let linear = model.is_linear();
        let mut res_norm = f64::INFINITY;
        for it in 0..=NEWTON_MAX_ITER {
            for (qp, uq) in u.iter_mut().enumerate() {
                *uq = (0..n).map(|j| out[j] * rule.phi[qp * n + j]).sum();
            }
            residual.iter_mut().zip(r).for_each(|(a, b)| *a = -b);
            jac.fill(0.0);
            for (qp, &uq) in u.iter().enumerate() {
                let wq = 0.5 * g.h * rule.weights[qp];
                let val = wq * (model.temporal(uq) - model.flux(uq) * grad);
                let der = wq * (model.temporal_derivative(uq) - model.flux_derivative(uq) * grad);
                let phi = &rule.phi[qp * n..(qp + 1) * n];
                for a in 0..n {
                    residual[a] += val * phi[a];
                    for b in 0..n {
                        jac[(a, b)] += der * phi[a] * phi[b];
                    }
                }
            }
            res_norm = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if res_norm <= tol || (linear && it == 1) {
                return Ok(());
            }
            if it == NEWTON_MAX_ITER {
                break;
            }
            let step = jac
                .clone()
                .lu()
                .solve(&DVector::from_column_slice(&residual))
                .ok_or_else(|| {
                    SolveError::Singular(format!("Newton Jacobian on element {}", g.element))
                })?;
            for j in 0..n {
                out[j] -= step[j];
            }
        }
        Err(SolveError::NewtonNotConverged {
            element: g.element,
            iterations: NEWTON_MAX_ITER,
            residual: res_norm,
        })
    }
}

impl StructuredOde for PatchSystem<'_> {
    fn dim(&self) -> usize {
        self.n() * self.geometry.len()
    }

    fn apply_m0(&self, w: &[f64], out: &mut [f64]) {
        let model = self.disc.model;
        out.fill(0.0);
        self.integrate(w, out, |g, u| model.temporal(u) - model.flux(u) * g.grad_phi);
    }

    fn apply_m1(&self, w: &[f64], out: &mut [f64]) {
        let model = self.disc.model;
        out.fill(0.0);
        self.integrate(w, out, |g, u| model.flux(u) * g.grad_delta);
    }

    fn apply_a(&self, w: &[f64], out: &mut [f64]) {
        let model = self.disc.model;
        let n = self.n();
        let rule = &self.disc.space.rule;
        out.fill(0.0);
        let mut u = vec![0.0; rule.nodes.len()];
        for (i, g) in self.geometry.iter().enumerate() {
            self.values(w, i, &mut u);
            let o = &mut out[i * n..(i + 1) * n];
            for (qp, &uq) in u.iter().enumerate() {
                let s = 0.5 * (rule.nodes[qp] + 1.0);
                let delta = g.delta_left * (1.0 - s) + g.delta_right * s;
                // dψ/dx = P'(ξ)·2/h cancels the h/2 Jacobian
                let f = rule.weights[qp] * delta * model.flux(uq);
                for (j, oj) in o.iter_mut().enumerate() {
                    *oj += f * rule.dphi[qp * n + j];
                }
            }
        }
        if let Some(delta) = self.interior_delta {
            let ul = self.trace(w, 0, Side::Right);
            let ur = self.trace(w, 1, Side::Left);
            let flux = delta * model.numerical_flux(ul, ur, 1.0);
            for j in 0..n {
                out[j] -= flux;
                out[n + j] += if j % 2 == 0 { flux } else { -flux };
            }
        }
        for facet in &self.boundary {
            let (i, trace_side) = match facet.side {
                Side::Left => (0, Side::Left),
                Side::Right => (self.geometry.len() - 1, Side::Right),
            };
            let u_in = self.trace(w, i, trace_side);
            let u_ext = model.boundary_value(facet.x, facet.side, u_in);
            let flux = facet.delta * model.numerical_flux(u_in, u_ext, facet.side.normal());
            for j in 0..n {
                let v = if facet.side == Side::Left && j % 2 == 1 { -1.0 } else { 1.0 };
                out[i * n + j] -= flux * v;
            }
        }
    }

    fn solve_m(&self, t: f64, r: &[f64], out: &mut [f64]) -> Result<(), SolveError> {
        let n = self.n();
        for i in 0..self.geometry.len() {
            self.solve_element(t, &r[i * n..(i + 1) * n], &mut out[i * n..(i + 1) * n], i)?;
        }
        Ok(())
    }

    fn is_linear(&self) -> bool {
        self.disc.model.is_linear()
    }
}

/// A time integrator for tents.
#[derive(Debug, Clone)]
pub enum TimeScheme {
    Sark(SarkTableau),
    /// Classical RK on `Y' = A(M⁻¹(t, Y))`.
    Classical(ButcherTableau),
}

impl TimeScheme {
    /// Built-in scheme by name: `sark*` names select SARK tableaus and
    /// `rk*` names classical ones.
    pub fn by_name(name: &str) -> Result<Self, TableauError> {
        if name.starts_with("rk") {
            builtin_rk(name).map(TimeScheme::Classical)
        } else {
            builtin_sark(name).map(TimeScheme::Sark)
        }
    }

    pub fn name(&self) -> &str {
        match self {
            TimeScheme::Sark(t) => t.name(),
            TimeScheme::Classical(t) => t.name(),
        }
    }

    pub fn stages(&self) -> usize {
        match self {
            TimeScheme::Sark(t) => t.stages(),
            TimeScheme::Classical(t) => t.stages(),
        }
    }
}

fn check_front(state: &GlobalState, tent: &Tent) -> Result<(), DgError> {
    for (k, &v) in tent.vertices.iter().enumerate() {
        if state.front[v] != tent.phi_b[k] {
            return Err(DgError::FrontMismatch {
                tent: tent.id,
                vertex: v,
                expected: tent.phi_b[k],
                found: state.front[v],
            });
        }
    }
    Ok(())
}

fn patch_coefficients(state: &GlobalState, tent: &Tent) -> Vec<f64> {
    tent.elements
        .iter()
        .flat_map(|&e| state.element(e).iter().copied())
        .collect()
}

/// Coefficients on the tent's patch elements at the tent top.
pub fn solve_tent(
    disc: Discretization<'_>,
    state: &GlobalState,
    tent: &Tent,
    scheme: &TimeScheme,
    r: usize,
) -> Result<Vec<f64>, DgError> {
    check_front(state, tent)?;
    let u0 = patch_coefficients(state, tent);
    let family = |k: usize, r: usize| PatchSystem::new(disc, tent, k, r);
    let plan = SubtentPlan::new(r);
    let input = TentInput::Coefficients(&u0);
    let result = match scheme {
        TimeScheme::Sark(t) => sark_tent_solve(&family, t, plan, input, false).map(|(u, _)| u),
        TimeScheme::Classical(t) => classical_rk_tent_solve(&family, t, plan, input),
    };
    result
        .map_err(|e| e.within(|c| c.tent = Some(tent.id)))
        .map_err(DgError::from)
}

/// Writes a tent-top solution into the state and raises the front.
pub fn write_tent(state: &mut GlobalState, tent: &Tent, u1: &[f64]) {
    let n = state.degree() + 1;
    for (i, &e) in tent.elements.iter().enumerate() {
        state.element_mut(e).copy_from_slice(&u1[i * n..(i + 1) * n]);
    }
    state.front[tent.center] = tent.phi_t[tent.center_local];
}

/// Advances the state through one tent.
pub fn propagate_tent(
    disc: Discretization<'_>,
    state: &mut GlobalState,
    tent: &Tent,
    scheme: &TimeScheme,
    r: usize,
) -> Result<(), DgError> {
    let u1 = solve_tent(disc, state, tent, scheme, r)?;
    write_tent(state, tent, &u1);
    Ok(())
}

/// Advances the state through a whole slab. With `parallel` set, the tents
/// of each dependency level are solved concurrently on the current rayon
/// pool; results do not depend on the order.
pub fn propagate_slab(
    disc: Discretization<'_>,
    state: &mut GlobalState,
    slab: &TentSlab,
    scheme: &TimeScheme,
    r: usize,
    parallel: bool,
) -> Result<(), DgError> {
    if !parallel {
        for tent in &slab.tents {
            propagate_tent(disc, state, tent, scheme, r)?;
        }
        return Ok(());
    }
    for level in slab.levels() {
        let snapshot: &GlobalState = state;
        let results = level
            .par_iter()
            .map(|&id| solve_tent(disc, snapshot, &slab.tents[id], scheme, r))
            .collect::<Result<Vec<_>, _>>()?;
        for (&id, u1) in level.iter().zip(&results) {
            write_tent(state, &slab.tents[id], u1);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::pitch_slab;
    use crate::models::{burgers_initial, Advection1D, Burgers1D};
    use proptest::prelude::*;

    #[test]
    fn gauss_legendre_rules() {
        let (x, w) = gauss_legendre(1);
        assert_eq!((x[0], w[0]), (0.0, 2.0));
        let (x, w) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert!((x[2] - 0.6f64.sqrt()).abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
        // exact up to degree 2n - 1
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for d in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d as i32)).sum();
                let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d + 1) as f64 };
                assert!((q - exact).abs() < 1e-14, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn legendre_values() {
        let (v, d) = legendre(3, 0.5);
        assert_eq!(v[2], 0.5 * (3.0 * 0.25 - 1.0));
        assert!((v[3] - 0.5 * (5.0 * 0.125 - 1.5)).abs() < 1e-15);
        assert!((d[3] - 0.5 * (15.0 * 0.25 - 3.0)).abs() < 1e-15);
        let (v, _) = legendre(5, 1.0);
        assert!(v.iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn rejects_coarse_quadrature() {
        assert!(DgSpace::with_quadrature(2, 4).is_err());
        assert_eq!(DgSpace::new(2).quadrature_points(), 5);
    }

    #[test]
    fn projection_of_polynomials_is_exact() {
        let mesh = Mesh1D::uniform(0.0, 1.0, 5, false).unwrap();
        let space = DgSpace::new(3);
        let poly = |x: f64| 2.0 - x + 3.0 * x * x - 4.0 * x.powi(3);
        let s = project_initial(&mesh, &space, poly);
        assert!(l2_error(&mesh, &space, &s, poly).unwrap() < 1e-14);
        let c = project_initial(&mesh, &space, |_| 0.75);
        for e in 0..5 {
            assert!((c.element(e)[0] - 0.75).abs() < 1e-15);
            assert!(c.element(e)[1..].iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn error_trivial_cases() {
        let mesh = Mesh1D::uniform(0.0, 1.0, 4, false).unwrap();
        let space = DgSpace::new(1);
        let s = GlobalState::zeros(&mesh, &space);
        assert!((l2_error(&mesh, &space, &s, |_| 1.0).unwrap() - 1.0).abs() < 1e-14);
        let mut bent = s.clone();
        bent.front[2] = 0.01;
        assert_eq!(l2_error(&mesh, &space, &bent, |_| 0.0), Err(DgError::NonFlatFront));
    }

    #[test]
    fn gaussian_projection_error_oracle() {
        let mesh = Mesh1D::uniform(0.0, 1.0, 10, false).unwrap();
        let space = DgSpace::new(2);
        let s = project_initial(&mesh, &space, burgers_initial);
        let e = l2_error(&mesh, &space, &s, burgers_initial).unwrap();
        assert!((e - 0.0017734716478486304).abs() < 1e-9 * 0.0018, "{e}");
    }

    #[test]
    fn projection_converges_at_p_plus_one() {
        let space = DgSpace::new(2);
        let err = |n| {
            let mesh = Mesh1D::uniform(0.0, 1.0, n, false).unwrap();
            let s = project_initial(&mesh, &space, burgers_initial);
            l2_error(&mesh, &space, &s, burgers_initial).unwrap()
        };
        let rate = (err(40) / err(80)).log2();
        assert!((rate - 3.0).abs() < 0.1, "{rate}");
    }

    fn manufactured_tent() -> (Mesh1D, Tent) {
        let mesh = Mesh1D::new(vec![0.0, 0.2, 0.5, 0.9, 1.0], false).unwrap();
        let tent = Tent {
            id: 0,
            center: 2,
            vertices: vec![1, 2, 3],
            elements: vec![1, 2],
            center_local: 1,
            phi_b: vec![0.01, 0.02, 0.015],
            phi_t: vec![0.01, 0.05, 0.015],
            level: 0,
        };
        (mesh, tent)
    }

    #[test]
    fn manufactured_operator_oracle() {
        let (mesh, tent) = manufactured_tent();
        let space = DgSpace::new(2);
        let model = Advection1D::with_inflow(1.5, 0.0, |_| 0.0);
        let disc = Discretization { mesh: &mesh, space: &space, model: &model };
        let ps = PatchSystem::new(disc, &tent, 0, 1);
        let w = [0.3, -0.2, 0.1, 0.5, 0.25, -0.05];
        let expect_m0 = [0.0855, -0.019, 0.0057, 0.20375, 0.03395833333333333, -0.004075];
        let expect_m1 = [0.0135, -0.003, 0.0009, -0.0225, -0.00375, 0.00045];
        let expect_a = [-0.009, 0.0015, -0.0027, 0.009, 0.00975, -0.00135];
        let mut out = [0.0; 6];
        ps.apply_m0(&w, &mut out);
        for (a, b) in out.iter().zip(&expect_m0) {
            assert!((a - b).abs() < 1e-12, "M0 {a} vs {b}");
        }
        ps.apply_m1(&w, &mut out);
        for (a, b) in out.iter().zip(&expect_m1) {
            assert!((a - b).abs() < 1e-12, "M1 {a} vs {b}");
        }
        ps.apply_a(&w, &mut out);
        for (a, b) in out.iter().zip(&expect_a) {
            assert!((a - b).abs() < 1e-12, "A {a} vs {b}");
        }
    }

    #[test]
    fn flat_constant_state() {
        let mesh = Mesh1D::uniform(0.0, 1.0, 6, true).unwrap();
        let space = DgSpace::new(2);
        let model = Advection1D::periodic(1.0, |_| 0.0);
        let disc = Discretization { mesh: &mesh, space: &space, model: &model };
        let tent = Tent {
            id: 0,
            center: 3,
            vertices: vec![2, 3, 4],
            elements: vec![2, 3],
            center_local: 1,
            phi_b: vec![0.0; 3],
            phi_t: vec![0.0; 3],
            level: 0,
        };
        let ps = PatchSystem::new(disc, &tent, 0, 1);
        let w = [2.0, 0.0, 0.0, 2.0, 0.0, 0.0];
        let mut out = [0.0; 6];
        ps.apply_m0(&w, &mut out);
        let h = 1.0 / 6.0;
        assert!((out[0] - 2.0 * h).abs() < 1e-15 && (out[3] - 2.0 * h).abs() < 1e-15);
        ps.apply_m1(&w, &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
        ps.apply_a(&w, &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_solve_round_trip() {
        let (mesh, tent) = manufactured_tent();
        let space = DgSpace::new(2);
        let model = Advection1D::with_inflow(1.5, 0.0, |_| 0.0);
        let disc = Discretization { mesh: &mesh, space: &space, model: &model };
        let ps = PatchSystem::new(disc, &tent, 0, 1);
        let r = [0.1, -0.02, 0.003, 0.2, 0.01, -0.004];
        for t in [0.0, 0.5, 1.0] {
            let mut u = [0.0; 6];
            ps.solve_m(t, &r, &mut u).unwrap();
            let mut back = [0.0; 6];
            ps.apply_m(t, &u, &mut back);
            for (a, b) in back.iter().zip(&r) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    fn burgers_setup(n: usize) -> (Mesh1D, DgSpace, Burgers1D) {
        (Mesh1D::uniform(0.0, 1.0, n, false).unwrap(), DgSpace::new(2), Burgers1D::default())
    }

    #[test]
    fn burgers_flat_front_is_a_mass_solve() {
        let (mesh, space, model) = burgers_setup(4);
        let disc = Discretization { mesh: &mesh, space: &space, model: &model };
        let tent = Tent {
            id: 0,
            center: 2,
            vertices: vec![1, 2, 3],
            elements: vec![1, 2],
            center_local: 1,
            phi_b: vec![0.0; 3],
            phi_t: vec![0.0, 0.01, 0.0],
            level: 0,
        };
        let ps = PatchSystem::new(disc, &tent, 0, 1);
        let r = [0.1, -0.02, 0.003, 0.2, 0.01, -0.004];
        let mut u = [0.0; 6];
        ps.solve_m0(&r, &mut u).unwrap();
        let mass = space.mass(0.25);
        for j in 0..6 {
            assert!((u[j] - r[j] / mass[j % 3]).abs() < 1e-14);
        }
    }

    #[test]
    fn free_stream_single_tents() {
        let (mesh, space, _) = burgers_setup(8);
        let model = Burgers1D { inflow: 0.7, ..Burgers1D::default() };
        let disc = Discretization { mesh: &mesh, space: &space, model: &model };
        let slab = pitch_slab(&mesh, 2.0, 0.05, 0.99).unwrap();
        for name in ["sark2-heun", "sark3-kutta", "rk3-heun"] {
            let scheme = TimeScheme::by_name(name).unwrap();
            let mut state = project_initial(&mesh, &space, |_| 0.7);
            propagate_slab(disc, &mut state, &slab, &scheme, 3, false).unwrap();
            for e in 0..8 {
                let c = state.element(e);
                assert!((c[0] - 0.7).abs() < 1e-12, "{name}: {c:?}");
                assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn degenerate_tent_leaves_state_unchanged() {
        let (mesh, space, model) = burgers_setup(4);
        let disc = Discretization { mesh: &mesh, space: &space, model: &model };
        let mut state = project_initial(&mesh, &space, burgers_initial);
        let before = state.clone();
        let tent = Tent {
            id: 0,
            center: 2,
            vertices: vec![1, 2, 3],
            elements: vec![1, 2],
            center_local: 1,
            phi_b: vec![0.0; 3],
            phi_t: vec![0.0; 3],
            level: 0,
        };
        let scheme = TimeScheme::by_name("sark3-heun").unwrap();
        propagate_tent(disc, &mut state, &tent, &scheme, 4).unwrap();
        for (a, b) in state.coeffs.iter().zip(&before.coeffs) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn front_mismatch_is_reported() {
        let (mesh, space, model) = burgers_setup(4);
        let disc = Discretization { mesh: &mesh, space: &space, model: &model };
        let slab = pitch_slab(&mesh, 8.0, 0.1, 0.99).unwrap();
        let mut state = project_initial(&mesh, &space, burgers_initial);
        let scheme = TimeScheme::by_name("sark2-ralston").unwrap();
        let late = slab.tents.iter().find(|t| t.phi_b.iter().any(|&v| v > 0.0)).unwrap();
        let err = propagate_tent(disc, &mut state, late, &scheme, 4).unwrap_err();
        assert!(matches!(err, DgError::FrontMismatch { .. }));
    }

    #[test]
    fn periodic_advection_conserves_mass() {
        let mesh = Mesh1D::uniform(0.0, 1.0, 10, true).unwrap();
        let space = DgSpace::new(3);
        let model = Advection1D::periodic(1.0, burgers_initial);
        let disc = Discretization { mesh: &mesh, space: &space, model: &model };
        let slab = pitch_slab(&mesh, 2.0, 0.3, 0.99).unwrap();
        let mut state = project_initial(&mesh, &space, burgers_initial);
        let before = state.integral(&mesh);
        let scheme = TimeScheme::by_name("sark3-kutta").unwrap();
        propagate_slab(disc, &mut state, &slab, &scheme, 4, false).unwrap();
        assert!((state.integral(&mesh) - before).abs() < 1e-12, "{} vs {before}", state.integral(&mesh));
    }

    #[test]
    fn parallel_matches_sequential() {
        let (mesh, space, model) = burgers_setup(16);
        let disc = Discretization { mesh: &mesh, space: &space, model: &model };
        let slab = pitch_slab(&mesh, 8.0, 0.1, 0.99).unwrap();
        let scheme = TimeScheme::by_name("sark3-heun").unwrap();
        let mut seq = project_initial(&mesh, &space, burgers_initial);
        let mut par = seq.clone();
        propagate_slab(disc, &mut seq, &slab, &scheme, 4, false).unwrap();
        propagate_slab(disc, &mut par, &slab, &scheme, 4, true).unwrap();
        assert_eq!(seq, par);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn burgers_round_trip(
            coeffs in prop::collection::vec(-0.3f64..0.3, 6),
            mean in prop::collection::vec(0.0f64..1.0, 2),
            slope in -0.1f64..0.1,
            t in 0.0f64..1.0,
        ) {
            let mesh = Mesh1D::uniform(0.0, 1.0, 8, false).unwrap();
            let space = DgSpace::new(2);
            let model = Burgers1D::default();
            let disc = Discretization { mesh: &mesh, space: &space, model: &model };
            let h = 1.0 / 8.0;
            // fronts with |∇φ| well inside 1/c_max for |u| ≤ 1.6
            let tent = Tent {
                id: 0,
                center: 4,
                vertices: vec![3, 4, 5],
                elements: vec![3, 4],
                center_local: 1,
                phi_b: vec![0.0, slope * h, 0.0],
                phi_t: vec![0.0, slope * h + 0.3 * h, 0.0],
                level: 0,
            };
            let ps = PatchSystem::new(disc, &tent, 0, 1);
            let mut w = coeffs.clone();
            w[0] = mean[0];
            w[3] = mean[1];
            let mut r = vec![0.0; 6];
            ps.apply_m(t, &w, &mut r);
            let mut u = vec![0.0; 6];
            ps.solve_m(t, &r, &mut u).unwrap();
            let mut back = vec![0.0; 6];
            ps.apply_m(t, &u, &mut back);
            let scale = 1.0 + r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in back.iter().zip(&r) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
        }
    }
}
