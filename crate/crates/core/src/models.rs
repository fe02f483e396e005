//! Scalar conservation laws `∂_t g(u) + ∂_x f(u) = 0` in 1D.

use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Which end of the interval a boundary facet sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Outward normal.
    pub fn normal(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("characteristic Newton solve at x = {x}, t = {t} did not converge (residual {residual:.3e})")]
    NotConverged { x: f64, t: f64, residual: f64 },
    #[error("characteristics cross at x = {x}, t = {t}: the solution is no longer smooth")]
    ShockFormed { x: f64, t: f64 },
}

/// Capability contract of a scalar flux model.
pub trait FluxModel: Send + Sync {
    fn name(&self) -> &str;
    fn flux(&self, u: f64) -> f64;
    fn flux_derivative(&self, u: f64) -> f64;
    /// Local wavespeed `c(u) ≥ 0`.
    fn wavespeed(&self, u: f64) -> f64;
    /// Numerical flux in direction `n` (`±1`) between the trace `u_in` on
    /// the side opposite to `n` and `u_out` on the side `n` points to.
    /// Consistent: `numerical_flux(u, u, n) = flux(u)·n`.
    fn numerical_flux(&self, u_in: f64, u_out: f64, n: f64) -> f64;
    /// Exterior trace at a boundary facet.
    fn boundary_value(&self, x: f64, side: Side, u_in: f64) -> f64;
    fn is_linear(&self) -> bool;
    fn initial(&self, x: f64) -> f64;
    /// Exact solution, when the model has one.
    fn exact(&self, _x: f64, _t: f64) -> Option<Result<f64, ModelError>> {
        None
    }
    /// Whether the model lives on the periodic unit interval.
    fn periodic(&self) -> bool {
        false
    }

    fn temporal(&self, u: f64) -> f64 {
        u
    }
    fn temporal_derivative(&self, _u: f64) -> f64 {
        1.0
    }
}

/// Local Lax-Friedrichs flux.
pub fn rusanov<M: FluxModel + ?Sized>(model: &M, u_in: f64, u_out: f64, n: f64) -> f64 {
    let lambda = model.wavespeed(u_in).max(model.wavespeed(u_out));
    0.5 * (model.flux(u_in) + model.flux(u_out)) * n - 0.5 * lambda * (u_out - u_in)
}

pub type InitialData = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Linear advection `∂_t u + ∂_x(b u) = 0`.
#[derive(Clone)]
pub struct Advection1D {
    pub speed: f64,
    pub periodic: bool,
    /// Exterior value at the inflow boundary of a non-periodic domain.
    pub inflow: f64,
    initial: InitialData,
}

impl fmt::Debug for Advection1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Advection1D")
            .field("speed", &self.speed)
            .field("periodic", &self.periodic)
            .field("inflow", &self.inflow)
            .finish_non_exhaustive()
    }
}

impl Advection1D {
    pub fn periodic(speed: f64, initial: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            speed,
            periodic: true,
            inflow: 0.0,
            initial: Arc::new(initial),
        }
    }

    pub fn with_inflow(
        speed: f64,
        inflow: f64,
        initial: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            speed,
            periodic: false,
            inflow,
            initial: Arc::new(initial),
        }
    }
}

impl FluxModel for Advection1D {
    fn name(&self) -> &str {
        "advection1d"
    }
    fn flux(&self, u: f64) -> f64 {
        self.speed * u
    }
    fn flux_derivative(&self, _u: f64) -> f64 {
        self.speed
    }
    fn wavespeed(&self, _u: f64) -> f64 {
        self.speed.abs()
    }
    fn numerical_flux(&self, u_in: f64, u_out: f64, n: f64) -> f64 {
        let bn = self.speed * n;
        if bn >= 0.0 {
            bn * u_in
        } else {
            bn * u_out
        }
    }
    fn boundary_value(&self, _x: f64, side: Side, u_in: f64) -> f64 {
        if self.speed * side.normal() < 0.0 {
            self.inflow
        } else {
            u_in
        }
    }
    fn is_linear(&self) -> bool {
        true
    }
    fn initial(&self, x: f64) -> f64 {
        (self.initial)(x)
    }
    fn exact(&self, x: f64, t: f64) -> Option<Result<f64, ModelError>> {
        self.periodic
            .then(|| Ok(advection_exact(x, t, self.speed, &*self.initial)))
    }
    fn periodic(&self) -> bool {
        self.periodic
    }
}

/// `u0(frac(x - b t))`, the exact solution of periodic advection on `[0, 1)`.
pub fn advection_exact(x: f64, t: f64, speed: f64, u0: &dyn Fn(f64) -> f64) -> f64 {
    u0((x - speed * t).rem_euclid(1.0))
}

/// Flux convention for Burgers' equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BurgersFlux {
    /// `f(u) = u²/2`.
    #[default]
    Half,
    /// `f(u) = u²`.
    Square,
}

impl BurgersFlux {
    /// `k` in `f(u) = k u²/2`.
    fn k(self) -> f64 {
        match self {
            BurgersFlux::Half => 1.0,
            BurgersFlux::Square => 2.0,
        }
    }
}

/// `u0(x) = exp(-50 (x - 1/2)²)`.
pub fn burgers_initial(x: f64) -> f64 {
    (-50.0 * (x - 0.5).powi(2)).exp()
}

fn burgers_initial_derivative(x: f64) -> f64 {
    -100.0 * (x - 0.5) * burgers_initial(x)
}

/// Pre-shock solution of Burgers' equation with the Gaussian initial data,
/// found from `ξ + f'(u0(ξ)) t = x` by Newton's method starting at `ξ = x`.
pub fn burgers_exact(x: f64, t: f64, tol: f64, flux: BurgersFlux) -> Result<f64, ModelError> {
    let k = flux.k();
    let mut xi = x;
    let mut residual = f64::INFINITY;
    for _ in 0..50 {
        residual = xi + k * burgers_initial(xi) * t - x;
        if residual.abs() <= tol {
            return Ok(burgers_initial(xi));
        }
        let slope = 1.0 + k * burgers_initial_derivative(xi) * t;
        if slope <= 0.0 {
            return Err(ModelError::ShockFormed { x, t });
        }
        xi -= residual / slope;
    }
    Err(ModelError::NotConverged { x, t, residual })
}

/// First time at which characteristics of the Gaussian data cross,
/// `1 / max(-f''·u0')`, sampled on a fine grid.
pub fn burgers_shock_time(flux: BurgersFlux) -> f64 {
    let n = 200_000;
    let steepest = (0..=n)
        .map(|i| -burgers_initial_derivative(i as f64 / n as f64))
        .fold(0.0, f64::max);
    1.0 / (flux.k() * steepest)
}

/// Burgers' equation on `[0, 1]` with inflow at `x = 0` and outflow at `x = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Burgers1D {
    pub flux: BurgersFlux,
    /// Exterior value imposed at the inflow boundary.
    pub inflow: f64,
    /// Tolerance of the characteristic Newton solve in [`FluxModel::exact`].
    pub exact_tol: f64,
}

impl Default for Burgers1D {
    fn default() -> Self {
        Self {
            flux: BurgersFlux::Half,
            inflow: burgers_initial(0.0),
            exact_tol: 1e-13,
        }
    }
}

impl Burgers1D {
    pub fn with_flux(flux: BurgersFlux) -> Self {
        Self {
            flux,
            ..Self::default()
        }
    }
}

impl FluxModel for Burgers1D {
    fn name(&self) -> &str {
        "burgers1d"
    }
    fn flux(&self, u: f64) -> f64 {
        0.5 * self.flux.k() * u * u
    }
    fn flux_derivative(&self, u: f64) -> f64 {
        self.flux.k() * u
    }
    fn wavespeed(&self, u: f64) -> f64 {
        self.flux.k() * u.abs()
    }
    fn numerical_flux(&self, u_in: f64, u_out: f64, n: f64) -> f64 {
        rusanov(self, u_in, u_out, n)
    }
    fn boundary_value(&self, _x: f64, side: Side, u_in: f64) -> f64 {
        match side {
            Side::Left => self.inflow,
            Side::Right => u_in,
        }
    }
    fn is_linear(&self) -> bool {
        false
    }
    fn initial(&self, x: f64) -> f64 {
        burgers_initial(x)
    }
    fn exact(&self, x: f64, t: f64) -> Option<Result<f64, ModelError>> {
        Some(burgers_exact(x, t, self.exact_tol, self.flux))
    }
}
