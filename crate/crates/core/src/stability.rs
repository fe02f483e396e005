//! Propagation matrices of linear tents and their weighted norms.
//!
//! For a linear model the whole tent solve is a matrix
//! `S = M(1)⁻¹ T^[r]⋯T^[1] M(0)` acting on patch coefficients. Its norm
//! from `‖·‖_{M(0)}` to `‖·‖_{M(1)}`, with `‖U‖²_{M(t̂)} = Uᵀ𝕄_{t̂}U`, is the
//! square root of the largest eigenvalue of `Sᵀ𝕄_1 S X = λ 𝕄_0 X`.

use crate::dg::{DgSpace, Discretization, PatchSystem};
use crate::mesh::{pitch_slab, Mesh1D, MeshError, Tent};
use crate::models::FluxModel;
use crate::ode::{sark_step, LinearOde, SolveError, StructuredOde, SubtentPlan};
use crate::tableau::SarkTableau;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error("{0} is not symmetric positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("symmetric eigenvalue iteration did not converge")]
    EigenNotConverged,
    #[error("stability analysis needs a linear model")]
    Nonlinear,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Dense matrices of `M0`, `M1` and `A` for one subtent.
#[derive(Debug, Clone)]
pub struct LinearTentOperators {
    pub m0: DMatrix<f64>,
    pub m1: DMatrix<f64>,
    pub a: DMatrix<f64>,
}

impl LinearTentOperators {
    /// Assembles the matrices column by column from a linear structured ODE.
    pub fn assemble<O: StructuredOde + ?Sized>(ode: &O) -> Result<Self, StabilityError> {
        if !ode.is_linear() {
            return Err(StabilityError::Nonlinear);
        }
        let m = ode.dim();
        let mut ops = Self {
            m0: DMatrix::zeros(m, m),
            m1: DMatrix::zeros(m, m),
            a: DMatrix::zeros(m, m),
        };
        let mut e = vec![0.0; m];
        let mut col = vec![0.0; m];
        for j in 0..m {
            e.fill(0.0);
            e[j] = 1.0;
            ode.apply_m0(&e, &mut col);
            ops.m0.set_column(j, &DVector::from_column_slice(&col));
            ode.apply_m1(&e, &mut col);
            ops.m1.set_column(j, &DVector::from_column_slice(&col));
            ode.apply_a(&e, &mut col);
            ops.a.set_column(j, &DVector::from_column_slice(&col));
        }
        Ok(ops)
    }

    /// `𝕄_t = M0 - t·M1`.
    pub fn weighted_mass(&self, t: f64) -> DMatrix<f64> {
        &self.m0 - &self.m1 * t
    }

    pub fn to_ode(&self) -> LinearOde {
        LinearOde::new(self.m0.clone(), self.m1.clone(), self.a.clone())
    }
}

/// `T` with `Y_τ = T Y` for one SARK step, built by stepping unit vectors.
pub fn build_t_subtent(
    ops: &LinearTentOperators,
    t: &SarkTableau,
    tau: f64,
) -> Result<DMatrix<f64>, StabilityError> {
    build_t_for(&ops.to_ode(), t, tau)
}

fn build_t_for(ode: &LinearOde, t: &SarkTableau, tau: f64) -> Result<DMatrix<f64>, StabilityError> {
    let m = ode.dim();
    let mut out = DMatrix::zeros(m, m);
    let mut e = vec![0.0; m];
    for j in 0..m {
        e.fill(0.0);
        e[j] = 1.0;
        let col = sark_step(ode, t, tau, &e)?;
        out.set_column(j, &DVector::from_column_slice(&col));
    }
    Ok(out)
}

/// The tent propagation matrix with the weighted masses at bottom and top.
#[derive(Debug, Clone)]
pub struct TentPropagation {
    pub s: DMatrix<f64>,
    pub mass_bottom: DMatrix<f64>,
    pub mass_top: DMatrix<f64>,
}

/// `S = M(1)⁻¹ T^[r]⋯T^[1] M(0)` for one tent.
pub fn build_s(
    disc: Discretization<'_>,
    tent: &Tent,
    t: &SarkTableau,
    r: usize,
) -> Result<TentPropagation, StabilityError> {
    let plan = SubtentPlan::new(r);
    let tau = plan.tau();
    let mut product: Option<DMatrix<f64>> = None;
    let mut mass_bottom = None;
    let mut mass_top = None;
    for k in 0..r {
        let ops = LinearTentOperators::assemble(&PatchSystem::new(disc, tent, k, r))?;
        let tk = build_t_subtent(&ops, t, tau)
            .map_err(|e| match e {
                StabilityError::Solve(s) => StabilityError::Solve(s.within(|c| {
                    c.tent = Some(tent.id);
                    c.substep = Some(k);
                })),
                other => other,
            })?;
        product = Some(match product {
            None => tk,
            Some(p) => tk * p,
        });
        if k == 0 {
            mass_bottom = Some(ops.weighted_mass(0.0));
        }
        if k + 1 == r {
            mass_top = Some(ops.weighted_mass(tau));
        }
    }
    let (product, mass_bottom, mass_top) = (
        product.expect("r >= 1"),
        mass_bottom.expect("r >= 1"),
        mass_top.expect("r >= 1"),
    );
    let s = mass_top
        .clone()
        .lu()
        .solve(&(product * &mass_bottom))
        .ok_or_else(|| SolveError::Singular(format!("top mass matrix of tent {}", tent.id)))?;
    Ok(TentPropagation {
        s,
        mass_bottom,
        mass_top,
    })
}

/// `sup_U ‖S U‖_{𝕄_1} / ‖U‖_{𝕄_0}`.
pub fn norm_s(
    s: &DMatrix<f64>,
    mass_bottom: &DMatrix<f64>,
    mass_top: &DMatrix<f64>,
) -> Result<f64, StabilityError> {
    let sym = |m: &DMatrix<f64>| (m + m.transpose()) * 0.5;
    let chol = sym(mass_bottom)
        .cholesky()
        .ok_or(StabilityError::NotPositiveDefinite("bottom mass matrix"))?;
    if sym(mass_top).cholesky().is_none() {
        return Err(StabilityError::NotPositiveDefinite("top mass matrix"));
    }
    let l = chol.l();
    let g = s.transpose() * sym(mass_top) * s;
    // C = L⁻¹ G L⁻ᵀ
    let y = l
        .solve_lower_triangular(&g)
        .ok_or(StabilityError::NotPositiveDefinite("bottom mass matrix"))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(StabilityError::NotPositiveDefinite("bottom mass matrix"))?;
    let eig = SymmetricEigen::try_new(sym(&c), 1e-15, 10_000).ok_or(StabilityError::EigenNotConverged)?;
    let lambda = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(lambda.max(0.0).sqrt())
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub scheme: String,
    pub p: usize,
    pub s: usize,
    pub r: usize,
    /// `C_i` per tent, in pitching order.
    pub tent_norms: Vec<f64>,
    /// `max_i (C_i - 1)`.
    pub cbar: f64,
}

/// Pitches a slab and measures every tent's propagation norm.
#[allow(clippy::too_many_arguments)]
pub fn slab_cbar(
    mesh: &Mesh1D,
    model: &dyn FluxModel,
    scheme: &SarkTableau,
    p: usize,
    r: usize,
    c_max: f64,
    t_max: f64,
    gamma: f64,
) -> Result<StabilityReport, StabilityError> {
    if !model.is_linear() {
        return Err(StabilityError::Nonlinear);
    }
    let space = DgSpace::new(p);
    let disc = Discretization {
        mesh,
        space: &space,
        model,
    };
    let slab = pitch_slab(mesh, c_max, t_max, gamma)?;
    let tent_norms = slab
        .tents
        .par_iter()
        .map(|tent| {
            let prop = build_s(disc, tent, scheme, r)?;
            norm_s(&prop.s, &prop.mass_bottom, &prop.mass_top)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cbar = tent_norms.iter().map(|c| c - 1.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityReport {
        scheme: scheme.name().to_string(),
        p,
        s: scheme.stages(),
        r,
        tent_norms,
        cbar,
    })
}
