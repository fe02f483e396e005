//! Coefficient tableaus for structure-aware Runge-Kutta (SARK) schemes and
//! plain explicit Runge-Kutta schemes, plus the order-condition checker.
//!
//! A SARK tableau carries two strictly lower triangular coefficient matrices:
//! `a` weights the stage evaluations of `Ã = A∘M0⁻¹` and `d` weights the
//! evaluations of `M̃1 = M1∘M0⁻¹`. Dropping `d` gives an ordinary Butcher
//! tableau.
//!
//! The order checker evaluates the algebraic conditions up to order three:
//! one condition at order one, two at order two and seven at order three.
//! Built-in tableaus keep their exact rational coefficients so that the
//! residuals of satisfied conditions come out as exactly `0.0`.

use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use std::fmt;
use std::ops::{Add, Mul, Sub};
use thiserror::Error;

type Q = Ratio<i64>;

/// Default tolerance for deciding whether an order condition holds.
pub const DEFAULT_ORDER_TOL: f64 = 1e-12;

/// Names accepted by [`builtin_sark`].
pub const SARK_NAMES: [&str; 5] = [
    "sark2-midpoint",
    "sark2-ralston",
    "sark2-heun",
    "sark3-kutta",
    "sark3-heun",
];

/// Names accepted by [`builtin_rk`].
pub const RK_NAMES: [&str; 6] = [
    "rk2-midpoint",
    "rk2-ralston",
    "rk2-heun",
    "rk3-kutta",
    "rk3-heun",
    "rk4-classic",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableauError {
    #[error("unknown scheme `{name}`; valid names: {}", valid.join(", "))]
    UnknownScheme { name: String, valid: Vec<String> },
    #[error("invalid tableau: {0}")]
    Invalid(String),
}

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
struct Square {
    n: usize,
    data: Vec<f64>,
}

impl Square {
    fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Self, TableauError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(TableauError::Invalid(format!(
                    "{what}: row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(TableauError::Invalid(format!("{what}[{i}][{j}] is not finite")));
                }
                if j >= i && v != 0.0 {
                    return Err(TableauError::Invalid(format!(
                        "{what} must be strictly lower triangular, found {what}[{i}][{j}] = {v}"
                    )));
                }
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..i).map(|j| self.get(i, j)).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ExactCoefficients {
    a: Vec<Vec<Q>>,
    d: Vec<Vec<Q>>,
    b: Vec<Q>,
}

/// An explicit `s`-stage SARK scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SarkTableau {
    name: String,
    nominal_order: Option<u8>,
    a: Square,
    d: Square,
    b: Vec<f64>,
    c: Vec<f64>,
    exact: Option<ExactCoefficients>,
}

impl SarkTableau {
    /// Builds a tableau from row-major `a`, `d` (both `s×s`, strictly lower
    /// triangular) and weights `b`. The abscissae are `c_i = Σ_j a_ij`.
    pub fn new(a: Vec<Vec<f64>>, d: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self, TableauError> {
        let s = b.len();
        if s == 0 {
            return Err(TableauError::Invalid("at least one stage is required".into()));
        }
        if a.len() != s || d.len() != s {
            return Err(TableauError::Invalid(format!(
                "stage count mismatch: a has {} rows, d has {} rows, b has {s} entries",
                a.len(),
                d.len()
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(TableauError::Invalid("b has non-finite entries".into()));
        }
        let a = Square::from_rows(&a, "a")?;
        let d = Square::from_rows(&d, "d")?;
        let c = a.row_sums();
        Ok(Self {
            name: format!("sark{s}-custom"),
            nominal_order: None,
            a,
            d,
            b,
            c,
            exact: None,
        })
    }

    fn from_exact(name: &str, order: u8, a: Vec<Vec<Q>>, d: Vec<Vec<Q>>, b: Vec<Q>) -> Self {
        let to_f = |rows: &[Vec<Q>]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| r.iter().map(q_to_f64).collect()).collect()
        };
        let mut t = Self::new(to_f(&a), to_f(&d), b.iter().map(q_to_f64).collect())
            .expect("built-in tableau is well formed");
        t.name = name.to_string();
        t.nominal_order = Some(order);
        t.exact = Some(ExactCoefficients { a, d, b });
        t
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_nominal_order(mut self, order: u8) -> Self {
        self.nominal_order = Some(order);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nominal_order(&self) -> Option<u8> {
        self.nominal_order
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a.get(i, j)
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.d.get(i, j)
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// The Butcher tableau obtained by dropping `d`.
    pub fn underlying_rk(&self) -> ButcherTableau {
        ButcherTableau {
            name: self.name.replacen("sark", "rk", 1),
            nominal_order: self.nominal_order,
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
        }
    }
}

impl fmt::Display for SarkTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.stages();
        writeln!(f, "{} (s = {s})", self.name)?;
        for i in 0..s {
            write!(f, "{:>9.5} |", self.c[i])?;
            for j in 0..s {
                write!(f, " {:>9.5}", self.a(i, j))?;
            }
            write!(f, " |")?;
            for j in 0..s {
                write!(f, " {:>9.5}", self.d(i, j))?;
            }
            writeln!(f)?;
        }
        write!(f, "{:>9} |", "")?;
        for bi in &self.b {
            write!(f, " {bi:>9.5}")?;
        }
        Ok(())
    }
}

/// A classical explicit Runge-Kutta scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    name: String,
    nominal_order: Option<u8>,
    a: Square,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl ButcherTableau {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self, TableauError> {
        let s = b.len();
        if s == 0 {
            return Err(TableauError::Invalid("at least one stage is required".into()));
        }
        if a.len() != s {
            return Err(TableauError::Invalid(format!(
                "stage count mismatch: a has {} rows, b has {s} entries",
                a.len()
            )));
        }
        let a = Square::from_rows(&a, "a")?;
        let c = a.row_sums();
        Ok(Self {
            name: format!("rk{s}-custom"),
            nominal_order: None,
            a,
            b,
            c,
        })
    }

    fn named(name: &str, order: u8, a: Vec<Vec<f64>>, b: Vec<f64>) -> Self {
        let mut t = Self::new(a, b).expect("built-in tableau is well formed");
        t.name = name.to_string();
        t.nominal_order = Some(order);
        t
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nominal_order(&self) -> Option<u8> {
        self.nominal_order
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a.get(i, j)
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }
}

fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

fn qi(n: i64) -> Q {
    Q::from_integer(n)
}

fn q_to_f64(v: &Q) -> f64 {
    v.to_f64().expect("rational fits in f64")
}

fn unknown(name: &str, valid: &[&str]) -> TableauError {
    TableauError::UnknownScheme {
        name: name.to_string(),
        valid: valid.iter().map(|s| s.to_string()).collect(),
    }
}

/// Returns one of the built-in SARK schemes (two-stage schemes of order two,
/// three-stage schemes of order three).
pub fn builtin_sark(name: &str) -> Result<SarkTableau, TableauError> {
    let z = Q::zero;
    let t = match name {
        "sark2-midpoint" => SarkTableau::from_exact(
            name,
            2,
            vec![vec![z(), z()], vec![q(1, 2), z()]],
            vec![vec![z(), z()], vec![q(1, 2), z()]],
            vec![z(), qi(1)],
        ),
        "sark2-ralston" => SarkTableau::from_exact(
            name,
            2,
            vec![vec![z(), z()], vec![q(2, 3), z()]],
            vec![vec![z(), z()], vec![q(2, 3), z()]],
            vec![q(1, 4), q(3, 4)],
        ),
        "sark2-heun" => SarkTableau::from_exact(
            name,
            2,
            vec![vec![z(), z()], vec![qi(1), z()]],
            vec![vec![z(), z()], vec![qi(1), z()]],
            vec![q(1, 2), q(1, 2)],
        ),
        "sark3-kutta" => SarkTableau::from_exact(
            name,
            3,
            vec![
                vec![z(), z(), z()],
                vec![q(1, 2), z(), z()],
                vec![qi(-1), qi(2), z()],
            ],
            vec![
                vec![z(), z(), z()],
                vec![q(1, 2), z(), z()],
                vec![qi(-3), qi(4), z()],
            ],
            vec![q(1, 6), q(2, 3), q(1, 6)],
        ),
        "sark3-heun" => SarkTableau::from_exact(
            name,
            3,
            vec![
                vec![z(), z(), z()],
                vec![q(1, 3), z(), z()],
                vec![z(), q(2, 3), z()],
            ],
            vec![
                vec![z(), z(), z()],
                vec![q(1, 3), z(), z()],
                vec![q(-2, 3), q(4, 3), z()],
            ],
            vec![q(1, 4), z(), q(3, 4)],
        ),
        _ => return Err(unknown(name, &SARK_NAMES)),
    };
    Ok(t)
}

/// Returns one of the built-in classical explicit Runge-Kutta schemes.
pub fn builtin_rk(name: &str) -> Result<ButcherTableau, TableauError> {
    let t = match name {
        "rk2-midpoint" => {
            ButcherTableau::named(name, 2, vec![vec![0.0, 0.0], vec![0.5, 0.0]], vec![0.0, 1.0])
        }
        "rk2-ralston" => ButcherTableau::named(
            name,
            2,
            vec![vec![0.0, 0.0], vec![2.0 / 3.0, 0.0]],
            vec![0.25, 0.75],
        ),
        "rk2-heun" => {
            ButcherTableau::named(name, 2, vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![0.5, 0.5])
        }
        "rk3-kutta" => ButcherTableau::named(
            name,
            3,
            vec![vec![0.0; 3], vec![0.5, 0.0, 0.0], vec![-1.0, 2.0, 0.0]],
            vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        ),
        "rk3-heun" => ButcherTableau::named(
            name,
            3,
            vec![vec![0.0; 3], vec![1.0 / 3.0, 0.0, 0.0], vec![0.0, 2.0 / 3.0, 0.0]],
            vec![0.25, 0.0, 0.75],
        ),
        "rk4-classic" => ButcherTableau::named(
            name,
            4,
            vec![
                vec![0.0; 4],
                vec![0.5, 0.0, 0.0, 0.0],
                vec![0.0, 0.5, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
        ),
        _ => return Err(unknown(name, &RK_NAMES)),
    };
    Ok(t)
}

/// Residuals of the SARK order conditions.
///
/// `r3` follows the fixed ordering of the third-order conditions: the
/// coefficients of `a⁽²⁾(α,α)`, `a⁽²⁾(μ,μ)`, `a⁽²⁾(α,μ)`, `a⁽¹⁾(a⁽¹⁾α)`,
/// `a⁽¹⁾(a⁽¹⁾μ)`, `a⁽¹⁾(m⁽¹⁾α)`, `a⁽¹⁾(m⁽¹⁾μ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderReport {
    pub r1: f64,
    pub r2: [f64; 2],
    pub r3: [f64; 7],
    pub tolerance: f64,
    pub attained_order: u8,
}

impl OrderReport {
    fn new(r1: f64, r2: [f64; 2], r3: [f64; 7], tolerance: f64) -> Self {
        let mut report = Self {
            r1,
            r2,
            r3,
            tolerance,
            attained_order: 0,
        };
        report.attained_order = report.attained_order_at(tolerance);
        report
    }

    /// Largest `k ≤ 3` such that every residual of level `1..=k` is within `tol`.
    pub fn attained_order_at(&self, tol: f64) -> u8 {
        let ok = |v: &[f64]| v.iter().all(|r| r.abs() <= tol);
        if !ok(&[self.r1]) {
            0
        } else if !ok(&self.r2) {
            1
        } else if !ok(&self.r3) {
            2
        } else {
            3
        }
    }

    /// Residuals of conditions above the given order (the "out-of-order" set).
    pub fn residuals_above(&self, order: u8) -> Vec<f64> {
        let mut out = Vec::new();
        if order < 1 {
            out.push(self.r1);
        }
        if order < 2 {
            out.extend_from_slice(&self.r2);
        }
        if order < 3 {
            out.extend_from_slice(&self.r3);
        }
        out
    }

    /// Residuals of conditions up to and including the given order.
    pub fn residuals_up_to(&self, order: u8) -> Vec<f64> {
        let mut out = Vec::new();
        if order >= 1 {
            out.push(self.r1);
        }
        if order >= 2 {
            out.extend_from_slice(&self.r2);
        }
        if order >= 3 {
            out.extend_from_slice(&self.r3);
        }
        out
    }
}

fn residuals<T>(a: &dyn Fn(usize, usize) -> T, d: &dyn Fn(usize, usize) -> T, b: &[T]) -> (T, [T; 2], [T; 7])
where
    T: Copy + Zero + One + Add<Output = T> + Sub<Output = T> + Mul<Output = T>,
{
    let s = b.len();
    let one = T::one();
    let two = one + one;
    let three = two + one;
    let six = three + three;
    let sum = |f: &dyn Fn(usize) -> T| (0..s).fold(T::zero(), |acc, i| acc + f(i));

    let r1 = sum(&|i| b[i]) - one;

    let bd = sum(&|i| (0..i).fold(T::zero(), |acc, j| acc + b[i] * d(i, j)));
    let ba = sum(&|i| (0..i).fold(T::zero(), |acc, j| acc + b[i] * a(i, j)));
    let r2 = [two * bd - one, two * ba - one];

    let row_a = |i: usize| (0..i).fold(T::zero(), |acc, j| acc + a(i, j));
    let row_d = |i: usize| (0..i).fold(T::zero(), |acc, j| acc + d(i, j));
    let triple = |x: &dyn Fn(usize, usize) -> T, y: &dyn Fn(usize, usize) -> T| {
        sum(&|i| {
            (0..i).fold(T::zero(), |acc, j| {
                (0..j).fold(acc, |acc, k| acc + b[i] * x(i, j) * y(j, k))
            })
        })
    };
    let r3 = [
        three * sum(&|i| b[i] * row_a(i) * row_a(i)) - one,
        three * sum(&|i| b[i] * row_d(i) * row_d(i)) - one,
        three * sum(&|i| b[i] * row_a(i) * row_d(i)) - one,
        six * triple(a, a) - one,
        six * triple(a, d) - one,
        three * triple(d, a) - one,
        three * triple(d, d) - one,
    ];
    (r1, r2, r3)
}

/// Evaluates all order-condition residuals (condition left-hand side minus one).
pub fn order_residuals(t: &SarkTableau) -> OrderReport {
    if let Some(ex) = &t.exact {
        let (r1, r2, r3) = residuals::<Q>(&|i, j| ex.a[i][j], &|i, j| ex.d[i][j], &ex.b);
        OrderReport::new(
            q_to_f64(&r1),
            r2.map(|v| q_to_f64(&v)),
            r3.map(|v| q_to_f64(&v)),
            DEFAULT_ORDER_TOL,
        )
    } else {
        let (r1, r2, r3) = residuals::<f64>(&|i, j| t.a(i, j), &|i, j| t.d(i, j), &t.b);
        OrderReport::new(r1, r2, r3, DEFAULT_ORDER_TOL)
    }
}

/// Attained order (at most 3) with the given residual tolerance.
pub fn verify_order(t: &SarkTableau, tol: f64) -> u8 {
    order_residuals(t).attained_order_at(tol)
}
