//! Convergence and stability studies driven by a [`RunConfig`].

use crate::dg::{project_initial, propagate_slab, try_l2_error, DgError, DgSpace, Discretization, TimeScheme};
use crate::mesh::{pitch_slab, Mesh1D, MeshError};
use crate::models::{burgers_initial, Advection1D, Burgers1D, BurgersFlux, FluxModel, ModelError};
use crate::stability::{slab_cbar, StabilityError};
use crate::tableau::{builtin_sark, TableauError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Tableau(#[from] TableauError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("level {level}: {source}")]
    Solver { level: usize, source: DgError },
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid JSON config: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// 1 for configuration and I/O problems, 2 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Solver { .. } | HarnessError::Stability(_) => 2,
            HarnessError::Mesh(MeshError::NoProgress { .. }) => 2,
            _ => 1,
        }
    }
}

/// Inclusive range of mesh levels `i0..i1`, with `h = h0·2^{-i}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Levels {
    pub first: usize,
    pub last: usize,
}

impl Levels {
    pub fn iter(&self) -> impl Iterator<Item = usize> {
        self.first..=self.last
    }
}

impl FromStr for Levels {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = match s.split_once("..") {
            Some((a, b)) => (a, b.strip_prefix('=').unwrap_or(b)),
            None => (s, s),
        };
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid level range '{s}' (expected i0..i1)"))
        };
        let (first, last) = (parse(a)?, parse(b)?);
        if first > last {
            return Err(format!("empty level range '{s}'"));
        }
        Ok(Levels { first, last })
    }
}

impl fmt::Display for Levels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.first, self.last)
    }
}

impl Serialize for Levels {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Levels {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub model: String,
    pub scheme: String,
    pub p: usize,
    pub r: usize,
    pub cmax: f64,
    pub gamma: f64,
    pub tmax: f64,
    pub levels: Levels,
    pub h0: f64,
    pub out: Option<PathBuf>,
    pub threads: usize,
    pub seed: u64,
    /// Advection speed.
    pub speed: f64,
    /// Burgers flux convention, `half` (u²/2) or `square` (u²).
    pub burgers_flux: String,
    /// Substep counts for stability studies.
    pub r_list: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "burgers1d".into(),
            scheme: "sark3-heun".into(),
            p: 2,
            r: 4,
            cmax: 8.0,
            gamma: 0.99,
            tmax: 0.1,
            levels: Levels { first: 0, last: 6 },
            h0: 0.1,
            out: None,
            threads: 1,
            seed: 0,
            speed: 1.0,
            burgers_flux: "half".into(),
            r_list: vec![2, 4, 8, 16, 32],
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.r == 0 {
            return bad("r must be at least 1".into());
        }
        for (name, v) in [("cmax", self.cmax), ("tmax", self.tmax), ("h0", self.h0)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if self.r_list.is_empty() || self.r_list.contains(&0) {
            return bad("r-list must be a nonempty list of positive substep counts".into());
        }
        self.build_model()?;
        TimeScheme::by_name(&self.scheme)?;
        Ok(())
    }

    pub fn build_model(&self) -> Result<Box<dyn FluxModel>, HarnessError> {
        match self.model.as_str() {
            "burgers1d" => {
                let flux = match self.burgers_flux.as_str() {
                    "half" => BurgersFlux::Half,
                    "square" => BurgersFlux::Square,
                    other => {
                        return Err(HarnessError::Config(format!(
                            "unknown Burgers flux '{other}' (valid: half, square)"
                        )))
                    }
                };
                Ok(Box::new(Burgers1D::with_flux(flux)))
            }
            "advection1d" => Ok(Box::new(Advection1D::periodic(self.speed, burgers_initial))),
            other => Err(HarnessError::Config(format!(
                "unknown model '{other}' (valid: advection1d, burgers1d)"
            ))),
        }
    }

    /// Number of elements on level `i`.
    pub fn elements(&self, level: usize) -> usize {
        (1.0 / (self.h0 * 0.5f64.powi(level as i32))).round().max(2.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub h: f64,
    pub elements: usize,
    pub dof: usize,
    pub error: f64,
    pub eoc: Option<f64>,
}

#[derive(Debug)]
pub struct ConvergenceResult {
    pub rows: Vec<ConvergenceRow>,
    /// The first level that failed, if any; later levels are not attempted.
    pub failure: Option<HarnessError>,
}

/// `log(e_prev/e)/log(h_prev/h)`.
pub fn eoc(prev: &ConvergenceRow, row: &ConvergenceRow) -> f64 {
    (prev.error / row.error).ln() / (prev.h / row.h).ln()
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce(bool) -> T + Send) -> T {
    if threads <= 1 {
        return f(false);
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| f(true)),
        Err(_) => f(false),
    }
}

/// Error at `tmax` for one mesh level.
pub fn run_level(cfg: &RunConfig, model: &dyn FluxModel, level: usize) -> Result<ConvergenceRow, HarnessError> {
    let scheme = TimeScheme::by_name(&cfg.scheme)?;
    let n = cfg.elements(level);
    let mesh = Mesh1D::uniform(0.0, 1.0, n, model.periodic())?;
    let space = DgSpace::new(cfg.p);
    let disc = Discretization {
        mesh: &mesh,
        space: &space,
        model,
    };
    let slab = pitch_slab(&mesh, cfg.cmax, cfg.tmax, cfg.gamma)?;
    let mut state = project_initial(&mesh, &space, |x| model.initial(x));
    with_pool(cfg.threads, |parallel| {
        propagate_slab(disc, &mut state, &slab, &scheme, cfg.r, parallel)
    })
    .map_err(|source| HarnessError::Solver { level, source })?;
    let tmax = cfg.tmax;
    let error = try_l2_error(&mesh, &space, &state, |x| {
        model.exact(x, tmax).unwrap_or(Err(ModelError::NotConverged {
            x,
            t: tmax,
            residual: f64::NAN,
        }))
    })
    .map_err(|source| HarnessError::Solver { level, source })?;
    Ok(ConvergenceRow {
        level,
        h: 1.0 / n as f64,
        elements: n,
        dof: space.num_dofs(&mesh),
        error,
        eoc: None,
    })
}

pub fn run_convergence(cfg: &RunConfig) -> Result<ConvergenceResult, HarnessError> {
    cfg.validate()?;
    let model = cfg.build_model()?;
    Ok(run_convergence_with(cfg, model.as_ref()))
}

/// As [`run_convergence`] with an explicit model.
pub fn run_convergence_with(cfg: &RunConfig, model: &dyn FluxModel) -> ConvergenceResult {
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for level in cfg.levels.iter() {
        match run_level(cfg, model, level) {
            Ok(mut row) => {
                row.eoc = rows.last().map(|prev| eoc(prev, &row));
                rows.push(row);
            }
            Err(e) => {
                return ConvergenceResult {
                    rows,
                    failure: Some(e),
                }
            }
        }
    }
    ConvergenceResult { rows, failure: None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub r: usize,
    pub p: usize,
    pub s: usize,
    pub scheme: String,
    pub cbar: f64,
}

/// `C̄` for every substep count in `r_list`, on a periodic mesh with
/// `round(1/h0)` elements.
pub fn run_stability(cfg: &RunConfig) -> Result<Vec<StabilityRow>, HarnessError> {
    cfg.validate()?;
    let model = cfg.build_model()?;
    if !model.is_linear() {
        return Err(HarnessError::Config(format!(
            "stability studies need a linear model, got '{}'",
            cfg.model
        )));
    }
    let tableau = builtin_sark(&cfg.scheme)?;
    let mesh = Mesh1D::uniform(0.0, 1.0, cfg.elements(0), true)?;
    let threads = cfg.threads;
    cfg.r_list
        .iter()
        .map(|&r| {
            let report = with_pool(threads, |_| {
                slab_cbar(&mesh, model.as_ref(), &tableau, cfg.p, r, cfg.cmax, cfg.tmax, cfg.gamma)
            })?;
            Ok(StabilityRow {
                r,
                p: report.p,
                s: report.s,
                scheme: report.scheme,
                cbar: report.cbar,
            })
        })
        .collect()
}

fn sci(v: f64) -> String {
    format!("{v:.14e}")
}

/// Writes convergence rows as CSV with columns `level,h,elements,dof,error,eoc`.
pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["level", "h", "elements", "dof", "error", "eoc"])?;
    for r in rows {
        out.write_record([
            r.level.to_string(),
            sci(r.h),
            r.elements.to_string(),
            r.dof.to_string(),
            sci(r.error),
            r.eoc.map(sci).unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes stability rows as CSV with columns `r,p,s,scheme,cbar`.
pub fn write_stability_csv<W: Write>(rows: &[StabilityRow], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["r", "p", "s", "scheme", "cbar"])?;
    for r in rows {
        out.write_record([
            r.r.to_string(),
            r.p.to_string(),
            r.s.to_string(),
            r.scheme.clone(),
            sci(r.cbar),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Rows to be written by [`emit_csv`].
pub enum Table<'a> {
    Convergence(&'a [ConvergenceRow]),
    Stability(&'a [StabilityRow]),
}

/// Writes a table to `path`.
pub fn emit_csv(table: Table<'_>, path: &Path) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match table {
        Table::Convergence(rows) => write_convergence_csv(rows, file),
        Table::Stability(rows) => write_stability_csv(rows, file),
    }
}

/// A gnuplot script plotting a CSV written by [`emit_csv`].
pub fn gnuplot_script(table: &Table<'_>, csv_path: &Path) -> String {
    let (xlabel, ylabel, cols) = match table {
        Table::Convergence(_) => ("h", "L2 error", "2:5"),
        Table::Stability(_) => ("r", "Cbar", "1:5"),
    };
    format!(
        "set datafile separator ','\nset logscale xy\nset key off\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\nplot '{}' every ::1 using {cols} with linespoints\n",
        csv_path.display()
    )
}
