//! 1D meshes, advancing fronts and tent pitching.
//!
//! A front assigns a time value to each mesh vertex; its graph is piecewise
//! linear. A tent advances the front at a single vertex `V`, and the region
//! between the old and new front over the vertex patch `ω_V` is the tent.
//! Causality requires `|∇τ| < 1/c_max` everywhere on the front.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid pitching parameter: {0}")]
    InvalidParameter(String),
    #[error("tent pitching made no progress at vertex {vertex} (tau = {tau}, limit = {limit})")]
    NoProgress { vertex: usize, tau: f64, limit: f64 },
}

/// A 1D mesh with vertices `x_0 < x_1 < … < x_n`.
///
/// On a periodic mesh vertex `n` is identified with vertex `0`, so there are
/// `n` distinct vertices; otherwise there are `n + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    x: Vec<f64>,
    periodic: bool,
}

impl Mesh1D {
    pub fn new(x: Vec<f64>, periodic: bool) -> Result<Self, MeshError> {
        if x.len() < 3 {
            return Err(MeshError::InvalidMesh(format!(
                "need at least 2 elements, got {}",
                x.len().saturating_sub(1)
            )));
        }
        if let Some(i) = x.windows(2).position(|w| w[1].partial_cmp(&w[0]) != Some(Ordering::Greater)) {
            return Err(MeshError::InvalidMesh(format!(
                "vertices must be strictly increasing (x[{}] = {}, x[{}] = {})",
                i,
                x[i],
                i + 1,
                x[i + 1]
            )));
        }
        Ok(Self { x, periodic })
    }

    /// `n` equal elements on `[a, b]`.
    pub fn uniform(a: f64, b: f64, n: usize, periodic: bool) -> Result<Self, MeshError> {
        if n < 2 {
            return Err(MeshError::InvalidMesh(format!("need at least 2 elements, got {n}")));
        }
        let h = (b - a) / n as f64;
        let x = (0..=n)
            .map(|i| if i == n { b } else { a + i as f64 * h })
            .collect();
        Self::new(x, periodic)
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn num_elements(&self) -> usize {
        self.x.len() - 1
    }

    /// Number of distinct vertices.
    pub fn num_vertices(&self) -> usize {
        if self.periodic {
            self.num_elements()
        } else {
            self.x.len()
        }
    }

    /// Vertex coordinates `x_0..=x_n` (for a periodic mesh the last one is the
    /// image of vertex 0).
    pub fn coordinates(&self) -> &[f64] {
        &self.x
    }

    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        (self.x[e], self.x[e + 1])
    }

    pub fn element_length(&self, e: usize) -> f64 {
        self.x[e + 1] - self.x[e]
    }

    /// Distinct vertex ids at the left and right end of element `e`.
    pub fn element_vertices(&self, e: usize) -> (usize, usize) {
        let right = if self.periodic && e + 1 == self.num_elements() {
            0
        } else {
            e + 1
        };
        (e, right)
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        !self.periodic && (v == 0 || v == self.num_elements())
    }

    pub fn vertex_position(&self, v: usize) -> f64 {
        self.x[v]
    }

    /// Elements of the patch `ω_V`, ordered left to right.
    pub fn patch_elements(&self, v: usize) -> Vec<usize> {
        let n = self.num_elements();
        if self.periodic {
            vec![(v + n - 1) % n, v]
        } else if v == 0 {
            vec![0]
        } else if v == n {
            vec![n - 1]
        } else {
            vec![v - 1, v]
        }
    }

    /// Vertices of the patch `ω_V`, ordered left to right.
    pub fn patch_vertices(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(3);
        for (i, e) in self.patch_elements(v).into_iter().enumerate() {
            let (l, r) = self.element_vertices(e);
            if i == 0 {
                out.push(l);
            }
            out.push(r);
        }
        out
    }

    /// Neighbouring vertices together with the connecting element length.
    fn neighbours(&self, v: usize) -> Vec<(usize, f64)> {
        self.patch_elements(v)
            .into_iter()
            .map(|e| {
                let (l, r) = self.element_vertices(e);
                (if l == v { r } else { l }, self.element_length(e))
            })
            .collect()
    }
}

/// Per-vertex time values of an advancing front.
#[derive(Debug, Clone, PartialEq)]
pub struct Front {
    pub tau: Vec<f64>,
}

impl Front {
    pub fn flat(mesh: &Mesh1D, t: f64) -> Self {
        Self {
            tau: vec![t; mesh.num_vertices()],
        }
    }

    /// Largest `|∇τ|` over all elements.
    pub fn max_gradient(&self, mesh: &Mesh1D) -> f64 {
        (0..mesh.num_elements())
            .map(|e| {
                let (l, r) = mesh.element_vertices(e);
                (self.tau[r] - self.tau[l]).abs() / mesh.element_length(e)
            })
            .fold(0.0, f64::max)
    }

    pub fn is_flat(&self) -> bool {
        self.tau.windows(2).all(|w| w[0] == w[1])
    }
}

/// A spacetime tent over the patch of vertex `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tent {
    pub id: usize,
    pub center: usize,
    /// Patch vertices, left to right.
    pub vertices: Vec<usize>,
    /// Patch elements, left to right.
    pub elements: Vec<usize>,
    /// Position of `center` within `vertices`.
    pub center_local: usize,
    pub phi_b: Vec<f64>,
    pub phi_t: Vec<f64>,
    pub level: usize,
}

impl Tent {
    /// `δ = φ_t - φ_b` at the patch vertices.
    pub fn delta(&self) -> Vec<f64> {
        self.phi_t.iter().zip(&self.phi_b).map(|(t, b)| t - b).collect()
    }

    pub fn pole_height(&self) -> f64 {
        self.phi_t[self.center_local] - self.phi_b[self.center_local]
    }

    /// Front values at the two ends of the `i`-th patch element.
    pub fn element_fronts(&self, i: usize, front: &[f64]) -> (f64, f64) {
        (front[i], front[i + 1])
    }
}

/// `(φ^[k], φ^[k+1])` for `k = 0..r`, with `φ^[k] = φ_b + (k/r)·δ`.
pub fn subtent_fronts(tent: &Tent, r: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    assert!(r >= 1);
    let delta = tent.delta();
    let front = |k: usize| -> Vec<f64> {
        if k == 0 {
            tent.phi_b.clone()
        } else if k == r {
            tent.phi_t.clone()
        } else {
            let th = k as f64 / r as f64;
            tent.phi_b.iter().zip(&delta).map(|(b, d)| b + th * d).collect()
        }
    };
    (0..r).map(|k| (front(k), front(k + 1))).collect()
}

/// Tents filling the slab `Ω × (0, t_max)`, in causal (pitching) order.
#[derive(Debug, Clone)]
pub struct TentSlab {
    pub mesh: Mesh1D,
    pub tents: Vec<Tent>,
    pub t_max: f64,
    pub c_max: f64,
    pub gamma: f64,
    pub num_levels: usize,
}

impl TentSlab {
    /// Tent ids grouped by dependency level.
    pub fn levels(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_levels];
        for t in &self.tents {
            out[t.level].push(t.id);
        }
        out
    }

    /// Writes one `tent <id> center=<V> level=<L> phib=<...> phit=<...>` line per tent.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(",");
        for t in &self.tents {
            writeln!(
                w,
                "tent {} center={} level={} phib={} phit={}",
                t.id,
                t.center,
                t.level,
                join(&t.phi_b),
                join(&t.phi_t)
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FrontKey {
    tau: f64,
    vertex: usize,
}

impl Eq for FrontKey {}

impl PartialOrd for FrontKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FrontKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.tau
            .total_cmp(&other.tau)
            .then(self.vertex.cmp(&other.vertex))
    }
}

/// Greedy tent pitching.
///
/// Repeatedly picks the vertex with the smallest front value (lowest index on
/// ties) and raises it to `min(t_max, min_W τ(W) + γ·|x_V - x_W|/c_max)`.
pub fn pitch_slab(mesh: &Mesh1D, c_max: f64, t_max: f64, gamma: f64) -> Result<TentSlab, MeshError> {
    if !(c_max > 0.0 && c_max.is_finite()) {
        return Err(MeshError::InvalidParameter(format!("c_max must be positive, got {c_max}")));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(MeshError::InvalidParameter(format!("t_max must be positive, got {t_max}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(MeshError::InvalidParameter(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let nv = mesh.num_vertices();
    let mut tau = vec![0.0; nv];
    let mut queue: BTreeSet<FrontKey> = (0..nv).map(|v| FrontKey { tau: 0.0, vertex: v }).collect();
    let mut tents = Vec::new();

    while let Some(key) = queue.pop_first() {
        let v = key.vertex;
        let limit = mesh
            .neighbours(v)
            .into_iter()
            .map(|(w, h)| tau[w] + gamma * h / c_max)
            .fold(t_max, f64::min);
        if limit.partial_cmp(&tau[v]) != Some(Ordering::Greater) {
            return Err(MeshError::NoProgress { vertex: v, tau: tau[v], limit });
        }
        let vertices = mesh.patch_vertices(v);
        let phi_b: Vec<f64> = vertices.iter().map(|&w| tau[w]).collect();
        tau[v] = limit;
        let phi_t: Vec<f64> = vertices.iter().map(|&w| tau[w]).collect();
        let center_local = vertices.iter().position(|&w| w == v).expect("center in patch");
        tents.push(Tent {
            id: tents.len(),
            center: v,
            elements: mesh.patch_elements(v),
            vertices,
            center_local,
            phi_b,
            phi_t,
            level: 0,
        });
        if limit < t_max {
            queue.insert(FrontKey { tau: limit, vertex: v });
        }
    }

    let mut slab = TentSlab {
        mesh: mesh.clone(),
        tents,
        t_max,
        c_max,
        gamma,
        num_levels: 0,
    };
    dependency_levels(&mut slab);
    Ok(slab)
}

/// Assigns each tent the smallest level above every earlier tent whose patch
/// overlaps it in an element. Tents on one level touch disjoint elements and
/// can run concurrently. Returns the number of levels.
pub fn dependency_levels(slab: &mut TentSlab) -> usize {
    let mut element_level: Vec<Option<usize>> = vec![None; slab.mesh.num_elements()];
    let mut num_levels = 0;
    for tent in &mut slab.tents {
        let level = tent
            .elements
            .iter()
            .filter_map(|&e| element_level[e])
            .max()
            .map_or(0, |l| l + 1);
        tent.level = level;
        for &e in &tent.elements {
            element_level[e] = Some(level);
        }
        num_levels = num_levels.max(level + 1);
    }
    slab.num_levels = num_levels;
    num_levels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_slab(slab: &TentSlab) {
        let mesh = &slab.mesh;
        let bound = slab.gamma / slab.c_max;
        let mut front = vec![0.0; mesh.num_vertices()];
        for t in &slab.tents {
            for (k, &v) in t.vertices.iter().enumerate() {
                assert_eq!(t.phi_b[k], front[v], "tent {} reads stale front", t.id);
            }
            assert!(t.pole_height() > 0.0);
            for (i, &e) in t.elements.iter().enumerate() {
                let h = mesh.element_length(e);
                for phi in [&t.phi_b, &t.phi_t] {
                    let g = (phi[i + 1] - phi[i]).abs() / h;
                    assert!(g <= bound * (1.0 + 1e-12), "gradient {g} > {bound}");
                }
            }
            front[t.center] = t.phi_t[t.center_local];
        }
        assert!(front.iter().all(|&f| f == slab.t_max));
    }

    #[test]
    fn rejects_bad_meshes() {
        assert!(Mesh1D::new(vec![0.0, 1.0], false).is_err());
        assert!(Mesh1D::new(vec![0.0, 0.5, 0.5], false).is_err());
        assert!(Mesh1D::uniform(0.0, 1.0, 1, true).is_err());
    }

    #[test]
    fn patches() {
        let m = Mesh1D::uniform(0.0, 1.0, 4, false).unwrap();
        assert_eq!(m.patch_elements(0), vec![0]);
        assert_eq!(m.patch_vertices(0), vec![0, 1]);
        assert_eq!(m.patch_elements(2), vec![1, 2]);
        assert_eq!(m.patch_vertices(4), vec![3, 4]);
        let p = Mesh1D::uniform(0.0, 1.0, 4, true).unwrap();
        assert_eq!(p.num_vertices(), 4);
        assert_eq!(p.patch_elements(0), vec![3, 0]);
        assert_eq!(p.patch_vertices(0), vec![3, 0, 1]);
        assert_eq!(p.patch_vertices(3), vec![2, 3, 0]);
    }

    #[test]
    fn first_pole_height_on_flat_front() {
        let m = Mesh1D::uniform(0.0, 1.0, 10, false).unwrap();
        let slab = pitch_slab(&m, 8.0, 1.0, 0.99).unwrap();
        let interior = slab.tents.iter().find(|t| t.center == 5).unwrap();
        let h = 0.99 * 0.1 / 8.0;
        assert!((interior.pole_height() - h).abs() < 1e-15);
        assert!((interior.pole_height() - 0.012375).abs() < 1e-15);
        check_slab(&slab);
    }

    #[test]
    fn tiny_t_max_pitches_each_vertex_once() {
        let m = Mesh1D::uniform(0.0, 1.0, 8, true).unwrap();
        let slab = pitch_slab(&m, 1.0, 1e-4, 0.99).unwrap();
        assert_eq!(slab.tents.len(), 8);
        for t in &slab.tents {
            assert_eq!(t.phi_t[t.center_local], 1e-4);
        }
        check_slab(&slab);
    }

    #[test]
    fn coverage_and_causality() {
        let x: Vec<f64> = (0..=12).map(|i| (i as f64 / 12.0).powf(1.3)).collect();
        for periodic in [false, true] {
            let m = Mesh1D::new(x.clone(), periodic).unwrap();
            let slab = pitch_slab(&m, 2.5, 0.37, 0.9).unwrap();
            check_slab(&slab);
            // per-vertex intervals tile [0, t_max]
            for v in 0..m.num_vertices() {
                let mut t = 0.0;
                for tent in slab.tents.iter().filter(|t| t.center == v) {
                    assert_eq!(tent.phi_b[tent.center_local], t);
                    t = tent.phi_t[tent.center_local];
                }
                assert_eq!(t, 0.37);
            }
        }
    }

    #[test]
    fn subtent_fronts_interpolate() {
        let m = Mesh1D::uniform(0.0, 1.0, 6, false).unwrap();
        let slab = pitch_slab(&m, 3.0, 0.5, 0.99).unwrap();
        let tent = &slab.tents[20];
        let one = subtent_fronts(tent, 1);
        assert_eq!(one, vec![(tent.phi_b.clone(), tent.phi_t.clone())]);
        let two = subtent_fronts(tent, 2);
        for (k, mid) in two[0].1.iter().enumerate() {
            assert!((mid - 0.5 * (tent.phi_b[k] + tent.phi_t[k])).abs() < 1e-15);
        }
        assert_eq!(two[0].1, two[1].0);
        for r in [3, 7] {
            for (lo, hi) in subtent_fronts(tent, r) {
                for i in 0..tent.elements.len() {
                    let h = m.element_length(tent.elements[i]);
                    for f in [&lo, &hi] {
                        assert!((f[i + 1] - f[i]).abs() / h <= 0.99 / 3.0 * (1.0 + 1e-12));
                    }
                }
            }
        }
    }

    fn manual_slab(mesh: &Mesh1D, centers: &[usize]) -> TentSlab {
        let mut front = vec![0.0; mesh.num_vertices()];
        let tents = centers
            .iter()
            .enumerate()
            .map(|(id, &v)| {
                let vertices = mesh.patch_vertices(v);
                let phi_b: Vec<f64> = vertices.iter().map(|&w| front[w]).collect();
                front[v] += 0.01;
                let phi_t: Vec<f64> = vertices.iter().map(|&w| front[w]).collect();
                Tent {
                    id,
                    center: v,
                    center_local: vertices.iter().position(|&w| w == v).unwrap(),
                    elements: mesh.patch_elements(v),
                    vertices,
                    phi_b,
                    phi_t,
                    level: 0,
                }
            })
            .collect();
        TentSlab {
            mesh: mesh.clone(),
            tents,
            t_max: 0.0,
            c_max: 1.0,
            gamma: 0.99,
            num_levels: 0,
        }
    }

    #[test]
    fn dependency_level_examples() {
        let m = Mesh1D::uniform(0.0, 1.0, 8, false).unwrap();
        let mut single = manual_slab(&m, &[3]);
        assert_eq!(dependency_levels(&mut single), 1);
        let mut pair = manual_slab(&m, &[3, 4]);
        assert_eq!(dependency_levels(&mut pair), 2);

        // odd interior vertices, then even ones, twice
        let sweep = [1, 3, 5, 7, 2, 4, 6];
        let centers: Vec<usize> = sweep.iter().chain(sweep.iter()).copied().collect();
        let mut slab = manual_slab(&m, &centers);
        assert_eq!(dependency_levels(&mut slab), 4);
        for level in slab.levels() {
            let mut used = vec![false; m.num_elements()];
            for id in level {
                for &e in &slab.tents[id].elements {
                    assert!(!used[e], "elements overlap within a level");
                    used[e] = true;
                }
            }
        }
    }

    #[test]
    fn dump_format() {
        let m = Mesh1D::uniform(0.0, 1.0, 2, false).unwrap();
        let slab = pitch_slab(&m, 1.0, 0.01, 0.5).unwrap();
        let mut buf = Vec::new();
        slab.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with("tent 0 center=0 level=0 phib="), "{first}");
        assert!(first.contains(" phit="));
        assert_eq!(text.lines().count(), slab.tents.len());
    }
}
