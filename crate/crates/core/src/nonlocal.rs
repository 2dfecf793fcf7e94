//! Self-repulsion functionals and their exact discrete gradients.
//!
//! Three functionals are supported:
//!
//! - bulk: `∬_{U×U} |x-x̃|^q / |y(x)-y(x̃)|^{d+sq} · det∇y(x) det∇y(x̃)` with
//!   `U = Ω` or a boundary layer,
//! - surface: `∬_{∂Ω×∂Ω} |x-x̃|^q / |y(x)-y(x̃)|^{d-1+sq} dA dÃ`.
//!
//! Each double integral is replaced by a double sum over quadrature nodes of
//! integration cells (triangles or boundary edges). Both factors of a pair
//! are treated symmetrically, so the gradient of the sum is twice the
//! derivative with respect to the first slot. One parallel task computes the
//! contribution of one cell (a row of the pair matrix) and the rows are
//! reduced in index order, which keeps results independent of thread count.
//!
//! The diagonal singularity is integrable for `s < 1`. The default policy
//! omits pairs of a cell with itself; `SubdivideAdjacent` instead integrates
//! every pair of cells sharing a vertex on uniformly refined sub-cells.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elastic::{cofactor, vertex_forces, DeformationField};
use crate::error::{ConfigError, EnergyError};
use crate::mesh::{build_structured_square, delta_layer, Mesh, Region};
use crate::params::{ModelParams, Variant};
use crate::reduce::pairwise_sum;
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureScheme {
    /// One node per cell: the centroid of a triangle, the midpoint of an edge.
    #[default]
    Centroid,
    /// Three nodes per cell: the degree-2 interior rule on triangles,
    /// three-point Gauss–Legendre on edges.
    #[serde(rename = "3-point")]
    ThreePoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DiagonalPolicy {
    /// Omit pairs of a cell with itself.
    #[default]
    SkipSelf,
    /// Integrate pairs of cells sharing a vertex on refined sub-cells and
    /// omit only coincident sub-cells.
    SubdivideAdjacent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: QuadratureScheme,
    pub diagonal: DiagonalPolicy,
    /// Uniform refinement levels for `SubdivideAdjacent` (≥ 1).
    pub subdivision_depth: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            scheme: QuadratureScheme::Centroid,
            diagonal: DiagonalPolicy::SkipSelf,
            subdivision_depth: 2,
        }
    }
}

impl QuadratureSpec {
    pub fn subdivided(depth: u32) -> Self {
        QuadratureSpec {
            diagonal: DiagonalPolicy::SubdivideAdjacent,
            subdivision_depth: depth.max(1),
            ..Self::default()
        }
    }

    fn depth(&self) -> u32 {
        match self.diagonal {
            DiagonalPolicy::SkipSelf => 0,
            DiagonalPolicy::SubdivideAdjacent => self.subdivision_depth.max(1),
        }
    }
}

/// Value and per-vertex gradient of a repulsion functional.
#[derive(Debug, Clone, PartialEq)]
pub struct Repulsion {
    pub value: f64,
    /// Empty when evaluated without gradient.
    pub gradient: Vec<Vec2>,
}

// r^e evaluated from r², with cheap paths for integer exponents.
#[derive(Debug, Clone, Copy)]
enum Power {
    Zero,
    Even(i32),
    Odd(i32),
    Real(f64),
}

impl Power {
    fn new(e: f64) -> Self {
        if e == 0.0 {
            Power::Zero
        } else if e.fract() == 0.0 && e.abs() < 64.0 {
            let k = e as i32;
            if k % 2 == 0 {
                Power::Even(k / 2)
            } else {
                Power::Odd(k)
            }
        } else {
            Power::Real(0.5 * e)
        }
    }

    #[inline(always)]
    fn of_sq(self, r2: f64) -> f64 {
        match self {
            Power::Zero => 1.0,
            Power::Even(k) => r2.powi(k),
            Power::Odd(k) => r2.sqrt().powi(k),
            Power::Real(h) => r2.powf(h),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node<const K: usize> {
    bary: [f64; K],
    x: Vec2,
    z: Vec2,
    // Rule weight × cell measure × cell Jacobian.
    w: f64,
}

// Quadrature nodes of the reference cell: barycentric coordinates and the
// fraction of the cell measure each node carries.
fn triangle_rule(scheme: QuadratureScheme, depth: u32) -> Vec<([f64; 3], f64)> {
    let base: Vec<([f64; 3], f64)> = match scheme {
        QuadratureScheme::Centroid => vec![([1.0 / 3.0; 3], 1.0)],
        QuadratureScheme::ThreePoint => vec![
            ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
            ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
            ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
        ],
    };
    let mut cells = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]];
    for _ in 0..depth {
        cells = cells
            .into_iter()
            .flat_map(|[a, b, c]| {
                let mid = |u: [f64; 3], v: [f64; 3]| {
                    [
                        0.5 * (u[0] + v[0]),
                        0.5 * (u[1] + v[1]),
                        0.5 * (u[2] + v[2]),
                    ]
                };
                let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
                [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
            })
            .collect();
    }
    let scale = 1.0 / cells.len() as f64;
    cells
        .iter()
        .flat_map(|corners| {
            base.iter().map(move |(l, w)| {
                let mut b = [0.0; 3];
                for (k, corner) in corners.iter().enumerate() {
                    for i in 0..3 {
                        b[i] += l[k] * corner[i];
                    }
                }
                (b, w * scale)
            })
        })
        .collect()
}

fn edge_rule(scheme: QuadratureScheme, depth: u32) -> Vec<([f64; 2], f64)> {
    let base: Vec<(f64, f64)> = match scheme {
        QuadratureScheme::Centroid => vec![(0.5, 1.0)],
        QuadratureScheme::ThreePoint => {
            let g = 0.5 * (0.6f64).sqrt();
            vec![
                (0.5 - g, 5.0 / 18.0),
                (0.5, 8.0 / 18.0),
                (0.5 + g, 5.0 / 18.0),
            ]
        }
    };
    let pieces = 1usize << depth;
    let h = 1.0 / pieces as f64;
    (0..pieces)
        .flat_map(|k| {
            base.iter().map(move |&(t, w)| {
                let u = (k as f64 + t) * h;
                ([1.0 - u, u], w * h)
            })
        })
        .collect()
}

// Integration cells (triangles or boundary edges) with their node sets.
struct PairSum<'a, const K: usize> {
    mesh: &'a Mesh,
    field: &'a DeformationField,
    cells: Vec<[usize; K]>,
    // Measure × Jacobian of each cell.
    mass: Vec<f64>,
    coarse_rule: Vec<([f64; K], f64)>,
    fine_rule: Vec<([f64; K], f64)>,
    coarse: Vec<Node<K>>,
    // Sorted local indices of cells sharing a vertex, self included.
    near: Option<Vec<Vec<usize>>>,
    pow_q: Power,
    pow_beta: Power,
    beta: f64,
    coincident_sq: f64,
}

impl<'a, const K: usize> PairSum<'a, K> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        mesh: &'a Mesh,
        field: &'a DeformationField,
        cells: Vec<[usize; K]>,
        mass: Vec<f64>,
        coarse_rule: Vec<([f64; K], f64)>,
        fine_rule: Vec<([f64; K], f64)>,
        subdivide: bool,
        q: f64,
        beta: f64,
    ) -> Self {
        let mut s = PairSum {
            mesh,
            field,
            cells,
            mass,
            coarse_rule,
            fine_rule,
            coarse: Vec::new(),
            near: None,
            pow_q: Power::new(q),
            pow_beta: Power::new(-beta),
            beta,
            coincident_sq: (1e-14 * mesh.diameter()).powi(2),
        };
        s.coarse = (0..s.cells.len())
            .flat_map(|c| s.nodes(c, &s.coarse_rule))
            .collect();
        if subdivide {
            s.near = Some(s.vertex_adjacency());
        }
        s
    }

    fn nodes(&self, c: usize, rule: &[([f64; K], f64)]) -> Vec<Node<K>> {
        let ids = self.cells[c];
        let xs = self.mesh.vertices();
        let ys = self.field.positions();
        rule.iter()
            .map(|&(bary, w)| {
                let mut x = Vec2::zeros();
                let mut z = Vec2::zeros();
                for k in 0..K {
                    x += xs[ids[k]] * bary[k];
                    z += ys[ids[k]] * bary[k];
                }
                Node {
                    bary,
                    x,
                    z,
                    w: w * self.mass[c],
                }
            })
            .collect()
    }

    fn vertex_adjacency(&self) -> Vec<Vec<usize>> {
        let mut incident = vec![Vec::new(); self.mesh.num_vertices()];
        for (c, ids) in self.cells.iter().enumerate() {
            for &v in ids {
                incident[v].push(c);
            }
        }
        self.cells
            .iter()
            .map(|ids| {
                let mut n: Vec<usize> = ids
                    .iter()
                    .flat_map(|&v| incident[v].iter().copied())
                    .collect();
                n.sort_unstable();
                n.dedup();
                n
            })
            .collect()
    }

    fn m(&self) -> usize {
        self.coarse_rule.len()
    }

    // Accumulates the interaction of node sets `a` (first slot) and `b`;
    // `skip_same` omits equal indices (a cell paired with itself).
    #[inline(always)]
    #[allow(clippy::too_many_arguments)]
    fn accumulate<const GRAD: bool>(
        &self,
        a: &[Node<K>],
        b: &[Node<K>],
        skip_same: bool,
        first_id: usize,
        second_id: usize,
        value: &mut f64,
        dz: &mut [Vec2],
    ) -> Result<(), EnergyError> {
        for (i, na) in a.iter().enumerate() {
            let mut acc = 0.0;
            let mut g = Vec2::zeros();
            for (j, nb) in b.iter().enumerate() {
                if skip_same && i == j {
                    continue;
                }
                let dzv = na.z - nb.z;
                let dz2 = dzv.norm_squared();
                if dz2 <= self.coincident_sq {
                    return Err(EnergyError::CoincidentImages {
                        first: first_id + i,
                        second: second_id + j,
                    });
                }
                let k = nb.w
                    * self.pow_q.of_sq((na.x - nb.x).norm_squared())
                    * self.pow_beta.of_sq(dz2);
                acc += k;
                if GRAD {
                    g -= dzv * (k / dz2);
                }
            }
            *value += na.w * acc;
            if GRAD {
                dz[i] += g * (self.beta * na.w);
            }
        }
        Ok(())
    }

    // Row `c`: Σ over partner cells of the pair sum, and the derivative of
    // that row with respect to the node images of `c` (pulled back to the
    // cell's vertices).
    fn row<const GRAD: bool>(&self, c: usize) -> Result<(f64, [Vec2; K]), EnergyError> {
        let m = self.m();
        let mine = &self.coarse[c * m..(c + 1) * m];
        let mut value = 0.0;
        let mut dz = vec![Vec2::zeros(); m];
        let near = self.near.as_ref().map(|n| n[c].as_slice()).unwrap_or(&[]);
        let mut cursor = 0;
        let ncells = self.cells.len();
        for other in 0..ncells {
            if self.near.is_some() {
                if cursor < near.len() && near[cursor] == other {
                    cursor += 1;
                    continue;
                }
            } else if other == c {
                continue;
            }
            let theirs = &self.coarse[other * m..(other + 1) * m];
            self.accumulate::<GRAD>(mine, theirs, false, c * m, other * m, &mut value, &mut dz)?;
        }
        let mut forces = [Vec2::zeros(); K];
        if GRAD {
            for (node, g) in mine.iter().zip(&dz) {
                for (f, b) in forces.iter_mut().zip(node.bary) {
                    *f += *g * b;
                }
            }
        }
        if !near.is_empty() {
            let fine_mine = self.nodes(c, &self.fine_rule);
            let mut fine_dz = vec![Vec2::zeros(); fine_mine.len()];
            let base = ncells * m;
            for &other in near {
                let theirs = if other == c {
                    fine_mine.clone()
                } else {
                    self.nodes(other, &self.fine_rule)
                };
                self.accumulate::<GRAD>(
                    &fine_mine,
                    &theirs,
                    other == c,
                    base + c * fine_mine.len(),
                    base + other * fine_mine.len(),
                    &mut value,
                    &mut fine_dz,
                )?;
            }
            if GRAD {
                for (node, g) in fine_mine.iter().zip(&fine_dz) {
                    for (f, b) in forces.iter_mut().zip(node.bary) {
                        *f += *g * b;
                    }
                }
            }
        }
        Ok((value, forces))
    }

    fn rows<const GRAD: bool>(&self) -> Result<Vec<(f64, [Vec2; K])>, EnergyError> {
        let rows: Vec<Result<(f64, [Vec2; K]), EnergyError>> = (0..self.cells.len())
            .into_par_iter()
            .map(|c| self.row::<GRAD>(c))
            .collect();
        rows.into_iter().collect()
    }
}

fn triangle_sum<'a>(
    mesh: &'a Mesh,
    field: &'a DeformationField,
    region: &Region,
    q: f64,
    beta: f64,
    quad: &QuadratureSpec,
) -> PairSum<'a, 3> {
    let cells: Vec<[usize; 3]> = region
        .element_ids()
        .iter()
        .map(|&t| mesh.triangles()[t])
        .collect();
    let mass = region
        .element_ids()
        .iter()
        .map(|&t| mesh.element_areas()[t] * field.element_state()[t].det)
        .collect();
    PairSum::new(
        mesh,
        field,
        cells,
        mass,
        triangle_rule(quad.scheme, 0),
        triangle_rule(quad.scheme, quad.depth()),
        quad.diagonal == DiagonalPolicy::SubdivideAdjacent,
        q,
        beta,
    )
}

fn edge_sum<'a>(
    mesh: &'a Mesh,
    field: &'a DeformationField,
    q: f64,
    beta: f64,
    quad: &QuadratureSpec,
) -> PairSum<'a, 2> {
    let cells = mesh.boundary_edges().to_vec();
    let mass = (0..cells.len()).map(|e| mesh.edge_length(e)).collect();
    PairSum::new(
        mesh,
        field,
        cells,
        mass,
        edge_rule(quad.scheme, 0),
        edge_rule(quad.scheme, quad.depth()),
        quad.diagonal == DiagonalPolicy::SubdivideAdjacent,
        q,
        beta,
    )
}

fn bulk_impl(
    mesh: &Mesh,
    field: &DeformationField,
    q: f64,
    s: f64,
    region: &Region,
    quad: &QuadratureSpec,
    with_gradient: bool,
) -> Result<Repulsion, EnergyError> {
    field.check_admissible()?;
    if region.is_empty() {
        return Err(EnergyError::EmptyRegion);
    }
    let beta = 2.0 + s * q;
    let sum = triangle_sum(mesh, field, region, q, beta, quad);
    if !with_gradient {
        let rows = sum.rows::<false>()?;
        let value = pairwise_sum(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
        return Ok(Repulsion {
            value,
            gradient: Vec::new(),
        });
    }
    let rows = sum.rows::<true>()?;
    let value = pairwise_sum(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let mut gradient = vec![Vec2::zeros(); mesh.num_vertices()];
    for (local, &t) in region.element_ids().iter().enumerate() {
        let (row_value, forces) = rows[local];
        let state = &field.element_state()[t];
        // Every term of the row carries det F_t exactly once.
        let det_forces = vertex_forces(mesh, t, &(cofactor(&state.f) * (row_value / state.det)));
        for (k, &v) in mesh.triangles()[t].iter().enumerate() {
            gradient[v] += (forces[k] + det_forces[k]) * 2.0;
        }
    }
    Ok(Repulsion { value, gradient })
}

/// Bulk repulsion restricted to `region × region`.
pub fn bulk_repulsion(
    mesh: &Mesh,
    field: &DeformationField,
    q: f64,
    s: f64,
    region: &Region,
    quad: &QuadratureSpec,
) -> Result<Repulsion, EnergyError> {
    bulk_impl(mesh, field, q, s, region, quad, true)
}

fn surface_impl(
    mesh: &Mesh,
    field: &DeformationField,
    q: f64,
    s: f64,
    quad: &QuadratureSpec,
    with_gradient: bool,
) -> Result<Repulsion, EnergyError> {
    field.check_admissible()?;
    let beta = 1.0 + s * q;
    let sum = edge_sum(mesh, field, q, beta, quad);
    if !with_gradient {
        let rows = sum.rows::<false>()?;
        let value = pairwise_sum(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
        return Ok(Repulsion {
            value,
            gradient: Vec::new(),
        });
    }
    let rows = sum.rows::<true>()?;
    let value = pairwise_sum(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let mut gradient = vec![Vec2::zeros(); mesh.num_vertices()];
    for (e, ids) in mesh.boundary_edges().iter().enumerate() {
        for k in 0..2 {
            gradient[ids[k]] += rows[e].1[k] * 2.0;
        }
    }
    Ok(Repulsion { value, gradient })
}

/// Surface repulsion over pairs of boundary edges.
pub fn surface_repulsion(
    mesh: &Mesh,
    field: &DeformationField,
    q: f64,
    s: f64,
    quad: &QuadratureSpec,
) -> Result<Repulsion, EnergyError> {
    surface_impl(mesh, field, q, s, quad, true)
}

/// The repulsion functional selected by a parameter set, with its
/// integration region resolved once.
#[derive(Debug, Clone)]
pub struct RepulsionModel {
    variant: Variant,
    q: f64,
    s: f64,
    quad: QuadratureSpec,
    region: Option<Region>,
}

impl RepulsionModel {
    pub fn new(
        params: &ModelParams,
        mesh: &Mesh,
        quad: QuadratureSpec,
    ) -> Result<Self, ConfigError> {
        let region = match params.variant {
            Variant::Bulk => Some(Region::full(mesh)),
            Variant::BoundaryLayer => {
                let delta = params.delta.ok_or(ConfigError::Missing("delta"))?;
                if delta <= 0.0 {
                    return Err(ConfigError::Range {
                        field: "delta",
                        value: delta,
                        expected: "delta > 0",
                    });
                }
                Some(delta_layer(mesh, delta))
            }
            Variant::Surface => None,
        };
        Ok(RepulsionModel {
            variant: params.variant,
            q: params.q,
            s: params.s,
            quad,
            region,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn region(&self) -> Option<&Region> {
        self.region.as_ref()
    }

    /// Number of ordered cell pairs in the double sum, diagonal included.
    pub fn pair_count(&self, mesh: &Mesh) -> usize {
        let cells = match &self.region {
            Some(r) => r.len(),
            None => mesh.boundary_edges().len(),
        };
        cells * cells
    }

    pub fn evaluate(
        &self,
        mesh: &Mesh,
        field: &DeformationField,
        with_gradient: bool,
    ) -> Result<Repulsion, EnergyError> {
        match &self.region {
            Some(region) => bulk_impl(
                mesh,
                field,
                self.q,
                self.s,
                region,
                &self.quad,
                with_gradient,
            ),
            None => surface_impl(mesh, field, self.q, self.s, &self.quad, with_gradient),
        }
    }
}

/// Evaluates the repulsion term selected by `params.variant`.
pub fn repulsion_dispatch(
    params: &ModelParams,
    mesh: &Mesh,
    field: &DeformationField,
    quad: &QuadratureSpec,
) -> Result<Repulsion, crate::Error> {
    let model = RepulsionModel::new(params, mesh, *quad)?;
    Ok(model.evaluate(mesh, field, true)?)
}

/// One row of a cost profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub variant: Variant,
    pub n: usize,
    pub h: f64,
    pub pairs: usize,
    pub median_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostProfile {
    pub rows: Vec<CostRow>,
    /// Least-squares slope of `log(median_seconds)` against `log(h)`.
    pub fitted_slope: f64,
    /// Same fit for the pair counts.
    pub pair_slope: f64,
}

/// Least-squares slope of `ys` against `xs` in log-log coordinates.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Times value-only evaluations on the identity of structured unit squares.
///
/// The boundary-layer variant uses `delta = 2h`, i.e. the cells touching the
/// boundary plus the next ring. Each timing is the median of `repeats`
/// samples; samples shorter than 20 ms are averaged over repeated calls.
pub fn cost_profile(
    sizes: &[usize],
    params: &ModelParams,
    quad: &QuadratureSpec,
    repeats: usize,
) -> Result<CostProfile, crate::Error> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mesh = build_structured_square(n)?;
        let h = 1.0 / n as f64;
        let mut local = *params;
        if params.variant == Variant::BoundaryLayer {
            local.delta = Some(2.0 * h);
        }
        let model = RepulsionModel::new(&local, &mesh, *quad)?;
        let field = DeformationField::identity(&mesh);
        // Warm-up, also calibrates the number of calls per sample.
        let start = Instant::now();
        model.evaluate(&mesh, &field, false)?;
        let single = start.elapsed().as_secs_f64().max(1e-9);
        let calls = ((0.02 / single).ceil() as usize).clamp(1, 10_000);
        let mut samples = Vec::with_capacity(repeats.max(1));
        for _ in 0..repeats.max(1) {
            let start = Instant::now();
            for _ in 0..calls {
                std::hint::black_box(model.evaluate(&mesh, &field, false)?);
            }
            samples.push(start.elapsed().as_secs_f64() / calls as f64);
        }
        samples.sort_by(f64::total_cmp);
        rows.push(CostRow {
            variant: params.variant,
            n,
            h,
            pairs: model.pair_count(&mesh),
            median_seconds: samples[samples.len() / 2],
        });
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let times: Vec<f64> = rows.iter().map(|r| r.median_seconds).collect();
    let pairs: Vec<f64> = rows.iter().map(|r| r.pairs as f64).collect();
    Ok(CostProfile {
        fitted_slope: log_log_slope(&hs, &times),
        pair_slope: log_log_slope(&hs, &pairs),
        rows,
    })
}
