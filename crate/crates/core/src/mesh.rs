//! Immutable reference triangulations.
//!
//! A [`Mesh`] is validated once at construction (orientation, index range,
//! closed boundary, area consistency) and never mutated afterwards, so it can
//! be shared freely between evaluation threads.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::MeshError;
use crate::geom::{orient, point_segment_distance, segments_cross_properly};
use crate::reduce::pairwise_sum;
use crate::{Mat2, Vec2};

/// Triangulated reference domain.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<[usize; 2]>,
    element_areas: Vec<f64>,
    min_angle: f64,
    // (x1 - x0, x2 - x0)^{-1} per element.
    ref_inverse: Vec<Mat2>,
    on_boundary: Vec<bool>,
    diameter: f64,
}

impl Mesh {
    /// Validates and assembles a mesh. When `boundary` is `None` it is derived
    /// from the edges owned by a single triangle and ordered into loops.
    pub fn new(
        vertices: Vec<Vec2>,
        triangles: Vec<[usize; 3]>,
        boundary: Option<Vec<[usize; 2]>>,
    ) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i >= nv {
                    return Err(MeshError::DanglingIndex {
                        field: "triangles",
                        entry: t,
                        index: i,
                        vertex_count: nv,
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::RepeatedVertex { triangle: t });
            }
        }
        let mut element_areas = Vec::with_capacity(triangles.len());
        let mut ref_inverse = Vec::with_capacity(triangles.len());
        let mut min_angle = f64::INFINITY;
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|i| vertices[i]);
            let twice = orient(a, b, c);
            if twice <= 0.0 || !twice.is_finite() {
                return Err(MeshError::Orientation {
                    triangle: t,
                    signed_area: 0.5 * twice,
                });
            }
            element_areas.push(0.5 * twice);
            let dm = Mat2::from_columns(&[b - a, c - a]);
            ref_inverse.push(dm.try_inverse().ok_or(MeshError::Orientation {
                triangle: t,
                signed_area: 0.5 * twice,
            })?);
            for k in 0..3 {
                let p = vertices[tri[k]];
                let u = vertices[tri[(k + 1) % 3]] - p;
                let w = vertices[tri[(k + 2) % 3]] - p;
                let cos = (u.dot(&w) / (u.norm() * w.norm())).clamp(-1.0, 1.0);
                min_angle = min_angle.min(cos.acos());
            }
        }

        let owned = single_owner_edges(&triangles);
        let boundary_edges = match boundary {
            None => order_loops(owned)?,
            Some(given) => {
                check_boundary(&given, &owned, nv)?;
                given
            }
        };

        let mut on_boundary = vec![false; nv];
        for e in &boundary_edges {
            on_boundary[e[0]] = true;
            on_boundary[e[1]] = true;
        }

        let total = pairwise_sum(&element_areas);
        let polygon = 0.5
            * pairwise_sum(
                &boundary_edges
                    .iter()
                    .map(|e| crate::geom::cross(vertices[e[0]], vertices[e[1]]))
                    .collect::<Vec<_>>(),
            );
        if (total - polygon).abs() > 1e-12 * total.abs().max(polygon.abs()) {
            return Err(MeshError::AreaMismatch {
                elements: total,
                polygon,
            });
        }

        let (lo, hi) = bounding_box(&vertices);
        let diameter = (hi - lo).norm();

        Ok(Mesh {
            vertices,
            triangles,
            boundary_edges,
            element_areas,
            min_angle,
            ref_inverse,
            on_boundary,
            diameter,
        })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Boundary edges, each oriented so the domain lies on its left.
    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn element_areas(&self) -> &[f64] {
        &self.element_areas
    }

    /// Smallest interior angle over all triangles (radians).
    pub fn min_angle(&self) -> f64 {
        self.min_angle
    }

    pub fn ref_inverse(&self, t: usize) -> &Mat2 {
        &self.ref_inverse[t]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Diagonal of the reference bounding box.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn area(&self) -> f64 {
        pairwise_sum(&self.element_areas)
    }

    pub fn centroid(&self, t: usize) -> Vec2 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        (a + b + c) / 3.0
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [i, j] = self.boundary_edges[e];
        (self.vertices[j] - self.vertices[i]).norm()
    }

    pub fn boundary_length(&self) -> f64 {
        pairwise_sum(
            &(0..self.boundary_edges.len())
                .map(|e| self.edge_length(e))
                .collect::<Vec<_>>(),
        )
    }

    /// Euclidean distance from `x` to the boundary polyline.
    pub fn distance_to_boundary(&self, x: Vec2) -> f64 {
        self.boundary_edges
            .iter()
            .map(|e| point_segment_distance(x, self.vertices[e[0]], self.vertices[e[1]]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Barycentric coordinates of `x` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, x: Vec2) -> [f64; 3] {
        let x0 = self.vertices[self.triangles[t][0]];
        let l = self.ref_inverse[t] * (x - x0);
        [1.0 - l.x - l.y, l.x, l.y]
    }

    /// Triangles sharing at least one vertex with `t`, `t` included, sorted.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut incident = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                incident[v].push(t);
            }
        }
        self.triangles
            .iter()
            .map(|tri| {
                let mut n: Vec<usize> = tri
                    .iter()
                    .flat_map(|&v| incident[v].iter().copied())
                    .collect();
                n.sort_unstable();
                n.dedup();
                n
            })
            .collect()
    }

    /// Builds a bin grid for repeated point location.
    pub fn locator(&self) -> Locator<'_> {
        Locator::new(self)
    }

    /// Star-shapedness with respect to `center`: every boundary vertex must
    /// be visible, i.e. the open segment to it crosses no boundary edge.
    pub fn check_star_shaped(&self, center: Vec2) -> Result<(), MeshError> {
        for v in 0..self.vertices.len() {
            if !self.on_boundary[v] {
                continue;
            }
            let target = self.vertices[v];
            for e in &self.boundary_edges {
                if e[0] == v || e[1] == v {
                    continue;
                }
                let (a, b) = (self.vertices[e[0]], self.vertices[e[1]]);
                let hidden = segments_cross_properly(center, target, a, b)
                    || (orient(center, target, a) == 0.0 && strictly_between(center, target, a))
                    || (orient(center, target, b) == 0.0 && strictly_between(center, target, b));
                if hidden {
                    return Err(MeshError::NotStarShaped { vertex: v });
                }
            }
        }
        Ok(())
    }

    pub fn to_file(&self, positions: Option<&[Vec2]>) -> MeshFile {
        MeshFile {
            vertices: self.vertices.iter().map(|v| [v.x, v.y]).collect(),
            triangles: self.triangles.clone(),
            boundary: Some(self.boundary_edges.clone()),
            positions: positions.map(|p| p.iter().map(|v| [v.x, v.y]).collect()),
        }
    }
}

fn strictly_between(a: Vec2, b: Vec2, p: Vec2) -> bool {
    let t = (p - a).dot(&(b - a)) / (b - a).norm_squared();
    t > 0.0 && t < 1.0
}

fn bounding_box(points: &[Vec2]) -> (Vec2, Vec2) {
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

// Directed edges whose undirected version occurs in exactly one triangle,
// in triangle order.
fn single_owner_edges(triangles: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut count: HashMap<(usize, usize), u32> = HashMap::new();
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let mut out = Vec::new();
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if count[&(a.min(b), a.max(b))] == 1 {
                out.push([a, b]);
            }
        }
    }
    out
}

// Chains directed edges into closed loops, starting each loop at its lowest
// unused edge index.
fn order_loops(edges: Vec<[usize; 2]>) -> Result<Vec<[usize; 2]>, MeshError> {
    let mut outgoing: HashMap<usize, Vec<usize>> = HashMap::new();
    for (k, e) in edges.iter().enumerate() {
        outgoing.entry(e[0]).or_default().push(k);
    }
    let mut used = vec![false; edges.len()];
    let mut ordered = Vec::with_capacity(edges.len());
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let origin = edges[start][0];
        let mut k = start;
        loop {
            used[k] = true;
            ordered.push(edges[k]);
            let head = edges[k][1];
            if head == origin {
                break;
            }
            let next = outgoing
                .get(&head)
                .and_then(|c| c.iter().copied().find(|&c| !used[c]))
                .ok_or(MeshError::OpenBoundary(head))?;
            k = next;
        }
    }
    Ok(ordered)
}

fn check_boundary(given: &[[usize; 2]], owned: &[[usize; 2]], nv: usize) -> Result<(), MeshError> {
    let mut direction: HashMap<(usize, usize), bool> = HashMap::new();
    for e in owned {
        direction.insert((e[0].min(e[1]), e[0].max(e[1])), e[0] < e[1]);
    }
    let mut balance: HashMap<usize, i64> = HashMap::new();
    for (k, e) in given.iter().enumerate() {
        for &i in e {
            if i >= nv {
                return Err(MeshError::DanglingIndex {
                    field: "boundary",
                    entry: k,
                    index: i,
                    vertex_count: nv,
                });
            }
        }
        let key = (e[0].min(e[1]), e[0].max(e[1]));
        match direction.get(&key) {
            None => return Err(MeshError::BoundaryEdgeOwnership(e[0], e[1])),
            Some(&forward) if forward != (e[0] < e[1]) => {
                return Err(MeshError::BoundaryEdgeDirection(e[0], e[1]))
            }
            _ => {}
        }
        *balance.entry(e[0]).or_default() += 1;
        *balance.entry(e[1]).or_default() -= 1;
    }
    if given.len() != owned.len() {
        return Err(MeshError::BoundaryMismatch {
            given: given.len(),
            expected: owned.len(),
        });
    }
    let mut open: Vec<usize> = balance
        .into_iter()
        .filter(|&(_, b)| b != 0)
        .map(|(v, _)| v)
        .collect();
    open.sort_unstable();
    if let Some(&v) = open.first() {
        return Err(MeshError::OpenBoundary(v));
    }
    Ok(())
}

/// Diagonal orientation of structured rectangle meshes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagonalPattern {
    /// Every cell split along its (lower-left, upper-right) diagonal.
    Uniform,
    /// Cells left of `x = 0` use the opposite diagonal, so the mesh is
    /// symmetric under `x ↦ -x`.
    MirroredAtZero,
}

/// Structured triangulation of `[x0,x1]×[y0,y1]` with `nx × ny` cells.
pub fn structured_rectangle(
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    nx: usize,
    ny: usize,
    pattern: DiagonalPattern,
) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::ZeroSubdivisions(nx.min(ny)));
    }
    let (vertices, triangles) = grid_cells(x0, x1, y0, y1, nx, ny, pattern, |_, _| true);
    Mesh::new(vertices, triangles, None)
}

#[allow(clippy::too_many_arguments)]
fn grid_cells(
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    nx: usize,
    ny: usize,
    pattern: DiagonalPattern,
    keep: impl Fn(usize, usize) -> bool,
) -> (Vec<Vec2>, Vec<[usize; 3]>) {
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = x0 + (x1 - x0) * i as f64 / nx as f64;
            let y = y0 + (y1 - y0) * j as f64 / ny as f64;
            vertices.push(Vec2::new(x, y));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            if !keep(i, j) {
                continue;
            }
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            let mirrored = pattern == DiagonalPattern::MirroredAtZero && vertices[b].x <= 0.0;
            if mirrored {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            } else {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
    }
    // Drop vertices no kept cell uses; survivors keep grid order.
    let mut used = vec![false; vertices.len()];
    for tri in &triangles {
        for &v in tri {
            used[v] = true;
        }
    }
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut kept = Vec::with_capacity(vertices.len());
    for (v, p) in vertices.iter().enumerate() {
        if used[v] {
            remap[v] = kept.len();
            kept.push(*p);
        }
    }
    for tri in &mut triangles {
        for v in tri.iter_mut() {
            *v = remap[*v];
        }
    }
    (kept, triangles)
}

/// The unit square split into `2n²` right triangles.
pub fn build_structured_square(n: usize) -> Result<Mesh, MeshError> {
    structured_rectangle((0.0, 1.0), (0.0, 1.0), n, n, DiagonalPattern::Uniform)
}

/// The half annulus `{r_in < |x| < r_out, x₂ > 0}` meshed on a polar grid
/// with `n_radial × n_angular` cells and straight edges.
pub fn half_annulus(
    n_radial: usize,
    n_angular: usize,
    r_in: f64,
    r_out: f64,
) -> Result<Mesh, MeshError> {
    if n_radial == 0 || n_angular == 0 {
        return Err(MeshError::ZeroSubdivisions(n_radial.min(n_angular)));
    }
    let mut vertices = Vec::new();
    for k in 0..=n_angular {
        let theta = std::f64::consts::PI * k as f64 / n_angular as f64;
        for i in 0..=n_radial {
            let rho = r_in + (r_out - r_in) * i as f64 / n_radial as f64;
            vertices.push(Vec2::new(rho * theta.cos(), rho * theta.sin()));
        }
    }
    // theta = pi must land exactly on the negative axis.
    for i in 0..=n_radial {
        let rho = r_in + (r_out - r_in) * i as f64 / n_radial as f64;
        vertices[n_angular * (n_radial + 1) + i] = Vec2::new(-rho, 0.0);
    }
    let id = |i: usize, k: usize| k * (n_radial + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n_radial * n_angular);
    for k in 0..n_angular {
        for i in 0..n_radial {
            let (a, b, c, d) = (id(i, k), id(i + 1, k), id(i + 1, k + 1), id(i, k + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh::new(vertices, triangles, None)
}

/// Unit square with a rectangular slot cut from the top edge, leaving two
/// arms joined by a base. The slot spans cell columns `[n/2 - w, n/2 + w)`
/// and rows `[base, n)` where `w = max(1, n/8)` and `base = n/4`.
pub fn slotted_square(n: usize) -> Result<Mesh, MeshError> {
    if n < 4 {
        return Err(MeshError::ZeroSubdivisions(n));
    }
    let w = (n / 8).max(1);
    let (lo, hi) = (n / 2 - w, n / 2 + w);
    let base = n / 4;
    let (vertices, triangles) = grid_cells(
        0.0,
        1.0,
        0.0,
        1.0,
        n,
        n,
        DiagonalPattern::Uniform,
        |i, j| !(j >= base && i >= lo && i < hi),
    );
    Mesh::new(vertices, triangles, None)
}

/// On-disk mesh schema (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshFile {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Vec<[usize; 2]>>,
    /// Deformed positions, one per vertex, for restarting from a saved field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
}

impl MeshFile {
    pub fn parse(text: &str) -> Result<Self, MeshError> {
        serde_json::from_str(text).map_err(|e| MeshError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn into_mesh(self) -> Result<(Mesh, Option<Vec<Vec2>>), MeshError> {
        let vertices: Vec<Vec2> = self
            .vertices
            .iter()
            .map(|p| Vec2::new(p[0], p[1]))
            .collect();
        let positions = match self.positions {
            None => None,
            Some(p) if p.len() != vertices.len() => {
                return Err(MeshError::PositionCount {
                    given: p.len(),
                    expected: vertices.len(),
                })
            }
            Some(p) => Some(p.iter().map(|q| Vec2::new(q[0], q[1])).collect()),
        };
        let mesh = Mesh::new(vertices, self.triangles, self.boundary)?;
        Ok((mesh, positions))
    }
}

/// Reads and validates a mesh file.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    load_mesh_with_positions(path).map(|(m, _)| m)
}

/// Like [`load_mesh`], also returning the optional `positions` block.
pub fn load_mesh_with_positions(
    path: impl AsRef<Path>,
) -> Result<(Mesh, Option<Vec<Vec2>>), MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| MeshError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    MeshFile::parse(&text)?.into_mesh()
}

/// Which part of the domain a [`Region`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    FullDomain,
    DeltaLayer,
    Custom,
}

/// A set of triangles, stored sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    element_ids: Vec<usize>,
    kind: RegionKind,
}

impl Region {
    pub fn full(mesh: &Mesh) -> Self {
        Region {
            element_ids: (0..mesh.num_triangles()).collect(),
            kind: RegionKind::FullDomain,
        }
    }

    /// Arbitrary subset; ids are sorted, deduplicated and range checked.
    pub fn custom(mesh: &Mesh, mut ids: Vec<usize>) -> Result<Self, MeshError> {
        ids.sort_unstable();
        ids.dedup();
        if let Some(&bad) = ids.iter().find(|&&t| t >= mesh.num_triangles()) {
            return Err(MeshError::DanglingIndex {
                field: "region",
                entry: bad,
                index: bad,
                vertex_count: mesh.num_triangles(),
            });
        }
        Ok(Region {
            element_ids: ids,
            kind: RegionKind::Custom,
        })
    }

    pub fn element_ids(&self) -> &[usize] {
        &self.element_ids
    }

    pub fn kind(&self) -> RegionKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.element_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.element_ids.is_empty()
    }

    pub fn contains(&self, t: usize) -> bool {
        self.element_ids.binary_search(&t).is_ok()
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.element_ids.iter().all(|&t| other.contains(t))
    }
}

/// Boundary layer of thickness `delta`: every triangle whose centroid is
/// closer than `delta` to the boundary, plus every triangle with a vertex on
/// the boundary. The union always contains a neighborhood
/// `{x : dist(x, ∂Ω) < δ'}` for some `δ' > 0`.
///
/// # Panics
///
/// Panics if `delta` is not positive.
pub fn delta_layer(mesh: &Mesh, delta: f64) -> Region {
    assert!(delta > 0.0, "layer thickness must be positive, got {delta}");
    let element_ids = (0..mesh.num_triangles())
        .filter(|&t| {
            mesh.triangles[t].iter().any(|&v| mesh.on_boundary[v])
                || mesh.distance_to_boundary(mesh.centroid(t)) < delta
        })
        .collect();
    Region {
        element_ids,
        kind: RegionKind::DeltaLayer,
    }
}

/// A located point: containing triangle and barycentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub triangle: usize,
    pub bary: [f64; 3],
}

const LOCATE_TOL: f64 = 1e-12;

/// Finds a triangle containing `x` by scanning every element.
pub fn point_locate(mesh: &Mesh, x: Vec2) -> Result<Location, MeshError> {
    locate_among(mesh, x, 0..mesh.num_triangles())
        .or_else(|| locate_nearby(mesh, x, 0..mesh.num_triangles()))
        .ok_or_else(|| outside(mesh, x))
}

fn locate_among(
    mesh: &Mesh,
    x: Vec2,
    candidates: impl IntoIterator<Item = usize>,
) -> Option<Location> {
    candidates.into_iter().find_map(|t| {
        let b = mesh.barycentric(t, x);
        (b[0].min(b[1]).min(b[2]) >= 0.0).then_some(Location {
            triangle: t,
            bary: b,
        })
    })
}

// Accepts points within LOCATE_TOL of some triangle, projecting the
// barycentric coordinates onto the simplex.
fn locate_nearby(
    mesh: &Mesh,
    x: Vec2,
    candidates: impl IntoIterator<Item = usize>,
) -> Option<Location> {
    let scale = 1.0 + x.norm();
    candidates
        .into_iter()
        .map(|t| (triangle_distance(mesh, t, x), t))
        .filter(|&(d, _)| d <= LOCATE_TOL * scale)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, t)| {
            let mut b = mesh.barycentric(t, x).map(|l| l.max(0.0));
            let s = b[0] + b[1] + b[2];
            for l in &mut b {
                *l /= s;
            }
            Location {
                triangle: t,
                bary: b,
            }
        })
}

fn triangle_distance(mesh: &Mesh, t: usize, x: Vec2) -> f64 {
    let b = mesh.barycentric(t, x);
    if b.iter().all(|&l| l >= 0.0) {
        return 0.0;
    }
    let [p, q, r] = mesh.triangles[t].map(|i| mesh.vertices[i]);
    point_segment_distance(x, p, q)
        .min(point_segment_distance(x, q, r))
        .min(point_segment_distance(x, r, p))
}

fn outside(mesh: &Mesh, x: Vec2) -> MeshError {
    let distance = (0..mesh.num_triangles())
        .map(|t| triangle_distance(mesh, t, x))
        .fold(f64::INFINITY, f64::min);
    MeshError::OutsideDomain {
        x: x.x,
        y: x.y,
        distance,
    }
}

/// Uniform bin grid over the reference bounding box for repeated queries.
#[derive(Debug)]
pub struct Locator<'m> {
    mesh: &'m Mesh,
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<usize>>,
}

impl<'m> Locator<'m> {
    fn new(mesh: &'m Mesh) -> Self {
        let (lo, hi) = bounding_box(&mesh.vertices);
        let extent = hi - lo;
        let per_axis = (mesh.num_triangles() as f64).sqrt().ceil().max(1.0);
        let cell = (extent.x.max(extent.y) / per_axis).max(f64::MIN_POSITIVE);
        let nx = ((extent.x / cell).ceil() as usize).max(1);
        let ny = ((extent.y / cell).ceil() as usize).max(1);
        let mut bins = vec![Vec::new(); nx * ny];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let pts = tri.map(|i| mesh.vertices[i]);
            let tlo = pts[0].inf(&pts[1]).inf(&pts[2]);
            let thi = pts[0].sup(&pts[1]).sup(&pts[2]);
            let (i0, j0) = bin_of(lo, cell, nx, ny, tlo);
            let (i1, j1) = bin_of(lo, cell, nx, ny, thi);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[j * nx + i].push(t);
                }
            }
        }
        Locator {
            mesh,
            origin: lo,
            cell,
            nx,
            ny,
            bins,
        }
    }

    pub fn locate(&self, x: Vec2) -> Result<Location, MeshError> {
        let rel = (x - self.origin) / self.cell;
        if rel.x >= -1.0
            && rel.y >= -1.0
            && rel.x <= self.nx as f64 + 1.0
            && rel.y <= self.ny as f64 + 1.0
        {
            let (i, j) = bin_of(self.origin, self.cell, self.nx, self.ny, x);
            let bin = &self.bins[j * self.nx + i];
            if let Some(loc) = locate_among(self.mesh, x, bin.iter().copied())
                .or_else(|| locate_nearby(self.mesh, x, bin.iter().copied()))
            {
                return Ok(loc);
            }
        }
        point_locate(self.mesh, x)
    }
}

fn bin_of(origin: Vec2, cell: f64, nx: usize, ny: usize, x: Vec2) -> (usize, usize) {
    let rel = (x - origin) / cell;
    let i = (rel.x.floor().max(0.0) as usize).min(nx - 1);
    let j = (rel.y.floor().max(0.0) as usize).min(ny - 1);
    (i, j)
}
