//! Injectivity defect meter.
//!
//! Compares `∫_Ω |det ∇y|` (exact for P1 fields) with the measure of the
//! image `|y(Ω)|`, obtained by rasterizing the deformed triangles onto a
//! uniform grid. By the area formula the first never falls below the second;
//! the gap is the measure of the multiply covered part of the image, counted
//! with multiplicity. Per-cell covering counts give a discrete version of the
//! preimage-counting function.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::elastic::DeformationField;
use crate::error::CncError;
use crate::geom::{orient, segments_intersect, triangle_intersection_area};
use crate::mesh::Mesh;
use crate::reduce::pairwise_sum;
use crate::Vec2;

/// `Σ_T area(T) |det F_T|`; admissibility is not required.
pub fn det_integral(mesh: &Mesh, field: &DeformationField) -> f64 {
    let parts: Vec<f64> = field
        .element_state()
        .iter()
        .zip(mesh.element_areas())
        .map(|(s, a)| a * s.det.abs())
        .collect();
    pairwise_sum(&parts)
}

/// Covering counts of the deformed mesh on a `resolution²` grid spanning the
/// bounding box of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub resolution: usize,
    pub origin: Vec2,
    /// Cell width and height.
    pub cell: Vec2,
    /// Row-major counts, row 0 at the bottom.
    pub counts: Vec<u32>,
}

impl Raster {
    pub fn cell_area(&self) -> f64 {
        self.cell.x * self.cell.y
    }

    pub fn covered_cells(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Area of cells whose center lies in at least one deformed triangle.
    pub fn area(&self) -> f64 {
        self.covered_cells() as f64 * self.cell_area()
    }

    pub fn max_multiplicity(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Binary greyscale image (PGM, maxval = max multiplicity), top row first.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let max = self.max_multiplicity().clamp(1, 65535);
        let mut out = Vec::with_capacity(self.counts.len() * 2 + 32);
        write!(
            out,
            "P5\n{} {}\n{}\n",
            self.resolution, self.resolution, max
        )?;
        for j in (0..self.resolution).rev() {
            for i in 0..self.resolution {
                let c = self.counts[j * self.resolution + i].min(max);
                if max < 256 {
                    out.push(c as u8);
                } else {
                    out.extend_from_slice(&(c as u16).to_be_bytes());
                }
            }
        }
        std::fs::write(path, out)
    }
}

// Half-open edge test: a point on an edge belongs to the triangle only if the
// edge is a top or left edge, so shared edges are counted exactly once.
#[inline]
fn inside_top_left(a: Vec2, b: Vec2, c: Vec2, x: Vec2) -> bool {
    let edge_ok = |p: Vec2, q: Vec2| {
        // Evaluated in a fixed vertex order so both owners of a shared edge
        // see exactly opposite signs.
        let w = if (p.x, p.y) < (q.x, q.y) {
            orient(p, q, x)
        } else {
            -orient(q, p, x)
        };
        if w != 0.0 {
            return w > 0.0;
        }
        let e = q - p;
        e.y < 0.0 || (e.y == 0.0 && e.x < 0.0)
    };
    edge_ok(a, b) && edge_ok(b, c) && edge_ok(c, a)
}

fn deformed_ccw(mesh: &Mesh, field: &DeformationField, t: usize) -> Option<[Vec2; 3]> {
    let [a, b, c] = mesh.triangles()[t].map(|i| field.positions()[i]);
    let o = orient(a, b, c);
    if o > 0.0 {
        Some([a, b, c])
    } else if o < 0.0 {
        Some([a, c, b])
    } else {
        None
    }
}

/// Rasterizes every deformed triangle by cell-center sampling.
pub fn image_area(
    mesh: &Mesh,
    field: &DeformationField,
    resolution: usize,
) -> Result<Raster, CncError> {
    if resolution < 64 {
        return Err(CncError::Resolution(resolution));
    }
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    for p in field.positions() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = hi - lo;
    if !(extent.x > 0.0 && extent.y > 0.0) {
        return Err(CncError::DegenerateImage {
            width: extent.x,
            height: extent.y,
        });
    }
    let cell = extent / resolution as f64;
    let res = resolution as isize;

    let tris: Vec<Option<[Vec2; 3]>> = (0..mesh.num_triangles())
        .map(|t| deformed_ccw(mesh, field, t))
        .collect();
    // Row buckets: triangle ids whose vertical extent reaches a row center.
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); resolution];
    for (t, tri) in tris.iter().enumerate() {
        let Some(tri) = tri else { continue };
        let ymin = tri.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let ymax = tri.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let j0 = (((ymin - lo.y) / cell.y - 0.5).ceil() as isize).max(0);
        let j1 = (((ymax - lo.y) / cell.y - 0.5).floor() as isize).min(res - 1);
        for j in j0..=j1 {
            rows[j as usize].push(t as u32);
        }
    }

    let counts: Vec<u32> = rows
        .par_iter()
        .enumerate()
        .flat_map_iter(|(j, bucket)| {
            let mut line = vec![0u32; resolution];
            let yc = lo.y + (j as f64 + 0.5) * cell.y;
            for &t in bucket {
                let [a, b, c] = tris[t as usize].expect("bucketed triangles are nondegenerate");
                let xmin = a.x.min(b.x).min(c.x);
                let xmax = a.x.max(b.x).max(c.x);
                let i0 = (((xmin - lo.x) / cell.x - 0.5).ceil() as isize).max(0);
                let i1 = (((xmax - lo.x) / cell.x - 0.5).floor() as isize).min(res - 1);
                for i in i0..=i1 {
                    let x = Vec2::new(lo.x + (i as f64 + 0.5) * cell.x, yc);
                    if inside_top_left(a, b, c, x) {
                        line[i as usize] += 1;
                    }
                }
            }
            line
        })
        .collect();

    Ok(Raster {
        resolution,
        origin: lo,
        cell,
        counts,
    })
}

/// Length of the deformed boundary polyline.
pub fn deformed_perimeter(mesh: &Mesh, field: &DeformationField) -> f64 {
    let ys = field.positions();
    pairwise_sum(
        &mesh
            .boundary_edges()
            .iter()
            .map(|e| (ys[e[1]] - ys[e[0]]).norm())
            .collect::<Vec<_>>(),
    )
}

/// First pair of deformed boundary edges (in index order) that meet although
/// they are not consecutive, or consecutive edges that fold back onto each
/// other. `None` means the boundary trace is injective.
pub fn boundary_witness(mesh: &Mesh, field: &DeformationField) -> Option<(usize, usize)> {
    let edges = mesh.boundary_edges();
    let ys = field.positions();
    for (e, &[a0, a1]) in edges.iter().enumerate() {
        for (f, &[b0, b1]) in edges.iter().enumerate().skip(e + 1) {
            let (p1, p2, q1, q2) = (ys[a0], ys[a1], ys[b0], ys[b1]);
            let shared = [a0, a1].iter().find(|v| **v == b0 || **v == b1).copied();
            let hit = match shared {
                None => segments_intersect(p1, p2, q1, q2),
                Some(v) => {
                    // Consecutive edges only conflict when they overlap
                    // beyond the shared vertex.
                    let (pa, pb) = if a0 == v { (p1, p2) } else { (p2, p1) };
                    let (qa, qb) = if b0 == v { (q1, q2) } else { (q2, q1) };
                    let folds = |s: Vec2, far: Vec2, other: Vec2| {
                        orient(s, far, other) == 0.0 && (other - s).dot(&(far - s)) > 0.0
                    };
                    folds(pa, pb, qb) || folds(qa, qb, pb)
                }
            };
            if hit {
                return Some((e, f));
            }
        }
    }
    None
}

/// Non-adjacent triangle pairs whose deformed images overlap with positive
/// area. Candidates come from a uniform bin grid with bin size equal to the
/// longest deformed edge.
pub fn overlap_pairs(mesh: &Mesh, field: &DeformationField) -> Vec<(usize, usize)> {
    let nt = mesh.num_triangles();
    let tris: Vec<Option<[Vec2; 3]>> = (0..nt).map(|t| deformed_ccw(mesh, field, t)).collect();
    let mut longest: f64 = 0.0;
    let mut lo = Vec2::repeat(f64::INFINITY);
    for tri in tris.iter().flatten() {
        for k in 0..3 {
            longest = longest.max((tri[(k + 1) % 3] - tri[k]).norm());
            lo = lo.inf(&tri[k]);
        }
    }
    if longest == 0.0 {
        return Vec::new();
    }
    let key = |p: Vec2| {
        let r = (p - lo) / longest;
        (r.x.floor() as i64, r.y.floor() as i64)
    };
    let mut bins: std::collections::BTreeMap<(i64, i64), Vec<usize>> = Default::default();
    for (t, tri) in tris.iter().enumerate() {
        let Some(tri) = tri else { continue };
        let tlo = tri[0].inf(&tri[1]).inf(&tri[2]);
        let thi = tri[0].sup(&tri[1]).sup(&tri[2]);
        let (i0, j0) = key(tlo);
        let (i1, j1) = key(thi);
        for i in i0..=i1 {
            for j in j0..=j1 {
                bins.entry((i, j)).or_default().push(t);
            }
        }
    }
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for members in bins.values() {
        for (k, &a) in members.iter().enumerate() {
            for &b in &members[k + 1..] {
                candidates.push((a.min(b), a.max(b)));
            }
        }
    }
    candidates.sort_unstable();
    candidates.dedup();
    let areas: Vec<f64> = tris
        .iter()
        .map(|t| t.map_or(0.0, |t| 0.5 * orient(t[0], t[1], t[2])))
        .collect();
    candidates
        .into_par_iter()
        .filter(|&(a, b)| {
            let ta = mesh.triangles()[a];
            if mesh.triangles()[b].iter().any(|v| ta.contains(v)) {
                return false;
            }
            let overlap = triangle_intersection_area(tris[a].unwrap(), tris[b].unwrap());
            overlap > 1e-10 * areas[a].min(areas[b])
        })
        .collect()
}

/// Everything the defect meter reports for one field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CncReport {
    pub det_integral: f64,
    pub image_area: f64,
    /// `det_integral - image_area`.
    pub defect: f64,
    pub max_multiplicity: u32,
    pub overlap_pairs: Vec<(usize, usize)>,
    pub boundary_injective: bool,
    /// Boundary edge pair witnessing a self-intersection of the trace.
    pub boundary_witness: Option<(usize, usize)>,
    pub raster_resolution: usize,
    /// `2 · perimeter(y(Ω)) · cell size`: the raster error allowance.
    pub raster_tolerance: f64,
}

impl CncReport {
    /// The defect is within raster error of zero.
    pub fn defect_negligible(&self) -> bool {
        self.defect.abs() <= self.raster_tolerance
    }
}

/// Assembles the full defect report.
pub fn cnc_defect(
    mesh: &Mesh,
    field: &DeformationField,
    resolution: usize,
) -> Result<CncReport, CncError> {
    cnc_defect_with_raster(mesh, field, resolution).map(|(r, _)| r)
}

/// [`cnc_defect`] also returning the multiplicity grid.
pub fn cnc_defect_with_raster(
    mesh: &Mesh,
    field: &DeformationField,
    resolution: usize,
) -> Result<(CncReport, Raster), CncError> {
    let raster = image_area(mesh, field, resolution)?;
    let det_integral = det_integral(mesh, field);
    let image_area = raster.area();
    let witness = boundary_witness(mesh, field);
    let report = CncReport {
        det_integral,
        image_area,
        defect: det_integral - image_area,
        max_multiplicity: raster.max_multiplicity(),
        overlap_pairs: overlap_pairs(mesh, field),
        boundary_injective: witness.is_none(),
        boundary_witness: witness,
        raster_resolution: resolution,
        raster_tolerance: 2.0 * deformed_perimeter(mesh, field) * raster.cell.x.max(raster.cell.y),
    };
    Ok((report, raster))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_square;

    #[test]
    fn identity_covers_every_cell_once() {
        let m = build_structured_square(8).unwrap();
        let f = DeformationField::identity(&m);
        let r = image_area(&m, &f, 128).unwrap();
        assert_eq!(r.covered_cells(), 128 * 128);
        assert_eq!(r.max_multiplicity(), 1);
        assert!((r.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_edges_are_counted_once() {
        // Irregular interior vertices; the image is still the unit square.
        let m = build_structured_square(7).unwrap();
        let f = DeformationField::from_map(&m, |x| {
            let w = x.x * (1.0 - x.x) * x.y * (1.0 - x.y);
            x + Vec2::new((13.0 * x.y).sin(), (17.0 * x.x).cos()) * (0.3 * w)
        });
        assert!(f.is_admissible());
        let r = image_area(&m, &f, 509).unwrap();
        assert_eq!(r.max_multiplicity(), 1);
        assert_eq!(r.covered_cells(), 509 * 509);
    }

    #[test]
    fn low_resolution_rejected() {
        let m = build_structured_square(2).unwrap();
        let f = DeformationField::identity(&m);
        assert_eq!(
            image_area(&m, &f, 32).unwrap_err(),
            CncError::Resolution(32)
        );
    }

    #[test]
    fn collapsed_image_is_degenerate() {
        let m = build_structured_square(2).unwrap();
        let f = DeformationField::from_map(&m, |x| Vec2::new(x.x, 0.0));
        assert!(matches!(
            image_area(&m, &f, 64),
            Err(CncError::DegenerateImage { .. })
        ));
    }

    #[test]
    fn scaled_det_integral() {
        let m = build_structured_square(3).unwrap();
        let f = DeformationField::from_map(&m, |x| 2.0 * x);
        assert!((det_integral(&m, &f) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn identity_report_is_clean() {
        let m = build_structured_square(6).unwrap();
        let rep = cnc_defect(&m, &DeformationField::identity(&m), 256).unwrap();
        assert!(rep.boundary_injective);
        assert!(rep.overlap_pairs.is_empty());
        assert!(rep.defect_negligible());
    }

    #[test]
    fn pgm_header() {
        let m = build_structured_square(2).unwrap();
        let r = image_area(&m, &DeformationField::identity(&m), 64).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        r.write_pgm(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n64 64\n1\n"));
        assert_eq!(bytes.len(), "P5\n64 64\n1\n".len() + 64 * 64);
    }
}
