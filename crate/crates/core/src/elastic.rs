//! P1 deformation fields and the stored energy `∫|∇y|^p + ∫(det ∇y)^{-r}`.
//!
//! On piecewise-affine fields both integrands are constant per element, so
//! the energy is a finite sum and evaluated without quadrature error.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{EnergyError, MeshError};
use crate::mesh::Mesh;
use crate::params::ModelParams;
use crate::reduce::pairwise_sum;
use crate::{Mat2, Vec2};

/// Per-element cache of the deformation gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementState {
    pub f: Mat2,
    pub det: f64,
    /// Squared Frobenius norm `|F|²`.
    pub frob2: f64,
}

impl ElementState {
    fn from_gradient(f: Mat2) -> Self {
        ElementState {
            f,
            det: f.determinant(),
            frob2: f.norm_squared(),
        }
    }
}

/// Computes the constant gradient of the affine map on every element.
pub fn element_gradients(mesh: &Mesh, positions: &[Vec2]) -> Vec<ElementState> {
    (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let [a, b, c] = mesh.triangles()[t].map(|i| positions[i]);
            let ds = Mat2::from_columns(&[b - a, c - a]);
            ElementState::from_gradient(ds * mesh.ref_inverse(t))
        })
        .collect()
}

/// Deformed vertex positions with derived element state.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    positions: Vec<Vec2>,
    state: Vec<ElementState>,
}

impl DeformationField {
    pub fn new(mesh: &Mesh, positions: Vec<Vec2>) -> Result<Self, MeshError> {
        if positions.len() != mesh.num_vertices() {
            return Err(MeshError::PositionCount {
                given: positions.len(),
                expected: mesh.num_vertices(),
            });
        }
        let state = element_gradients(mesh, &positions);
        Ok(DeformationField { positions, state })
    }

    pub fn identity(mesh: &Mesh) -> Self {
        Self::from_map(mesh, |x| x)
    }

    /// Nodal interpolant of `map`.
    pub fn from_map(mesh: &Mesh, map: impl Fn(Vec2) -> Vec2) -> Self {
        let positions = mesh.vertices().iter().map(|&x| map(x)).collect();
        Self::new(mesh, positions).expect("one position per vertex")
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn into_positions(self) -> Vec<Vec2> {
        self.positions
    }

    pub fn element_state(&self) -> &[ElementState] {
        &self.state
    }

    /// Element with the smallest determinant and that determinant.
    pub fn min_det(&self) -> (usize, f64) {
        self.state.iter().enumerate().map(|(t, s)| (t, s.det)).fold(
            (0, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
    }

    pub fn is_admissible(&self) -> bool {
        self.state.iter().all(|s| s.det > 0.0)
    }

    pub fn check_admissible(&self) -> Result<(), EnergyError> {
        let (element, det) = self.min_det();
        if det > 0.0 {
            Ok(())
        } else {
            Err(EnergyError::Inadmissible { element, det })
        }
    }

    /// Image of a reference point given by barycentric weights on `t`.
    pub fn eval(&self, mesh: &Mesh, t: usize, bary: [f64; 3]) -> Vec2 {
        let [a, b, c] = mesh.triangles()[t].map(|i| self.positions[i]);
        a * bary[0] + b * bary[1] + c * bary[2]
    }
}

/// Cofactor matrix, `∂ det F / ∂F`.
#[inline]
pub(crate) fn cofactor(f: &Mat2) -> Mat2 {
    Mat2::new(f[(1, 1)], -f[(1, 0)], -f[(0, 1)], f[(0, 0)])
}

/// Pulls a derivative with respect to `F` back to the element's three vertices.
#[inline]
pub(crate) fn vertex_forces(mesh: &Mesh, t: usize, df: &Mat2) -> [Vec2; 3] {
    let g = df * mesh.ref_inverse(t).transpose();
    let g1 = g.column(0).into_owned();
    let g2 = g.column(1).into_owned();
    [-(g1 + g2), g1, g2]
}

/// Value and gradient of the stored energy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElasticEnergy {
    /// `∫|∇y|^p`.
    pub grad_term: f64,
    /// `∫(det ∇y)^{-r}`.
    pub det_term: f64,
    pub value: f64,
    #[serde(skip)]
    pub gradient: Vec<Vec2>,
}

/// Stored energy and its exact derivative with respect to vertex positions.
///
/// Returns [`EnergyError::Inadmissible`] naming the element with the smallest
/// determinant when any element has `det F ≤ 0`.
pub fn elastic_energy(
    mesh: &Mesh,
    field: &DeformationField,
    p: f64,
    r: f64,
) -> Result<ElasticEnergy, EnergyError> {
    evaluate(mesh, field, p, r, true)
}

/// Like [`elastic_energy`] without assembling the gradient.
pub fn elastic_value(
    mesh: &Mesh,
    field: &DeformationField,
    p: f64,
    r: f64,
) -> Result<ElasticEnergy, EnergyError> {
    evaluate(mesh, field, p, r, false)
}

fn evaluate(
    mesh: &Mesh,
    field: &DeformationField,
    p: f64,
    r: f64,
    with_gradient: bool,
) -> Result<ElasticEnergy, EnergyError> {
    field.check_admissible()?;
    let areas = mesh.element_areas();
    let per_element: Vec<(f64, f64, [Vec2; 3])> = field
        .state
        .par_iter()
        .enumerate()
        .map(|(t, s)| {
            let area = areas[t];
            let norm_p = s.frob2.powf(0.5 * p);
            let det_r = s.det.powf(-r);
            let forces = if with_gradient {
                // d|F|^p = p|F|^{p-2} F, d det^{-r} = -r det^{-r-1} cof F.
                let df =
                    s.f * (p * s.frob2.powf(0.5 * p - 1.0)) - cofactor(&s.f) * (r * det_r / s.det);
                vertex_forces(mesh, t, &(df * area))
            } else {
                [Vec2::zeros(); 3]
            };
            (area * norm_p, area * det_r, forces)
        })
        .collect();
    let grad_term = pairwise_sum(&per_element.iter().map(|e| e.0).collect::<Vec<_>>());
    let det_term = pairwise_sum(&per_element.iter().map(|e| e.1).collect::<Vec<_>>());
    let mut gradient = Vec::new();
    if with_gradient {
        gradient = vec![Vec2::zeros(); mesh.num_vertices()];
        for (t, e) in per_element.iter().enumerate() {
            for (k, &v) in mesh.triangles()[t].iter().enumerate() {
                gradient[v] += e.2[k];
            }
        }
    }
    Ok(ElasticEnergy {
        grad_term,
        det_term,
        value: grad_term + det_term,
        gradient,
    })
}

/// Outer distortion `K^O = |F|^d / det F` per element and its `L^κ` norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distortion {
    pub per_element: Vec<f64>,
    pub kappa: f64,
    pub norm: f64,
}

pub fn distortion_diagnostic(
    mesh: &Mesh,
    field: &DeformationField,
    params: &ModelParams,
) -> Result<Distortion, EnergyError> {
    field.check_admissible()?;
    let d = params.d as f64;
    let kappa = params.derived().kappa;
    let per_element: Vec<f64> = field
        .state
        .iter()
        .map(|s| s.frob2.powf(0.5 * d) / s.det)
        .collect();
    let weighted: Vec<f64> = per_element
        .iter()
        .zip(mesh.element_areas())
        .map(|(k, a)| a * k.powf(kappa))
        .collect();
    Ok(Distortion {
        norm: pairwise_sum(&weighted).powf(1.0 / kappa),
        per_element,
        kappa,
    })
}

/// Parts of `E_ε` at one field, plus the optional box penalty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub grad_term: f64,
    pub det_term: f64,
    /// Value of the active repulsion functional (before multiplying by ε).
    pub nonlocal_term: f64,
    pub epsilon: f64,
    pub box_term: f64,
    /// `grad_term + det_term + epsilon * nonlocal_term + box_term`.
    pub total: f64,
    #[serde(skip)]
    pub gradient: Vec<Vec2>,
}

impl EnergyBreakdown {
    pub fn elastic(&self) -> f64 {
        self.grad_term + self.det_term
    }

    pub fn penalized_nonlocal(&self) -> f64 {
        self.epsilon * self.nonlocal_term
    }
}
