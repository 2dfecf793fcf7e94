//! Minimization of `E_ε = ℰ + ε𝒟 (+ box penalty)` over admissible P1 fields.
//!
//! Each iteration picks a descent direction (steepest descent or L-BFGS),
//! caps the step so that no element determinant loses more than a fraction
//! `τ` of its value under the linearized update, and then backtracks until
//! the Armijo condition holds for the true objective at an admissible trial.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cnc::{cnc_defect, CncReport};
use crate::elastic::{cofactor, elastic_energy, elastic_value, DeformationField, EnergyBreakdown};
use crate::error::{ConfigError, EnergyError, Error, MeshError, OptimizeError};
use crate::mesh::Mesh;
use crate::nonlocal::{QuadratureSpec, RepulsionModel};
use crate::params::{Confinement, ModelParams};
use crate::reduce::{max_abs, pairwise_sum};
use crate::{Mat2, Vec2};

/// Descent direction rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GradientDescent,
    Lbfgs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerSettings {
    pub method: Method,
    pub max_iters: usize,
    /// Stop once the max-norm of the gradient is at most this.
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    /// Fraction-to-boundary parameter `τ ∈ (0,1)`.
    pub feasibility_fraction: f64,
    /// L-BFGS memory.
    pub history: usize,
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            method: Method::Lbfgs,
            max_iters: 500,
            grad_tol: 1e-6,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            feasibility_fraction: 0.9,
            history: 8,
            seed: 0,
        }
    }
}

/// Quadratic penalty `stiffness · Σ_v dist(y_v, box)²` and its gradient.
pub fn box_penalty(positions: &[Vec2], confinement: &Confinement) -> (f64, Vec<Vec2>) {
    let lo = Vec2::from(confinement.min);
    let hi = Vec2::from(confinement.max);
    let k = confinement.stiffness;
    let mut terms = Vec::with_capacity(positions.len());
    let gradient = positions
        .iter()
        .map(|y| {
            let outside = y - y.sup(&lo).inf(&hi);
            terms.push(k * outside.norm_squared());
            outside * (2.0 * k)
        })
        .collect();
    (pairwise_sum(&terms), gradient)
}

/// `E_ε` on a fixed mesh, with the repulsion region resolved once.
#[derive(Debug, Clone)]
pub struct Objective<'m> {
    mesh: &'m Mesh,
    params: ModelParams,
    repulsion: RepulsionModel,
}

impl<'m> Objective<'m> {
    pub fn new(
        mesh: &'m Mesh,
        params: ModelParams,
        quad: QuadratureSpec,
    ) -> Result<Self, ConfigError> {
        let repulsion = RepulsionModel::new(&params, mesh, quad)?;
        Ok(Objective {
            mesh,
            params,
            repulsion,
        })
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn repulsion(&self) -> &RepulsionModel {
        &self.repulsion
    }

    /// Same objective with another penalty coefficient.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        let mut next = self.clone();
        next.params.epsilon = epsilon;
        next
    }

    /// Energy parts and, if requested, the gradient of the total. With
    /// `ε = 0` the repulsion term is skipped and reported as zero.
    pub fn evaluate(
        &self,
        field: &DeformationField,
        with_gradient: bool,
    ) -> Result<EnergyBreakdown, EnergyError> {
        let p = &self.params;
        let elastic = if with_gradient {
            elastic_energy(self.mesh, field, p.p, p.r)?
        } else {
            elastic_value(self.mesh, field, p.p, p.r)?
        };
        let mut gradient = elastic.gradient;
        let mut nonlocal_term = 0.0;
        if p.epsilon != 0.0 {
            let rep = self.repulsion.evaluate(self.mesh, field, with_gradient)?;
            nonlocal_term = rep.value;
            for (g, r) in gradient.iter_mut().zip(&rep.gradient) {
                *g += r * p.epsilon;
            }
        }
        let mut box_term = 0.0;
        if let Some(confinement) = &p.confinement {
            let (value, grad) = box_penalty(field.positions(), confinement);
            box_term = value;
            for (g, b) in gradient.iter_mut().zip(&grad) {
                *g += b;
            }
        }
        Ok(EnergyBreakdown {
            grad_term: elastic.grad_term,
            det_term: elastic.det_term,
            nonlocal_term,
            epsilon: p.epsilon,
            box_term,
            total: elastic.value + p.epsilon * nonlocal_term + box_term,
            gradient,
        })
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIterations => "max-iterations",
            Termination::LineSearchFailed => "line-search-failed",
        }
    }
}

/// State after an accepted step (iteration 0 is the start).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub total: f64,
    pub grad_term: f64,
    pub det_term: f64,
    pub nonlocal_term: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub min_det: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl OptimizerTrace {
    pub fn last(&self) -> &IterationRecord {
        self.records
            .last()
            .expect("a trace holds at least the start")
    }

    /// Number of accepted steps.
    pub fn iterations(&self) -> usize {
        self.last().iter
    }
}

fn flatten(g: &[Vec2]) -> Vec<f64> {
    g.iter().flat_map(|v| [v.x, v.y]).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn record(
    iter: usize,
    e: &EnergyBreakdown,
    step: f64,
    field: &DeformationField,
) -> IterationRecord {
    IterationRecord {
        iter,
        total: e.total,
        grad_term: e.grad_term,
        det_term: e.det_term,
        nonlocal_term: e.nonlocal_term,
        grad_norm: max_abs(&flatten(&e.gradient)),
        step,
        min_det: field.min_det().1,
    }
}

/// Largest `α ≤ alpha` keeping `det F + α (cof F : dF) ≥ (1-τ) det F` on
/// every element.
fn feasibility_cap(
    mesh: &Mesh,
    field: &DeformationField,
    direction: &[f64],
    tau: f64,
    alpha: f64,
) -> f64 {
    let mut cap = alpha;
    for (t, state) in field.element_state().iter().enumerate() {
        let [a, b, c] =
            mesh.triangles()[t].map(|i| Vec2::new(direction[2 * i], direction[2 * i + 1]));
        let df = Mat2::from_columns(&[b - a, c - a]) * mesh.ref_inverse(t);
        let ddet = cofactor(&state.f).component_mul(&df).sum();
        if ddet < 0.0 {
            cap = cap.min(tau * state.det / -ddet);
        }
    }
    cap
}

fn shortest_edge(mesh: &Mesh) -> f64 {
    let mut h = f64::INFINITY;
    for tri in mesh.triangles() {
        for k in 0..3 {
            h = h.min((mesh.vertices()[tri[(k + 1) % 3]] - mesh.vertices()[tri[k]]).norm());
        }
    }
    h
}

const MIN_STEP: f64 = 1e-16;

/// Minimizes the objective from `y0`. Line-search failure and exhausted
/// budgets are reported through [`OptimizerTrace::termination`].
pub fn minimize(
    objective: &Objective<'_>,
    y0: DeformationField,
    settings: &OptimizerSettings,
) -> Result<(DeformationField, OptimizerTrace), OptimizeError> {
    let mesh = objective.mesh();
    let mut field = y0;
    let mut energy = objective
        .evaluate(&field, true)
        .map_err(OptimizeError::InfeasibleStart)?;
    let mut grad = flatten(&energy.gradient);
    let mut records = vec![record(0, &energy, 0.0, &field)];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let first_move = 0.1 * shortest_edge(mesh);
    let mut last_step = f64::NAN;
    let mut termination = Termination::MaxIterations;

    for iter in 1..=settings.max_iters {
        if max_abs(&grad) <= settings.grad_tol {
            termination = Termination::Converged;
            break;
        }
        let mut direction = match settings.method {
            Method::GradientDescent => grad.iter().map(|g| -g).collect(),
            Method::Lbfgs => two_loop(&grad, &history),
        };
        let mut slope = dot(&grad, &direction);
        if slope >= 0.0 {
            history.clear();
            direction = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &direction);
        }
        let mut alpha = if settings.method == Method::Lbfgs && !history.is_empty() {
            1.0
        } else if last_step.is_finite() {
            2.0 * last_step
        } else {
            first_move / max_abs(&direction)
        };
        alpha = feasibility_cap(
            mesh,
            &field,
            &direction,
            settings.feasibility_fraction,
            alpha,
        );

        let mut accepted = None;
        while alpha >= MIN_STEP {
            let trial: Vec<Vec2> = field
                .positions()
                .iter()
                .enumerate()
                .map(|(i, y)| y + Vec2::new(direction[2 * i], direction[2 * i + 1]) * alpha)
                .collect();
            let trial = DeformationField::new(mesh, trial).expect("same vertex count");
            if trial.is_admissible() {
                if let Ok(e) = objective.evaluate(&trial, true) {
                    if e.total.is_finite()
                        && e.total <= energy.total + settings.armijo_c * alpha * slope
                    {
                        accepted = Some((trial, e));
                        break;
                    }
                }
            }
            alpha *= settings.backtrack_factor;
        }
        let Some((next, next_energy)) = accepted else {
            termination = Termination::LineSearchFailed;
            break;
        };
        let next_grad = flatten(&next_energy.gradient);
        if settings.method == Method::Lbfgs {
            let s: Vec<f64> = direction.iter().map(|d| d * alpha).collect();
            let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                if history.len() == settings.history {
                    history.pop_front();
                }
                history.push_back((s, y, 1.0 / sy));
            }
        }
        field = next;
        energy = next_energy;
        grad = next_grad;
        last_step = alpha;
        records.push(record(iter, &energy, alpha, &field));
    }
    if termination == Termination::MaxIterations && max_abs(&grad) <= settings.grad_tol {
        termination = Termination::Converged;
    }
    Ok((
        field,
        OptimizerTrace {
            records,
            termination,
        },
    ))
}

fn two_loop(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// The shrinking map `Ψ_j` at the vertices and the composed field `y ∘ Ψ_j`.
#[derive(Debug, Clone)]
pub struct Shrunk {
    pub psi: Vec<Vec2>,
    pub field: DeformationField,
}

/// `Ψ_j(x) = c + ((j-1)/j)(x - c)` for a domain star-shaped about `c`; the
/// composition interpolates `base` at `Ψ_j(x_v)` for every vertex `x_v`.
pub fn shrink_map(
    mesh: &Mesh,
    j: usize,
    center: Vec2,
    base: &DeformationField,
) -> Result<Shrunk, Error> {
    if j < 2 {
        return Err(ConfigError::Range {
            field: "j",
            value: j as f64,
            expected: "j ≥ 2",
        }
        .into());
    }
    mesh.check_star_shaped(center)?;
    let factor = (j as f64 - 1.0) / j as f64;
    let locator = mesh.locator();
    let psi: Vec<Vec2> = mesh
        .vertices()
        .iter()
        .map(|x| center + (x - center) * factor)
        .collect();
    let positions = psi
        .iter()
        .map(|&z| {
            let loc = locator.locate(z)?;
            Ok(base.eval(mesh, loc.triangle, loc.bary))
        })
        .collect::<Result<Vec<_>, MeshError>>()?;
    Ok(Shrunk {
        psi,
        field: DeformationField::new(mesh, positions)?,
    })
}

/// Result of one ε of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub epsilon: f64,
    #[serde(skip)]
    pub field: DeformationField,
    pub energy: EnergyBreakdown,
    pub cnc: CncReport,
    /// `ε · 𝒟(y_ε)`.
    pub penalized_nonlocal: f64,
    pub min_det: f64,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
}

impl SweepResult {
    pub fn penalized_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.penalized_nonlocal).collect()
    }

    pub fn final_field(&self) -> Option<&DeformationField> {
        self.records.last().map(|r| &r.field)
    }
}

/// Minimizes along a non-increasing ε schedule, warm-starting each run from
/// the previous minimizer, and measures every minimizer with the defect meter.
pub fn gamma_sweep(
    objective: &Objective<'_>,
    y0: DeformationField,
    schedule: &[f64],
    settings: &OptimizerSettings,
    resolution: usize,
) -> Result<SweepResult, Error> {
    if schedule.is_empty()
        || schedule.windows(2).any(|w| w[1] > w[0])
        || schedule.iter().any(|e| e.is_nan() || *e < 0.0)
    {
        return Err(OptimizeError::Schedule.into());
    }
    let mesh = objective.mesh();
    let mut field = y0;
    let mut records = Vec::with_capacity(schedule.len());
    for &epsilon in schedule {
        let obj = objective.with_epsilon(epsilon);
        let (next, trace) = minimize(&obj, field, settings)?;
        let energy = obj.evaluate(&next, false)?;
        let cnc = cnc_defect(mesh, &next, resolution)?;
        records.push(SweepRecord {
            epsilon,
            penalized_nonlocal: energy.penalized_nonlocal(),
            min_det: next.min_det().1,
            iterations: trace.iterations(),
            termination: trace.termination,
            energy,
            cnc,
            field: next.clone(),
        });
        field = next;
    }
    Ok(SweepResult { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_square;
    use crate::params::Variant;

    fn unit_box() -> Confinement {
        Confinement {
            min: [0.0, 0.0],
            max: [1.0, 1.0],
            stiffness: 1e3,
        }
    }

    #[test]
    fn box_penalty_inside_is_zero() {
        let m = build_structured_square(3).unwrap();
        let (v, g) = box_penalty(DeformationField::identity(&m).positions(), &unit_box());
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|g| *g == Vec2::zeros()));
    }

    #[test]
    fn box_penalty_one_vertex_outside() {
        let (v, g) = box_penalty(&[Vec2::new(1.1, 0.5), Vec2::new(0.5, 0.5)], &unit_box());
        assert!((v - 1e3 * 0.01).abs() < 1e-9);
        assert!((g[0] - Vec2::new(2e3 * 0.1, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn identity_is_a_fixed_point_when_stress_free() {
        let m = build_structured_square(4).unwrap();
        let params = ModelParams::new(4.0, 8.0, 2.0, 0.0, Variant::Bulk).with_epsilon(0.0);
        let obj = Objective::new(&m, params, QuadratureSpec::default()).unwrap();
        let (f, trace) = minimize(
            &obj,
            DeformationField::identity(&m),
            &OptimizerSettings::default(),
        )
        .unwrap();
        assert_eq!(trace.termination, Termination::Converged);
        assert!(trace.iterations() <= 1);
        assert!((trace.last().total - 5.0).abs() < 1e-12);
        assert!(f.is_admissible());
    }

    #[test]
    fn perturbed_start_descends() {
        let m = build_structured_square(4).unwrap();
        let params = ModelParams::new(4.0, 8.0, 2.0, 0.0, Variant::Bulk).with_epsilon(0.0);
        let obj = Objective::new(&m, params, QuadratureSpec::default()).unwrap();
        let y0 = DeformationField::from_map(&m, |x| {
            let b = (std::f64::consts::PI * x.x).sin() * (std::f64::consts::PI * x.y).sin();
            x + Vec2::new(0.01 * b, -0.01 * b)
        });
        for method in [Method::GradientDescent, Method::Lbfgs] {
            let settings = OptimizerSettings {
                method,
                max_iters: 300,
                ..Default::default()
            };
            let (_, trace) = minimize(&obj, y0.clone(), &settings).unwrap();
            for w in trace.records.windows(2) {
                assert!(w[1].total <= w[0].total);
            }
            assert!(trace.records.iter().all(|r| r.min_det > 0.0));
            assert!(
                trace.last().total <= 5.0 + 1e-6,
                "{method:?}: {}",
                trace.last().total
            );
        }
    }

    #[test]
    fn infeasible_start_rejected() {
        let m = build_structured_square(2).unwrap();
        let params = ModelParams::new(4.0, 3.0, 2.0, 0.0, Variant::Bulk).with_epsilon(0.0);
        let obj = Objective::new(&m, params, QuadratureSpec::default()).unwrap();
        let y0 = DeformationField::from_map(&m, |x| Vec2::new(-x.x, x.y));
        assert!(matches!(
            minimize(&obj, y0, &OptimizerSettings::default()),
            Err(OptimizeError::InfeasibleStart(_))
        ));
    }

    #[test]
    fn shrink_map_halves_the_square() {
        let m = build_structured_square(4).unwrap();
        let id = DeformationField::identity(&m);
        let c = Vec2::new(0.5, 0.5);
        let s = shrink_map(&m, 2, c, &id).unwrap();
        let mut sup: f64 = 0.0;
        for (x, y) in m.vertices().iter().zip(s.field.positions()) {
            assert!((y - (c + (x - c) * 0.5)).norm() < 1e-12);
            assert!(y.x >= 0.25 - 1e-12 && y.x <= 0.75 + 1e-12);
            sup = sup.max((s.psi[0] - m.vertices()[0]).norm().max((y - x).norm()));
        }
        assert!((sup - 0.5 * std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn shrink_map_rejects_small_j() {
        let m = build_structured_square(2).unwrap();
        let id = DeformationField::identity(&m);
        assert!(shrink_map(&m, 1, Vec2::new(0.5, 0.5), &id).is_err());
    }

    #[test]
    fn sweep_rejects_increasing_schedule() {
        let m = build_structured_square(2).unwrap();
        let params = ModelParams::new(4.0, 8.0, 2.0, 0.0, Variant::Bulk);
        let obj = Objective::new(&m, params, QuadratureSpec::default()).unwrap();
        let err = gamma_sweep(
            &obj,
            DeformationField::identity(&m),
            &[0.1, 0.2],
            &Default::default(),
            64,
        );
        assert!(matches!(err, Err(Error::Optimize(OptimizeError::Schedule))));
    }
}
