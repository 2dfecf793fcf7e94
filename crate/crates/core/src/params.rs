//! Model exponents, derived integrability exponents and regime checks.
//!
//! Formulas are written for a general dimension `d`; the rest of the crate
//! instantiates `d = 2` and [`load_config`] rejects anything else.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::nonlocal::{DiagonalPolicy, QuadratureScheme, QuadratureSpec};
use crate::optimizer::{Method, OptimizerSettings};

/// Which self-repulsion functional is added to the elastic energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Double integral over `Ω × Ω`.
    Bulk,
    /// Double integral over a boundary layer `U_δ × U_δ`.
    BoundaryLayer,
    /// Double integral over `∂Ω × ∂Ω`.
    Surface,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Bulk => "bulk",
            Variant::BoundaryLayer => "boundary-layer",
            Variant::Surface => "surface",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bulk" => Ok(Variant::Bulk),
            "boundary-layer" => Ok(Variant::BoundaryLayer),
            "surface" => Ok(Variant::Surface),
            other => Err(ConfigError::Invalid {
                field: "variant",
                message: format!("unknown variant `{other}`"),
            }),
        }
    }
}

/// Axis-aligned box the deformed body is confined to by a quadratic penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confinement {
    pub min: [f64; 2],
    pub max: [f64; 2],
    #[serde(default = "default_stiffness")]
    pub stiffness: f64,
}

fn default_stiffness() -> f64 {
    1.0e3
}

/// All exponents and coefficients of `E_ε = ℰ + ε𝒟`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    /// Gradient exponent.
    pub p: f64,
    /// Determinant exponent.
    pub r: f64,
    /// Repulsion exponent.
    pub q: f64,
    /// Fractional order.
    pub s: f64,
    pub epsilon: f64,
    /// Layer thickness, boundary-layer variant only.
    pub delta: Option<f64>,
    pub variant: Variant,
    #[serde(rename = "box")]
    pub confinement: Option<Confinement>,
}

impl ModelParams {
    /// Two-dimensional parameters with `ε = 1`, no layer and no box.
    pub fn new(p: f64, r: f64, q: f64, s: f64, variant: Variant) -> Self {
        ModelParams {
            d: 2,
            p,
            r,
            q,
            s,
            epsilon: 1.0,
            delta: None,
            variant,
            confinement: None,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn with_box(mut self, confinement: Confinement) -> Self {
        self.confinement = Some(confinement);
        self
    }

    pub fn derived(&self) -> DerivedExponents {
        derive_exponents(self)
    }
}

/// Exponents that follow from `(d, p, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedExponents {
    /// Sobolev exponent of the inverse map, `(r+1)p / (r(d-1) + p)`.
    pub sigma: f64,
    /// Integrability exponent of the outer distortion, `r(1 - 1/ρ)`.
    pub kappa: f64,
    /// Young split exponent, `1 + p/(d r)`.
    pub rho: f64,
}

pub fn derive_exponents(params: &ModelParams) -> DerivedExponents {
    let d = params.d as f64;
    let (p, r) = (params.p, params.r);
    let sigma = (r + 1.0) * p / (r * (d - 1.0) + p);
    let rho = 1.0 + p / (d * r);
    let kappa = r * (1.0 - 1.0 / rho);
    DerivedExponents { sigma, kappa, rho }
}

/// Comparison used by an [`Inequality`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Greater,
    GreaterEq,
    LessEq,
    Less,
}

impl Relation {
    fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Relation::Greater => lhs > rhs,
            Relation::GreaterEq => lhs >= rhs,
            Relation::LessEq => lhs <= rhs,
            Relation::Less => lhs < rhs,
        }
    }
}

/// One evaluated inequality with both sides, so a report can be audited.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inequality {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    pub holds: bool,
}

impl Inequality {
    fn new(name: &'static str, lhs: f64, relation: Relation, rhs: f64) -> Self {
        Inequality {
            name,
            lhs,
            rhs,
            relation,
            holds: relation.holds(lhs, rhs),
        }
    }
}

/// Sufficient conditions for the surface variant in closed form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficientBounds {
    /// Upper end of the admissible open interval `0 < s < 1 - d/σ`.
    pub s_upper: f64,
    pub s_in_range: bool,
    /// `max{(d²-σ)/((1-s)σ-d), ((d-1)/s)(p+d)/(p-d)}`.
    pub q_lower: f64,
    pub met: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    Invalid,
    /// No violated inequality, but the parameters sit where the theory is
    /// stated inconsistently (surface variant at `s = 1`).
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub variant: Variant,
    pub core_ok: bool,
    pub variant_ok: bool,
    pub derived: DerivedExponents,
    /// Every inequality evaluated, in a fixed order.
    pub checks: Vec<Inequality>,
    /// The failed subset of `checks`.
    pub violations: Vec<Inequality>,
    pub ambiguities: Vec<String>,
    pub sufficient: Option<SufficientBounds>,
}

impl ValidationReport {
    pub fn verdict(&self) -> Verdict {
        if !self.violations.is_empty() {
            Verdict::Invalid
        } else if !self.ambiguities.is_empty() {
            Verdict::Ambiguous
        } else {
            Verdict::Valid
        }
    }

    pub fn is_valid(&self) -> bool {
        self.verdict() == Verdict::Valid
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "variant: {}", self.variant.name())?;
        writeln!(
            f,
            "sigma = {}, kappa = {}, rho = {}",
            self.derived.sigma, self.derived.kappa, self.derived.rho
        )?;
        for c in &self.checks {
            writeln!(
                f,
                "  [{}] {:<28} lhs = {}, rhs = {}",
                if c.holds { "ok" } else { "FAIL" },
                c.name,
                c.lhs,
                c.rhs
            )?;
        }
        for a in &self.ambiguities {
            writeln!(f, "  [ambiguous] {a}")?;
        }
        if let Some(b) = &self.sufficient {
            writeln!(
                f,
                "  sufficient bounds: 0 < s < {} ({}), q > {} -> {}",
                b.s_upper,
                if b.s_in_range { "ok" } else { "no" },
                b.q_lower,
                if b.met { "met" } else { "not met" }
            )?;
        }
        write!(f, "verdict: {:?}", self.verdict())
    }
}

/// Evaluates the core regime and the variant-specific conditions.
pub fn validate(params: &ModelParams) -> ValidationReport {
    let d = params.d as f64;
    let ModelParams { p, r, q, s, .. } = *params;
    let derived = derive_exponents(params);
    let sigma = derived.sigma;

    let gap = p - d * (d - 1.0);
    let r_bound = if gap > 0.0 {
        p * (d - 1.0) / gap
    } else {
        f64::INFINITY
    };
    let core = vec![
        Inequality::new("p>d(d−1)", p, Relation::Greater, d * (d - 1.0)),
        Inequality::new("r>p(d−1)/(p−d(d−1))", r, Relation::Greater, r_bound),
    ];

    let mut variant_checks = vec![Inequality::new("q≥1", q, Relation::GreaterEq, 1.0)];
    let mut ambiguities = Vec::new();
    let mut sufficient = None;
    match params.variant {
        Variant::Bulk | Variant::BoundaryLayer => {
            variant_checks.push(Inequality::new("s≥0", s, Relation::GreaterEq, 0.0));
            variant_checks.push(Inequality::new("s<1", s, Relation::Less, 1.0));
            variant_checks.push(Inequality::new(
                "s−d/q≤1−d/σ",
                s - d / q,
                Relation::LessEq,
                1.0 - d / sigma,
            ));
        }
        Variant::Surface => {
            variant_checks.push(Inequality::new("s≥0", s, Relation::GreaterEq, 0.0));
            variant_checks.push(Inequality::new("s≤1", s, Relation::LessEq, 1.0));
            if s == 1.0 {
                ambiguities.push(
                    "s = 1 is admitted by the surface convergence theorem but excluded by the \
                     definition of the functional (s ∈ [0,1))"
                        .to_string(),
                );
            }
            variant_checks.push(Inequality::new(
                "q((1−s)σ−d)>d²−σ",
                q * ((1.0 - s) * sigma - d),
                Relation::Greater,
                d * d - sigma,
            ));
            variant_checks.push(Inequality::new(
                "sq≥(d−1)(p+d)/(p−d)",
                s * q,
                Relation::GreaterEq,
                (d - 1.0) * (p + d) / (p - d),
            ));
            let s_upper = 1.0 - d / sigma;
            let s_in_range = s > 0.0 && s < s_upper;
            let q_lower =
                ((d * d - sigma) / ((1.0 - s) * sigma - d)).max((d - 1.0) / s * (p + d) / (p - d));
            sufficient = Some(SufficientBounds {
                s_upper,
                s_in_range,
                q_lower,
                met: s_in_range && q > q_lower,
            });
        }
    }

    let core_ok = core.iter().all(|c| c.holds);
    let variant_ok = variant_checks.iter().all(|c| c.holds);
    let checks: Vec<Inequality> = core.into_iter().chain(variant_checks).collect();
    let violations = checks.iter().filter(|c| !c.holds).cloned().collect();
    ValidationReport {
        variant: params.variant,
        core_ok,
        variant_ok,
        derived,
        checks,
        violations,
        ambiguities,
        sufficient,
    }
}

/// Settings of the experiment drivers (mesh size, raster, quadrature, sweeps).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSettings {
    /// Mesh subdivisions per side for builtin scenarios.
    pub n: usize,
    /// Raster cells per axis for the defect meter.
    pub resolution: usize,
    pub quadrature: QuadratureSpec,
    pub eps0: f64,
    pub eps_steps: usize,
    pub eps_factor: f64,
    pub bench_sizes: Vec<usize>,
    pub bench_repeats: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            n: 8,
            resolution: 512,
            quadrature: QuadratureSpec::default(),
            eps0: 0.1,
            eps_steps: 6,
            eps_factor: 0.5,
            bench_sizes: vec![8, 16, 32],
            bench_repeats: 5,
        }
    }
}

impl ExperimentSettings {
    /// `ε_k = eps0 · eps_factor^k` for `k < eps_steps`.
    pub fn schedule(&self) -> Vec<f64> {
        (0..self.eps_steps)
            .map(|k| self.eps0 * self.eps_factor.powi(k as i32))
            .collect()
    }
}

/// Everything a config file describes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub optimizer: OptimizerSettings,
    pub experiment: ExperimentSettings,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<RawModel>,
    #[serde(default)]
    optimizer: RawOptimizer,
    #[serde(default)]
    experiment: RawExperiment,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    d: Option<i64>,
    p: Option<f64>,
    r: Option<f64>,
    q: Option<f64>,
    s: Option<f64>,
    epsilon: Option<f64>,
    delta: Option<f64>,
    variant: Option<String>,
    #[serde(rename = "box")]
    confinement: Option<Confinement>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    method: Option<String>,
    max_iters: Option<usize>,
    grad_tol: Option<f64>,
    armijo_c: Option<f64>,
    backtrack_factor: Option<f64>,
    feasibility_fraction: Option<f64>,
    history: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    n: Option<usize>,
    resolution: Option<usize>,
    quadrature: Option<String>,
    diagonal_policy: Option<String>,
    subdivision_depth: Option<u32>,
    eps0: Option<f64>,
    eps_steps: Option<usize>,
    eps_factor: Option<f64>,
    bench_sizes: Option<Vec<usize>>,
    bench_repeats: Option<usize>,
}

fn range(
    field: &'static str,
    value: f64,
    ok: bool,
    expected: &'static str,
) -> Result<f64, ConfigError> {
    if ok && value.is_finite() {
        Ok(value)
    } else {
        Err(ConfigError::Range {
            field,
            value,
            expected,
        })
    }
}

fn model_from_raw(raw: RawModel) -> Result<ModelParams, ConfigError> {
    let d = raw.d.unwrap_or(2);
    if d != 2 {
        return Err(ConfigError::Invalid {
            field: "d",
            message: format!("only d = 2 is implemented, got {d}"),
        });
    }
    let p = raw.p.ok_or(ConfigError::Missing("p"))?;
    let p = range("p", p, p > 0.0, "p > 0")?;
    let r = raw.r.ok_or(ConfigError::Missing("r"))?;
    let r = range("r", r, r > 0.0, "r > 0")?;
    let q = raw.q.unwrap_or(2.0);
    let q = range("q", q, q >= 1.0, "q ≥ 1")?;
    let s = raw.s.unwrap_or(0.0);
    let s = range("s", s, (0.0..=1.0).contains(&s), "0 ≤ s ≤ 1")?;
    let epsilon = raw.epsilon.unwrap_or(1.0);
    let epsilon = range("epsilon", epsilon, epsilon >= 0.0, "epsilon ≥ 0")?;
    let variant: Variant = raw
        .variant
        .ok_or(ConfigError::Missing("variant"))?
        .parse()?;
    let delta = match (variant, raw.delta) {
        (Variant::BoundaryLayer, None) => return Err(ConfigError::Missing("delta")),
        (Variant::BoundaryLayer, Some(v)) => Some(range("delta", v, v > 0.0, "delta > 0")?),
        (_, Some(_)) => {
            return Err(ConfigError::Invalid {
                field: "delta",
                message: "only the boundary-layer variant takes a layer thickness".into(),
            })
        }
        (_, None) => None,
    };
    if let Some(b) = &raw.confinement {
        if !(b.min[0] < b.max[0] && b.min[1] < b.max[1]) {
            return Err(ConfigError::Invalid {
                field: "box",
                message: "box must have min < max on both axes".into(),
            });
        }
        range(
            "box.stiffness",
            b.stiffness,
            b.stiffness > 0.0,
            "stiffness > 0",
        )?;
    }
    Ok(ModelParams {
        d: 2,
        p,
        r,
        q,
        s,
        epsilon,
        delta,
        variant,
        confinement: raw.confinement,
    })
}

fn optimizer_from_raw(raw: RawOptimizer) -> Result<OptimizerSettings, ConfigError> {
    let mut o = OptimizerSettings::default();
    if let Some(m) = raw.method {
        o.method = match m.as_str() {
            "gradient-descent" => Method::GradientDescent,
            "lbfgs" => Method::Lbfgs,
            other => {
                return Err(ConfigError::Invalid {
                    field: "optimizer.method",
                    message: format!("unknown method `{other}` (gradient-descent | lbfgs)"),
                })
            }
        };
    }
    if let Some(v) = raw.max_iters {
        o.max_iters = v;
    }
    if let Some(v) = raw.grad_tol {
        o.grad_tol = range("optimizer.grad_tol", v, v >= 0.0, "grad_tol ≥ 0")?;
    }
    if let Some(v) = raw.armijo_c {
        o.armijo_c = range(
            "optimizer.armijo_c",
            v,
            v > 0.0 && v < 1.0,
            "0 < armijo_c < 1",
        )?;
    }
    if let Some(v) = raw.backtrack_factor {
        o.backtrack_factor = range(
            "optimizer.backtrack_factor",
            v,
            v > 0.0 && v < 1.0,
            "0 < backtrack_factor < 1",
        )?;
    }
    if let Some(v) = raw.feasibility_fraction {
        o.feasibility_fraction = range(
            "optimizer.feasibility_fraction",
            v,
            v > 0.0 && v < 1.0,
            "0 < feasibility_fraction < 1",
        )?;
    }
    if let Some(v) = raw.history {
        if v == 0 {
            return Err(ConfigError::Range {
                field: "optimizer.history",
                value: 0.0,
                expected: "history ≥ 1",
            });
        }
        o.history = v;
    }
    if let Some(v) = raw.seed {
        o.seed = v;
    }
    Ok(o)
}

fn experiment_from_raw(raw: RawExperiment) -> Result<ExperimentSettings, ConfigError> {
    let mut e = ExperimentSettings::default();
    if let Some(n) = raw.n {
        range("experiment.n", n as f64, n >= 1, "n ≥ 1")?;
        e.n = n;
    }
    if let Some(res) = raw.resolution {
        range(
            "experiment.resolution",
            res as f64,
            res >= 64,
            "resolution ≥ 64",
        )?;
        e.resolution = res;
    }
    if let Some(q) = raw.quadrature {
        e.quadrature.scheme = match q.as_str() {
            "centroid" => QuadratureScheme::Centroid,
            "3-point" => QuadratureScheme::ThreePoint,
            other => {
                return Err(ConfigError::Invalid {
                    field: "experiment.quadrature",
                    message: format!("unknown scheme `{other}` (centroid | 3-point)"),
                })
            }
        };
    }
    if let Some(p) = raw.diagonal_policy {
        e.quadrature.diagonal = match p.as_str() {
            "skip-self" => DiagonalPolicy::SkipSelf,
            "subdivide-adjacent" => DiagonalPolicy::SubdivideAdjacent,
            other => {
                return Err(ConfigError::Invalid {
                    field: "experiment.diagonal_policy",
                    message: format!("unknown policy `{other}` (skip-self | subdivide-adjacent)"),
                })
            }
        };
    }
    if let Some(depth) = raw.subdivision_depth {
        range(
            "experiment.subdivision_depth",
            depth as f64,
            depth >= 1,
            "subdivision_depth ≥ 1",
        )?;
        e.quadrature.subdivision_depth = depth;
    }
    if let Some(v) = raw.eps0 {
        e.eps0 = range("experiment.eps0", v, v > 0.0, "eps0 > 0")?;
    }
    if let Some(v) = raw.eps_steps {
        range("experiment.eps_steps", v as f64, v >= 1, "eps_steps ≥ 1")?;
        e.eps_steps = v;
    }
    if let Some(v) = raw.eps_factor {
        e.eps_factor = range(
            "experiment.eps_factor",
            v,
            v > 0.0 && v <= 1.0,
            "0 < eps_factor ≤ 1",
        )?;
    }
    if let Some(v) = raw.bench_sizes {
        if v.is_empty() || v.contains(&0) {
            return Err(ConfigError::Invalid {
                field: "experiment.bench_sizes",
                message: "sizes must be a nonempty list of positive integers".into(),
            });
        }
        e.bench_sizes = v;
    }
    if let Some(v) = raw.bench_repeats {
        range(
            "experiment.bench_repeats",
            v as f64,
            v >= 1,
            "bench_repeats ≥ 1",
        )?;
        e.bench_repeats = v;
    }
    Ok(e)
}

/// Parses a full config document.
pub fn parse_run_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let model = model_from_raw(raw.model.ok_or(ConfigError::Missing("model"))?)?;
    Ok(RunConfig {
        model,
        optimizer: optimizer_from_raw(raw.optimizer)?,
        experiment: experiment_from_raw(raw.experiment)?,
    })
}

pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_run_config(&text)
}

/// Reads the `[model]` section of a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ModelParams, ConfigError> {
    load_run_config(path).map(|c| c.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-14 * b.abs().max(1.0)
    }

    #[test]
    fn sigma_for_p4_r3() {
        let e = derive_exponents(&ModelParams::new(4.0, 3.0, 2.0, 0.0, Variant::Bulk));
        assert!(close(e.sigma, 16.0 / 7.0));
        assert!(close(e.rho, 5.0 / 3.0));
        assert!(close(e.kappa, 6.0 / 5.0));
    }

    #[test]
    fn sigma_for_p8_r20() {
        let e = derive_exponents(&ModelParams::new(8.0, 20.0, 4.0, 0.5, Variant::Surface));
        assert!(close(e.sigma, 6.0));
    }

    #[test]
    fn bulk_p4_r3_is_valid() {
        let rep = validate(&ModelParams::new(4.0, 3.0, 2.0, 0.0, Variant::Bulk));
        assert!(rep.core_ok && rep.variant_ok);
        assert_eq!(rep.verdict(), Verdict::Valid);
        let eq3 = rep.checks.iter().find(|c| c.name == "s−d/q≤1−d/σ").unwrap();
        assert!(close(eq3.lhs, -1.0));
        assert!(close(eq3.rhs, 1.0 / 8.0));
        let rb = rep
            .checks
            .iter()
            .find(|c| c.name.starts_with("r>"))
            .unwrap();
        assert!(close(rb.rhs, 2.0));
    }

    #[test]
    fn p_equal_to_bound_is_invalid() {
        let rep = validate(&ModelParams::new(2.0, 5.0, 2.0, 0.0, Variant::Bulk));
        assert!(!rep.core_ok);
        let v = rep
            .violations
            .iter()
            .find(|c| c.name == "p>d(d−1)")
            .unwrap();
        assert_eq!((v.lhs, v.rhs), (2.0, 2.0));
        assert_eq!(rep.verdict(), Verdict::Invalid);
    }

    #[test]
    fn surface_p8_r20_is_valid() {
        let rep = validate(&ModelParams::new(8.0, 20.0, 4.0, 0.5, Variant::Surface));
        assert!(rep.is_valid(), "{rep}");
        let eq6 = rep
            .checks
            .iter()
            .find(|c| c.name.starts_with("q((1"))
            .unwrap();
        assert!(close(eq6.lhs, 4.0) && close(eq6.rhs, -2.0));
        let eq7 = rep
            .checks
            .iter()
            .find(|c| c.name.starts_with("sq"))
            .unwrap();
        assert!(close(eq7.lhs, 2.0) && close(eq7.rhs, 10.0 / 6.0));
        let b = rep.sufficient.unwrap();
        assert!(close(b.s_upper, 2.0 / 3.0));
        assert!(b.s_in_range);
        // max{-2/1, (1/0.5)(10/6)} = 10/3 < 4.
        assert!(close(b.q_lower, 10.0 / 3.0));
        assert!(b.met);
    }

    #[test]
    fn surface_at_s_one_is_ambiguous() {
        // sigma = 101*20/120 = 16.83: eq (6) -4 > 4 - 16.83, eq (7) 2 >= 22/18.
        let rep = validate(&ModelParams::new(20.0, 100.0, 2.0, 1.0, Variant::Surface));
        assert!(rep.violations.is_empty(), "{rep}");
        assert_eq!(rep.verdict(), Verdict::Ambiguous);
    }

    #[test]
    fn bulk_at_s_one_is_invalid() {
        let rep = validate(&ModelParams::new(8.0, 20.0, 4.0, 1.0, Variant::Bulk));
        assert!(rep.violations.iter().any(|c| c.name == "s<1"));
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_run_config("[model]\np = 4.0\nr = 3.0\nvariant = \"bulk\"\n").unwrap();
        assert_eq!(c.model.epsilon, 1.0);
        assert_eq!(c.model.confinement, None);
        assert_eq!(c.model.q, 2.0);
        assert_eq!(c.model.s, 0.0);
        assert_eq!(c.optimizer, OptimizerSettings::default());
    }

    #[test]
    fn s_out_of_range() {
        let err = parse_run_config("[model]\np = 4.0\nr = 3.0\ns = 1.2\nvariant = \"bulk\"\n")
            .unwrap_err();
        assert!(
            matches!(err, ConfigError::Range { field: "s", .. }),
            "{err}"
        );
    }

    #[test]
    fn layer_without_delta() {
        let err = parse_run_config("[model]\np = 4.0\nr = 3.0\nvariant = \"boundary-layer\"\n")
            .unwrap_err();
        assert_eq!(err, ConfigError::Missing("delta"));
    }

    #[test]
    fn unknown_key_is_reported() {
        let err = parse_run_config("[model]\np = 4.0\nr = 3.0\nvariant = \"bulk\"\nfoo = 1\n")
            .unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
    }
}
