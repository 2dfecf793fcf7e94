//! Two-dimensional P1 finite elements for nonlinear elasticity augmented with
//! vanishing nonlocal self-repulsion.
//!
//! The crate evaluates the stored energy
//! `∫|∇y|^p + ∫(det ∇y)^{-r}` together with one of three singular
//! self-repulsion functionals (bulk, boundary layer, boundary surface),
//! minimizes their sum with a feasibility-preserving line search, and
//! measures how far a deformation is from being globally injective through
//! the area-formula defect `∫|det ∇y| - |y(Ω)|`.
//!
//! Module map:
//!
//! - [`mesh`]: immutable reference triangulations, boundary layers, point location.
//! - [`params`]: exponents, derived integrability exponents, regime validation, config files.
//! - [`elastic`]: deformation fields, the elastic energy and the outer distortion.
//! - [`nonlocal`]: quadrature of the self-repulsion double integrals and their gradients.
//! - [`cnc`]: the injectivity defect meter (rasterized image area, multiplicity, overlaps).
//! - [`optimizer`]: line-search minimization, box confinement, shrinking maps, ε-sweeps.
//! - [`scenario`]: builtin meshes and analytic deformation maps used by experiments.
//! - [`report`]: CSV and structured-text writers shared by the CLI and the tests.

pub mod cnc;
pub mod elastic;
mod error;
pub mod geom;
pub mod mesh;
pub mod nonlocal;
pub mod optimizer;
pub mod params;
pub mod reduce;
pub mod report;
pub mod scenario;

pub use cnc::{cnc_defect, det_integral, image_area, CncReport, Raster};
pub use elastic::{
    distortion_diagnostic, elastic_energy, element_gradients, DeformationField, ElementState,
    EnergyBreakdown,
};
pub use error::{CncError, ConfigError, EnergyError, Error, MeshError, OptimizeError};
pub use mesh::{build_structured_square, delta_layer, load_mesh, point_locate, Mesh, Region};
pub use nonlocal::{
    bulk_repulsion, cost_profile, repulsion_dispatch, surface_repulsion, QuadratureSpec,
    RepulsionModel,
};
pub use optimizer::{
    box_penalty, gamma_sweep, minimize, shrink_map, Objective, OptimizerSettings, OptimizerTrace,
    SweepResult,
};
pub use params::{derive_exponents, load_config, validate, DerivedExponents, ModelParams, Variant};

/// Points and displacements in the plane.
pub type Vec2 = nalgebra::Vector2<f64>;
/// 2×2 matrices (deformation gradients).
pub type Mat2 = nalgebra::Matrix2<f64>;
