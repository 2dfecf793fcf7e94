use std::path::PathBuf;

use thiserror::Error;

/// Failures while building, loading or querying a mesh.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh needs at least one subdivision per side, got {0}")]
    ZeroSubdivisions(usize),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("triangle {triangle} is not positively oriented (signed area {signed_area:e})")]
    Orientation { triangle: usize, signed_area: f64 },
    #[error(
        "{field}[{entry}] references vertex {index}, but the mesh has {vertex_count} vertices"
    )]
    DanglingIndex {
        field: &'static str,
        entry: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("triangle {triangle} repeats a vertex")]
    RepeatedVertex { triangle: usize },
    #[error("boundary edge ({0}, {1}) is not owned by exactly one triangle")]
    BoundaryEdgeOwnership(usize, usize),
    #[error("boundary edge ({0}, {1}) runs clockwise around its triangle")]
    BoundaryEdgeDirection(usize, usize),
    #[error("boundary does not close at vertex {0}")]
    OpenBoundary(usize),
    #[error("boundary lists {given} edges but the triangulation has {expected}")]
    BoundaryMismatch { given: usize, expected: usize },
    #[error("element areas sum to {elements} but the boundary encloses {polygon}")]
    AreaMismatch { elements: f64, polygon: f64 },
    #[error("mesh has no triangles")]
    Empty,
    #[error("point ({x}, {y}) lies outside the domain (distance {distance:e})")]
    OutsideDomain { x: f64, y: f64, distance: f64 },
    #[error(
        "mesh is not star-shaped with respect to the center: boundary vertex {vertex} is hidden"
    )]
    NotStarShaped { vertex: usize },
    #[error("positions block has {given} entries for {expected} vertices")]
    PositionCount { given: usize, expected: usize },
}

/// Configuration file problems, named per field.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("field `{field}` = {value} is out of range: {expected}")]
    Range {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("field `{field}`: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

/// Energy evaluation could not produce a finite value.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("inadmissible field: det ∇y = {det:e} ≤ 0 on element {element}")]
    Inadmissible { element: usize, det: f64 },
    #[error("coincident images of quadrature nodes {first} and {second}: repulsion is infinite")]
    CoincidentImages { first: usize, second: usize },
    #[error("region is empty")]
    EmptyRegion,
}

/// Defect meter failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CncError {
    #[error("raster resolution must be at least 64, got {0}")]
    Resolution(usize),
    #[error("deformed image has a degenerate bounding box ({width:e} × {height:e})")]
    DegenerateImage { width: f64, height: f64 },
}

/// Optimizer failures that stop a run before it starts.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("initial field is infeasible: {0}")]
    InfeasibleStart(EnergyError),
    #[error("parameters are outside the supported regime: {0}")]
    InvalidParams(String),
    #[error("ε schedule must be nonempty and non-increasing")]
    Schedule,
}

/// Umbrella error for callers that mix modules (CLI, scenarios).
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Cnc(#[from] CncError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}
