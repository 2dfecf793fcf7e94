//! Shared fixtures for the benchmarks in `benches/`.

use selfrep_core::{build_structured_square, DeformationField, Mesh, Vec2};

/// Structured unit square with a smooth injective field on it.
pub fn smooth_fixture(n: usize) -> (Mesh, DeformationField) {
    let mesh = build_structured_square(n).expect("n ≥ 1");
    let field = DeformationField::from_map(&mesh, |x| {
        Vec2::new(
            x.x + 0.1 * (std::f64::consts::PI * x.y).sin(),
            x.y + 0.05 * x.x * x.x,
        )
    });
    (mesh, field)
}
