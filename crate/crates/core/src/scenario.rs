//! Builtin reference meshes and analytic deformation maps.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elastic::DeformationField;
use crate::error::{ConfigError, Error};
use crate::mesh::{
    build_structured_square, half_annulus, load_mesh_with_positions, slotted_square,
    structured_rectangle, DiagonalPattern, Mesh,
};
use crate::params::Confinement;
use crate::Vec2;

/// Closed-form deformations used as initial fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticMap {
    Identity,
    /// `y = λx`.
    Scale(f64),
    /// `y = (x₁ + γx₂, x₂)`.
    Shear(f64),
    /// `y = (|x₁|, x₂)`.
    Fold,
    /// Polar `(ρ,θ) ↦ (ρ,2θ)`.
    AngleDoubling,
    /// Hourglass on the unit square whose waist has width `t`.
    Pinch(f64),
}

/// Smooth bump on `[0,1]` with `b(1/2) = 1` and `b(0) = b(1) = 0`.
fn bump(x: f64) -> f64 {
    (PI * x).sin().powi(2)
}

impl AnalyticMap {
    pub fn apply(&self, x: Vec2) -> Vec2 {
        match *self {
            AnalyticMap::Identity => x,
            AnalyticMap::Scale(l) => x * l,
            AnalyticMap::Shear(g) => Vec2::new(x.x + g * x.y, x.y),
            AnalyticMap::Fold => Vec2::new(x.x.abs(), x.y),
            AnalyticMap::AngleDoubling => {
                let rho = x.norm();
                let theta = 2.0 * x.y.atan2(x.x);
                Vec2::new(rho * theta.cos(), rho * theta.sin())
            }
            AnalyticMap::Pinch(t) => {
                let squeeze = 1.0 - (1.0 - t) * bump(x.y);
                Vec2::new(0.5 + (x.x - 0.5) * squeeze, x.y)
            }
        }
    }
}

impl fmt::Display for AnalyticMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalyticMap::Identity => write!(f, "identity"),
            AnalyticMap::Scale(l) => write!(f, "scale({l})"),
            AnalyticMap::Shear(g) => write!(f, "shear({g})"),
            AnalyticMap::Fold => write!(f, "fold"),
            AnalyticMap::AngleDoubling => write!(f, "angle-doubling"),
            AnalyticMap::Pinch(t) => write!(f, "pinch({t})"),
        }
    }
}

impl FromStr for AnalyticMap {
    type Err = ConfigError;

    /// Accepts `identity`, `scale(λ)`, `shear(γ)`, `fold`, `angle-doubling`, `pinch(t)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || {
            ConfigError::Invalid {
            field: "map",
            message: format!(
                "unknown map `{s}` (identity | scale(λ) | shear(γ) | fold | angle-doubling | pinch(t))"
            ),
        }
        };
        let s = s.trim();
        let (name, arg) = match s.find('(') {
            Some(open) if s.ends_with(')') => {
                let value: f64 = s[open + 1..s.len() - 1]
                    .trim()
                    .parse()
                    .map_err(|_| invalid())?;
                (&s[..open], Some(value))
            }
            Some(_) => return Err(invalid()),
            None => (s, None),
        };
        match (name, arg) {
            ("identity", None) => Ok(AnalyticMap::Identity),
            ("scale", Some(l)) => Ok(AnalyticMap::Scale(l)),
            ("shear", Some(g)) => Ok(AnalyticMap::Shear(g)),
            ("fold", None) => Ok(AnalyticMap::Fold),
            ("angle-doubling", None) => Ok(AnalyticMap::AngleDoubling),
            ("pinch", Some(t)) if t > 0.0 && t <= 1.0 => Ok(AnalyticMap::Pinch(t)),
            _ => Err(invalid()),
        }
    }
}

/// A reference mesh, a starting field and an optional confinement box.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub mesh: Mesh,
    pub field: DeformationField,
    pub confinement: Option<Confinement>,
}

/// Names accepted by [`builtin`].
pub const BUILTIN: [&str; 7] = [
    "identity",
    "scale",
    "shear",
    "fold",
    "angle-doubling",
    "pinched-square",
    "pinch",
];

/// Waist width of the `pinched-square` scenario.
pub const PINCHED_WAIST: f64 = 0.05;

/// Box of the `pinch` scenario: narrower than the slotted square, so the
/// two arms are pushed towards each other.
pub fn pinch_box() -> Confinement {
    Confinement {
        min: [0.12, -1.0],
        max: [0.88, 2.0],
        stiffness: 1e3,
    }
}

/// `(−1,1)×(0,1)` with `2n × n` cells, symmetric about `x₁ = 0`.
pub fn mirrored_rectangle(n: usize) -> Result<Mesh, Error> {
    Ok(structured_rectangle(
        (-1.0, 1.0),
        (0.0, 1.0),
        2 * n,
        n,
        DiagonalPattern::MirroredAtZero,
    )?)
}

/// `{1 < |x| < 2, x₂ > 0}` with `n` radial and `3n` angular cells.
pub fn half_annulus_mesh(n: usize) -> Result<Mesh, Error> {
    Ok(half_annulus(n, 3 * n, 1.0, 2.0)?)
}

/// Builds a named scenario at resolution `n` (cells per unit length).
pub fn builtin(name: &str, n: usize) -> Result<Scenario, Error> {
    let square = || build_structured_square(n);
    let (mesh, map, confinement, description): (Mesh, AnalyticMap, Option<Confinement>, &str) =
        match name {
            "identity" => (
                square()?,
                AnalyticMap::Identity,
                None,
                "unloaded unit square",
            ),
            "scale" => (
                square()?,
                AnalyticMap::Scale(2.0),
                None,
                "unit square dilated by 2",
            ),
            "shear" => (
                square()?,
                AnalyticMap::Shear(0.5),
                None,
                "unit square under simple shear 0.5",
            ),
            "fold" => (
                mirrored_rectangle(n)?,
                AnalyticMap::Fold,
                None,
                "(−1,1)×(0,1) folded onto the unit square along x₁ = 0",
            ),
            "angle-doubling" => (
                half_annulus_mesh(n)?,
                AnalyticMap::AngleDoubling,
                None,
                "half annulus wrapped once around the full annulus",
            ),
            "pinched-square" => (
                square()?,
                AnalyticMap::Pinch(PINCHED_WAIST),
                None,
                "hourglass with waist 0.05: boundary arcs close but disjoint",
            ),
            "pinch" => (
                slotted_square(n)?,
                AnalyticMap::Identity,
                Some(pinch_box()),
                "slotted square squeezed by a box so its arms approach",
            ),
            other => {
                return Err(ConfigError::Invalid {
                    field: "scenario",
                    message: format!("unknown scenario `{other}` (one of {})", BUILTIN.join(", ")),
                }
                .into())
            }
        };
    let field = DeformationField::from_map(&mesh, |x| map.apply(x));
    Ok(Scenario {
        name: name.to_string(),
        description: format!("{description}; initial field {map}"),
        mesh,
        field,
        confinement,
    })
}

/// Loads a mesh file; its `positions` block, if any, is the initial field.
pub fn from_file(path: impl AsRef<Path>) -> Result<Scenario, Error> {
    let path = path.as_ref();
    let (mesh, positions) = load_mesh_with_positions(path)?;
    let field = match positions {
        Some(p) => DeformationField::new(&mesh, p)?,
        None => DeformationField::identity(&mesh),
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mesh".to_string());
    Ok(Scenario {
        description: format!("mesh file {}", path.display()),
        name,
        mesh,
        field,
        confinement: None,
    })
}

/// A builtin name, or else a path to a mesh file.
pub fn resolve(name_or_path: &str, n: usize) -> Result<Scenario, Error> {
    if BUILTIN.contains(&name_or_path) {
        builtin(name_or_path, n)
    } else if Path::new(name_or_path).exists() {
        from_file(name_or_path)
    } else {
        builtin(name_or_path, n)
    }
}

/// Interior vertices moved by independent uniform offsets in
/// `[-amplitude, amplitude]²`, reproducible from `seed`.
pub fn perturb(
    mesh: &Mesh,
    field: &DeformationField,
    amplitude: f64,
    seed: u64,
) -> DeformationField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = field
        .positions()
        .iter()
        .enumerate()
        .map(|(v, y)| {
            let offset =
                Vec2::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)) * amplitude;
            if mesh.is_boundary_vertex(v) {
                *y
            } else {
                y + offset
            }
        })
        .collect();
    DeformationField::new(mesh, positions).expect("same vertex count")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_names_round_trip() {
        for s in [
            "identity",
            "scale(2)",
            "shear(0.5)",
            "fold",
            "angle-doubling",
            "pinch(0.1)",
        ] {
            let m: AnalyticMap = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("pinch(0)".parse::<AnalyticMap>().is_err());
        assert!("twist".parse::<AnalyticMap>().is_err());
        assert!("scale".parse::<AnalyticMap>().is_err());
    }

    #[test]
    fn all_builtins_build() {
        for name in BUILTIN {
            let s = builtin(name, 8).unwrap();
            assert_eq!(s.field.positions().len(), s.mesh.num_vertices());
        }
        assert!(builtin("nope", 4).is_err());
    }

    #[test]
    fn admissibility_of_builtins() {
        for name in BUILTIN {
            let s = builtin(name, 8).unwrap();
            assert_eq!(s.field.is_admissible(), name != "fold", "{name}");
        }
    }

    #[test]
    fn fold_has_unit_jacobian() {
        let s = builtin("fold", 4).unwrap();
        assert!(s
            .field
            .element_state()
            .iter()
            .all(|e| (e.det.abs() - 1.0).abs() < 1e-12));
        let negative = s
            .field
            .element_state()
            .iter()
            .filter(|e| e.det < 0.0)
            .count();
        assert_eq!(2 * negative, s.mesh.num_triangles());
    }

    #[test]
    fn pinch_waist() {
        let y = AnalyticMap::Pinch(0.1).apply(Vec2::new(0.0, 0.5));
        assert!((y.x - 0.45).abs() < 1e-15);
        let y = AnalyticMap::Pinch(0.1).apply(Vec2::new(0.0, 0.0));
        assert!(y.x.abs() < 1e-15);
    }

    #[test]
    fn perturbation_is_reproducible() {
        let m = build_structured_square(4).unwrap();
        let id = DeformationField::identity(&m);
        let a = perturb(&m, &id, 0.01, 7);
        let b = perturb(&m, &id, 0.01, 7);
        assert_eq!(a, b);
        assert_ne!(a, perturb(&m, &id, 0.01, 8));
    }
}
