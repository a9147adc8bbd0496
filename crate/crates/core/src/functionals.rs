//! Size and shape functionals of a typical cell.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::TessellationModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SizeFunctional {
    /// `XY`, the area of the rectangle with the same edge lengths.
    EdgeProductArea,
    /// `XY sin(theta)`, the true parallelogram area.
    GeometricArea,
    /// `X + Y`.
    HalfPerimeter,
    /// Product of all edge lengths.
    Volume,
    SurfaceArea,
    TotalEdgeLength,
}

impl SizeFunctional {
    pub const ALL: [SizeFunctional; 6] = [
        SizeFunctional::EdgeProductArea,
        SizeFunctional::GeometricArea,
        SizeFunctional::HalfPerimeter,
        SizeFunctional::Volume,
        SizeFunctional::SurfaceArea,
        SizeFunctional::TotalEdgeLength,
    ];

    pub fn token(self) -> &'static str {
        match self {
            SizeFunctional::EdgeProductArea => "area",
            SizeFunctional::GeometricArea => "geom-area",
            SizeFunctional::HalfPerimeter => "half-perimeter",
            SizeFunctional::Volume => "volume",
            SizeFunctional::SurfaceArea => "surface-area",
            SizeFunctional::TotalEdgeLength => "edge-length",
        }
    }

    pub fn supports(self, dimension: usize) -> bool {
        match self {
            SizeFunctional::EdgeProductArea
            | SizeFunctional::GeometricArea
            | SizeFunctional::HalfPerimeter => dimension == 2,
            SizeFunctional::Volume => dimension >= 2,
            SizeFunctional::SurfaceArea | SizeFunctional::TotalEdgeLength => dimension == 3,
        }
    }

    /// The functionals the small-cell study selects on in dimension `d`.
    pub fn study_set(dimension: usize) -> Vec<SizeFunctional> {
        match dimension {
            2 => vec![
                SizeFunctional::EdgeProductArea,
                SizeFunctional::GeometricArea,
                SizeFunctional::HalfPerimeter,
            ],
            3 => vec![
                SizeFunctional::Volume,
                SizeFunctional::SurfaceArea,
                SizeFunctional::TotalEdgeLength,
            ],
            _ => vec![SizeFunctional::Volume],
        }
    }

    pub fn check_dimension(self, dimension: usize) -> Result<()> {
        if self.supports(dimension) {
            Ok(())
        } else {
            let expected = match self {
                SizeFunctional::SurfaceArea | SizeFunctional::TotalEdgeLength => 3,
                _ => 2,
            };
            Err(Error::DimensionMismatch {
                expected,
                got: dimension,
            })
        }
    }

    /// Evaluates the functional on raw edge lengths. `sine` is the sine of
    /// the angle between the two planar directions and only matters for
    /// [`SizeFunctional::GeometricArea`]. Dimensions are not checked here.
    #[inline]
    pub fn eval(self, edges: &[f64], sine: f64) -> f64 {
        match self {
            SizeFunctional::EdgeProductArea => edges[0] * edges[1],
            SizeFunctional::GeometricArea => edges[0] * edges[1] * sine,
            SizeFunctional::HalfPerimeter => edges[0] + edges[1],
            SizeFunctional::Volume => edges.iter().product(),
            SizeFunctional::SurfaceArea => {
                2.0 * (edges[0] * edges[1] + edges[0] * edges[2] + edges[1] * edges[2])
            }
            SizeFunctional::TotalEdgeLength => 4.0 * (edges[0] + edges[1] + edges[2]),
        }
    }
}

impl fmt::Display for SizeFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for SizeFunctional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SizeFunctional::ALL
            .into_iter()
            .find(|f| f.token() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown functional {s:?}")))
    }
}

/// `d * min / sum` of the edge lengths: 1 for a cube, 0 for a degenerate
/// cell. Undefined when every edge is zero.
#[inline]
pub fn sigma_of(edges: &[f64]) -> Result<f64> {
    let (min, sum) = edges
        .iter()
        .fold((f64::INFINITY, 0.0), |(m, s), &x| (m.min(x), s + x));
    if sum <= 0.0 {
        return Err(Error::UndefinedShape);
    }
    Ok((edges.len() as f64 * min / sum).min(1.0))
}

#[inline]
pub fn tau_of(edges: &[f64]) -> f64 {
    edges.iter().copied().fold(0.0, f64::max)
}

pub fn sigma(cell: &crate::sampler::TypicalCell) -> Result<f64> {
    sigma_of(&cell.edge_lengths)
}

pub fn tau(cell: &crate::sampler::TypicalCell) -> f64 {
    tau_of(&cell.edge_lengths)
}

pub fn size(
    cell: &crate::sampler::TypicalCell,
    functional: SizeFunctional,
    model: &TessellationModel,
) -> Result<f64> {
    let d = cell.edge_lengths.len();
    if d != model.dimension {
        return Err(Error::DimensionMismatch {
            expected: model.dimension,
            got: d,
        });
    }
    functional.check_dimension(d)?;
    let sine = if functional == SizeFunctional::GeometricArea {
        model.planar_sine()?
    } else {
        1.0
    };
    Ok(functional.eval(&cell.edge_lengths, sine))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DirectionAtom;
    use crate::sampler::TypicalCell;
    use proptest::prelude::*;

    fn cell(v: &[f64]) -> TypicalCell {
        TypicalCell::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(&cell(&[1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(sigma(&cell(&[3.0, 1.0])).unwrap(), 0.5);
        assert_eq!(sigma(&cell(&[1.0, 2.0, 3.0])).unwrap(), 0.5);
    }

    #[test]
    fn sigma_degenerate() {
        assert_eq!(sigma_of(&[0.0, 2.0]).unwrap(), 0.0);
        assert_eq!(sigma_of(&[0.0, 0.0]), Err(Error::UndefinedShape));
    }

    #[test]
    fn tau_examples() {
        assert_eq!(tau(&cell(&[3.0, 1.0])), 3.0);
        assert_eq!(tau(&cell(&[0.5, 0.5, 0.5])), 0.5);
        assert_eq!(tau(&cell(&[0.2, 0.7])), 0.7);
    }

    #[test]
    fn size_examples() {
        let m2 = TessellationModel::standard_2d();
        let m3 = TessellationModel::standard_3d();
        let c2 = cell(&[2.0, 3.0]);
        let c3 = cell(&[1.0, 2.0, 3.0]);
        assert_eq!(size(&c2, SizeFunctional::EdgeProductArea, &m2).unwrap(), 6.0);
        assert_eq!(size(&c2, SizeFunctional::GeometricArea, &m2).unwrap(), 6.0);
        assert_eq!(size(&c2, SizeFunctional::HalfPerimeter, &m2).unwrap(), 5.0);
        assert_eq!(size(&c3, SizeFunctional::Volume, &m3).unwrap(), 6.0);
        assert_eq!(size(&c3, SizeFunctional::SurfaceArea, &m3).unwrap(), 22.0);
        assert_eq!(size(&c3, SizeFunctional::TotalEdgeLength, &m3).unwrap(), 24.0);
    }

    #[test]
    fn size_dimension_mismatch() {
        let m2 = TessellationModel::standard_2d();
        let m3 = TessellationModel::standard_3d();
        assert!(matches!(
            size(&cell(&[1.0, 2.0, 3.0]), SizeFunctional::EdgeProductArea, &m3),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            size(&cell(&[1.0, 2.0]), SizeFunctional::SurfaceArea, &m2),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(size(&cell(&[1.0, 2.0]), SizeFunctional::Volume, &m2).is_ok());
    }

    #[test]
    fn geometric_area_uses_angle() {
        let t = 60f64.to_radians();
        let m = TessellationModel::new(
            2.0,
            vec![
                DirectionAtom::new(vec![1.0, 0.0], 0.3).unwrap(),
                DirectionAtom::new(vec![t.cos(), t.sin()], 0.7).unwrap(),
            ],
        )
        .unwrap();
        let a = size(&cell(&[2.0, 3.0]), SizeFunctional::GeometricArea, &m).unwrap();
        assert!((a - 6.0 * t.sin()).abs() < 1e-14);
        // half-perimeter ignores the angle
        assert_eq!(size(&cell(&[2.0, 3.0]), SizeFunctional::HalfPerimeter, &m).unwrap(), 5.0);
    }

    #[test]
    fn tokens_round_trip() {
        for f in SizeFunctional::ALL {
            assert_eq!(f.token().parse::<SizeFunctional>().unwrap(), f);
        }
        assert!("perimeter".parse::<SizeFunctional>().is_err());
    }

    proptest! {
        #[test]
        fn sigma_scale_invariant(v in prop::collection::vec(1e-3f64..1e3, 2..5)) {
            let s = sigma_of(&v).unwrap();
            prop_assert!(s > 0.0 && s <= 1.0);
            for c in [1e-6, 1.0, 1e6] {
                let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
                prop_assert!((sigma_of(&scaled).unwrap() - s).abs() <= 1e-12);
                prop_assert!((tau_of(&scaled) - c * tau_of(&v)).abs() <= 1e-12 * c * tau_of(&v));
            }
        }

        #[test]
        fn permutation_invariant(a in 1e-3f64..1e3, b in 1e-3f64..1e3, c in 1e-3f64..1e3) {
            let base = [a, b, c];
            let perms = [[a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]];
            for f in [SizeFunctional::Volume, SizeFunctional::SurfaceArea, SizeFunctional::TotalEdgeLength] {
                let r = f.eval(&base, 1.0);
                for p in &perms {
                    prop_assert!((f.eval(p, 1.0) - r).abs() <= 1e-12 * r);
                }
            }
            for p in &perms {
                prop_assert!((sigma_of(p).unwrap() - sigma_of(&base).unwrap()).abs() <= 1e-15);
                prop_assert_eq!(tau_of(p), tau_of(&base));
            }
        }

        #[test]
        fn sigma_vanishes_with_ratio(r in 1e-12f64..1e-3) {
            prop_assert!(sigma_of(&[r, 1.0]).unwrap() <= 2.0 * r);
        }
    }
}
