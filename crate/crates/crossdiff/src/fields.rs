//! Cell-centered fields on a uniform 1-D grid with no-flux boundaries.
//!
//! Cell j covers [j*dx, (j+1)*dx] and carries the value at its center
//! x_j = (j + 1/2)*dx. Faces are indexed 0..=cells, faces 0 and cells are
//! the domain boundary.

use crate::error::{Error, Result};
use crate::expr::ScalarFn;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    cells: usize,
    length: f64,
    dx: f64,
}

impl Grid1D {
    pub fn new(cells: usize, length: f64) -> Result<Grid1D> {
        if cells < 3 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 3 cells, got {cells}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid length must be positive, got {length}"
            )));
        }
        Ok(Grid1D {
            cells,
            length,
            dx: length / cells as f64,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn cell_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn constant(grid: &Grid1D, v: f64) -> Field {
        Field {
            values: vec![v; grid.cells()],
        }
    }

    pub fn from_fn(grid: &Grid1D, f: impl Fn(f64) -> f64) -> Field {
        Field {
            values: (0..grid.cells()).map(|j| f(grid.cell_center(j))).collect(),
        }
    }

    pub fn from_profile(grid: &Grid1D, f: &ScalarFn) -> Field {
        Field::from_fn(grid, |x| f.eval(x))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn bitwise_eq(&self, other: &Field) -> bool {
        self.len() == other.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Midpoint-rule integral over the domain.
pub fn mass(grid: &Grid1D, f: &Field) -> f64 {
    debug_assert_eq!(f.len(), grid.cells());
    f.values.iter().sum::<f64>() * grid.dx()
}

/// Discrete L2 norm sqrt(sum v_j^2 dx).
pub fn l2_norm(grid: &Grid1D, f: &Field) -> f64 {
    (f.values.iter().map(|v| v * v).sum::<f64>() * grid.dx()).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeciesState {
    pub species: Vec<Field>,
}

impl SpeciesState {
    pub fn new(species: Vec<Field>) -> SpeciesState {
        SpeciesState { species }
    }

    pub fn from_profiles(grid: &Grid1D, profiles: &[ScalarFn]) -> SpeciesState {
        SpeciesState {
            species: profiles
                .iter()
                .map(|p| Field::from_profile(grid, p))
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.species.len()
    }

    /// Weighted aggregate u0 = sum_i a_i u_i, computed cellwise in species
    /// order so that the result is bit-reproducible.
    pub fn aggregate(&self, weights: &[f64]) -> Result<Field> {
        if weights.len() != self.species.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} species",
                weights.len(),
                self.species.len()
            )));
        }
        let cells = self.species.first().map(|f| f.len()).unwrap_or(0);
        let mut out = vec![0.0; cells];
        for (a, u) in weights.iter().zip(&self.species) {
            if u.len() != cells {
                return Err(Error::DimensionMismatch(
                    "species fields have differing lengths".into(),
                ));
            }
            for (o, v) in out.iter_mut().zip(&u.values) {
                *o += a * v;
            }
        }
        Ok(Field { values: out })
    }

    pub fn min_value(&self) -> f64 {
        self.species.iter().map(|f| f.min()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.species
            .iter()
            .map(|f| f.max())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn bitwise_eq(&self, other: &SpeciesState) -> bool {
        self.n() == other.n()
            && self
                .species
                .iter()
                .zip(&other.species)
                .all(|(a, b)| a.bitwise_eq(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_geometry() {
        let g = Grid1D::new(4, 2.0).unwrap();
        assert_eq!(g.dx(), 0.5);
        assert_eq!(g.cell_center(0), 0.25);
        assert_eq!(g.cell_center(3), 1.75);
        assert!(Grid1D::new(2, 1.0).is_err());
        assert!(Grid1D::new(8, 0.0).is_err());
    }

    #[test]
    fn mass_is_midpoint_rule() {
        let g = Grid1D::new(10, 1.0).unwrap();
        let f = Field::constant(&g, 3.0);
        assert!((mass(&g, &f) - 3.0).abs() < 1e-15);
        // midpoint rule integrates linear functions exactly
        let lin = Field::from_fn(&g, |x| 2.0 * x);
        assert!((mass(&g, &lin) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn aggregate_weights() {
        let g = Grid1D::new(3, 1.0).unwrap();
        let s = SpeciesState::new(vec![Field::constant(&g, 1.0), Field::constant(&g, 2.0)]);
        let u0 = s.aggregate(&[2.0, 0.5]).unwrap();
        assert_eq!(u0.values, vec![3.0; 3]);
        assert!(s.aggregate(&[1.0]).is_err());
    }
}
