//! Neumann Poisson solve -phi'' = rhs on the cell grid.
//!
//! The homogeneous no-flux problem only determines phi up to a constant and
//! only admits solutions for mean-zero rhs. We pin phi_0 = 0, solve the
//! remaining tridiagonal system by the Thomas algorithm (diagonally dominant
//! after pinning, no pivoting needed) and subtract the mean afterwards, so
//! the returned potential has exact-by-construction zero boundary gradients
//! and a zero mean.

use crate::error::{Error, Result};
use crate::fields::{Field, Grid1D};

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub phi: Field,
    /// One entry per face, entries 0 and cells are exactly zero.
    pub grad_phi: Vec<f64>,
    /// Max residual of the discrete equation over all cells, including the
    /// pinned one.
    pub residual_inf: f64,
}

/// Tolerance for the discrete compatibility condition |integral rhs| = 0.
pub fn compat_tol(cells: usize, rhs_inf: f64) -> f64 {
    1e-8 * cells as f64 * rhs_inf.max(1.0)
}

pub fn solve_poisson(grid: &Grid1D, rhs: &Field) -> Result<PoissonSolution> {
    let n = grid.cells();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "rhs has {} cells, grid has {n}",
            rhs.len()
        )));
    }
    let dx = grid.dx();

    let defect = rhs.values.iter().sum::<f64>() * dx;
    let tol = compat_tol(n, rhs.max_abs());
    if defect.abs() > tol {
        return Err(Error::IncompatibleSource {
            defect: defect.abs(),
            tol,
        });
    }

    // Scaled equations, row j: -phi_{j-1} + 2 phi_j - phi_{j+1} = dx^2 rhs_j
    // with the boundary rows missing their outward neighbor. Row 0 is
    // dropped (phi_0 pinned to zero), leaving unknowns phi_1..phi_{N-1}:
    //   row 1:        2 phi_1 - phi_2        = dx^2 rhs_1   (phi_0 = 0)
    //   rows 2..N-2: -phi_{j-1} + 2 phi_j - phi_{j+1} = dx^2 rhs_j
    //   row N-1:     -phi_{N-2} + phi_{N-1}  = dx^2 rhs_{N-1}
    let m = n - 1;
    let dx2 = dx * dx;
    let mut diag = vec![2.0; m];
    diag[m - 1] = 1.0;
    let mut d: Vec<f64> = (1..n).map(|j| dx2 * rhs.values[j]).collect();

    // Thomas forward sweep, sub- and super-diagonals are all -1.
    for k in 1..m {
        let w = -1.0 / diag[k - 1];
        diag[k] -= w * -1.0;
        d[k] -= w * d[k - 1];
    }
    let mut phi = vec![0.0; n];
    phi[n - 1] = d[m - 1] / diag[m - 1];
    for k in (0..m - 1).rev() {
        phi[k + 1] = (d[k] + phi[k + 2]) / diag[k];
    }

    let mean = phi.iter().sum::<f64>() / n as f64;
    for v in phi.iter_mut() {
        *v -= mean;
    }

    let mut grad = vec![0.0; n + 1];
    for f in 1..n {
        grad[f] = (phi[f] - phi[f - 1]) / dx;
    }

    // Residual of -phi'' = rhs with the one-sided boundary rows; constant
    // shifts cancel row-wise, so this also covers the pinned row.
    let mut residual_inf = 0.0f64;
    for j in 0..n {
        let left = if j == 0 { 0.0 } else { grad[j] };
        let right = if j == n - 1 { 0.0 } else { grad[j + 1] };
        let r = rhs.values[j] - (left - right) / dx;
        residual_inf = residual_inf.max(r.abs());
    }

    Ok(PoissonSolution {
        phi: Field { values: phi },
        grad_phi: grad,
        residual_inf,
    })
}

/// Discrete H^-1 seminorm of a mean-zero field: solve -psi'' = w with
/// no-flux boundaries and return the L2 norm of psi'.
pub fn hminus1_seminorm(grid: &Grid1D, w: &Field) -> Result<f64> {
    let sol = solve_poisson(grid, w)?;
    let sum: f64 = sol.grad_phi.iter().map(|g| g * g).sum();
    Ok((sum * grid.dx()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cosine_rhs(grid: &Grid1D, k: f64) -> Field {
        Field::from_fn(grid, |x| (k * PI * x).cos())
    }

    #[test]
    fn solves_cosine_benchmark() {
        // -phi'' = cos(pi x) on [0,1] has phi = cos(pi x)/pi^2, mean zero.
        let grid = Grid1D::new(128, 1.0).unwrap();
        let sol = solve_poisson(&grid, &cosine_rhs(&grid, 1.0)).unwrap();
        let mut err = 0.0f64;
        for j in 0..grid.cells() {
            let exact = (PI * grid.cell_center(j)).cos() / (PI * PI);
            err = err.max((sol.phi.values[j] - exact).abs());
        }
        assert!(err < 1e-4, "err = {err}");
        assert_eq!(sol.grad_phi[0], 0.0);
        assert_eq!(sol.grad_phi[grid.cells()], 0.0);
        let mean = sol.phi.values.iter().sum::<f64>() / grid.cells() as f64;
        assert!(mean.abs() < 1e-13);
        assert!(sol.residual_inf < 1e-10 * 1.0);
    }

    #[test]
    fn second_order_convergence() {
        let mut errs = Vec::new();
        for cells in [64usize, 128, 256] {
            let grid = Grid1D::new(cells, 1.0).unwrap();
            let sol = solve_poisson(&grid, &cosine_rhs(&grid, 1.0)).unwrap();
            let mut err = 0.0f64;
            for j in 0..cells {
                let exact = (PI * grid.cell_center(j)).cos() / (PI * PI);
                err = err.max((sol.phi.values[j] - exact).abs());
            }
            errs.push(err);
        }
        for pair in errs.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((3.6..=4.4).contains(&ratio), "ratio = {ratio}");
        }
    }

    #[test]
    fn rejects_incompatible_rhs() {
        let grid = Grid1D::new(32, 1.0).unwrap();
        let rhs = Field::constant(&grid, 0.1);
        match solve_poisson(&grid, &rhs) {
            Err(Error::IncompatibleSource { defect, .. }) => {
                assert!((defect - 0.1).abs() < 1e-12)
            }
            other => panic!("expected incompatibility error, got {other:?}"),
        }
    }

    #[test]
    fn residual_small_on_generic_rhs() {
        let grid = Grid1D::new(200, 2.0).unwrap();
        let mut rhs = Field::from_fn(&grid, |x| (3.0 * x).sin() * (x * x).cos());
        let mean = rhs.values.iter().sum::<f64>() / rhs.len() as f64;
        for v in rhs.values.iter_mut() {
            *v -= mean;
        }
        let sol = solve_poisson(&grid, &rhs).unwrap();
        assert!(sol.residual_inf <= 1e-10 * rhs.max_abs().max(1.0));
    }

    #[test]
    fn hminus1_of_first_mode() {
        // w = cos(pi x): psi = cos(pi x)/pi^2, |psi'|_L2 = 1/(pi sqrt(2)).
        let grid = Grid1D::new(256, 1.0).unwrap();
        let w = cosine_rhs(&grid, 1.0);
        let v = hminus1_seminorm(&grid, &w).unwrap();
        let exact = 1.0 / (PI * 2.0f64.sqrt());
        assert!((v - exact).abs() < 1e-4 * exact, "v = {v}, exact = {exact}");
    }

    #[test]
    fn hminus1_sign_symmetry_is_exact() {
        let grid = Grid1D::new(64, 1.0).unwrap();
        let w = cosine_rhs(&grid, 2.0);
        let neg = Field {
            values: w.values.iter().map(|v| -v).collect(),
        };
        let a = hminus1_seminorm(&grid, &w).unwrap();
        let b = hminus1_seminorm(&grid, &neg).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
