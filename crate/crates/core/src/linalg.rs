//! Jacobi-preconditioned conjugate gradients for the shifted Neumann
//! operator `diag(a) - Laplacian`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{laplacian_neumann, Field, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    /// Relative residual target `||r|| / ||rhs||`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 5000,
        }
    }
}

/// `diag(a) - Laplacian` on a Neumann grid; SPD whenever every `a_i > 0`.
pub struct ShiftedLaplacian<'a> {
    pub shift: &'a Field,
}

impl ShiftedLaplacian<'_> {
    pub fn apply(&self, x: &Field) -> Result<Field> {
        let mut out = laplacian_neumann(x)?;
        for ((o, a), xv) in out
            .values_mut()
            .iter_mut()
            .zip(self.shift.values())
            .zip(x.values())
        {
            *o = a * xv - *o;
        }
        Ok(out)
    }

    fn diagonal(&self) -> Vec<f64> {
        let grid: &Grid = self.shift.grid();
        let (nx, ny) = (grid.cells(0), grid.cells(1));
        let ihx2 = 1.0 / grid.spacing(0).powi(2);
        let ihy2 = if grid.dim() == 2 {
            1.0 / grid.spacing(1).powi(2)
        } else {
            0.0
        };
        (0..grid.len())
            .map(|k| {
                let (i, j) = grid.coords(k);
                let mut d = self.shift.values()[k];
                d += ihx2 * ((i > 0) as u8 + (i + 1 < nx) as u8) as f64;
                if grid.dim() == 2 {
                    d += ihy2 * ((j > 0) as u8 + (j + 1 < ny) as u8) as f64;
                }
                d
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of a CG solve.
#[derive(Clone, Debug)]
pub struct CgSolution {
    pub x: Field,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `(diag(a) - Laplacian) x = rhs` starting from `guess`.
pub fn solve_shifted_laplacian(
    shift: &Field,
    rhs: &Field,
    guess: &Field,
    opts: &CgOptions,
) -> Result<CgSolution> {
    shift.check_same_grid(rhs)?;
    shift.check_same_grid(guess)?;
    let op = ShiftedLaplacian { shift };
    let rhs_norm = dot(rhs.values(), rhs.values()).sqrt();
    if rhs_norm == 0.0 {
        return Ok(CgSolution {
            x: Field::zeros(*rhs.grid()),
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut x = guess.clone();
    let ax = op.apply(&x)?;
    let mut r: Vec<f64> = rhs.values().iter().zip(ax.values()).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = Field::from_values(*rhs.grid(), z.clone())?;
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / rhs_norm;
    let mut it = 0;
    while res > opts.tol {
        if it >= opts.max_iter {
            return Err(Error::SolverFailure {
                iterations: it,
                residual: res,
            });
        }
        let ap = op.apply(&p)?;
        let pap = dot(p.values(), ap.values());
        if !(pap > 0.0) {
            return Err(Error::SolverFailure {
                iterations: it,
                residual: res,
            });
        }
        let step = rz / pap;
        x.add_scaled(step, &p)?;
        for (ri, api) in r.iter_mut().zip(ap.values()) {
            *ri -= step * api;
        }
        for ((zi, ri), d) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri * d;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.values_mut().iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        it += 1;
        res = dot(&r, &r).sqrt() / rhs_norm;
    }
    Ok(CgSolution {
        x,
        iterations: it,
        relative_residual: res,
    })
}
