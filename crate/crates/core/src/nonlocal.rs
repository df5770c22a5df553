//! Spatial convolution operators `B[f](x) = int k(|y - x|) f(y) dy` realized
//! by midpoint quadrature on a dense weight table.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm_lp, Field, Grid, Trajectory};

/// Radial kernel `k(r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    /// `k0 exp(-r^2 / (2 sigma^2))`
    Gaussian { amplitude: f64, width: f64 },
    /// `c / max(r, eps)`, a core-regularized Newtonian potential.
    Newtonian { strength: f64, core: f64 },
    /// `a` for `r <= r0`, else 0.
    TopHat { amplitude: f64, radius: f64 },
    Zero,
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::Assumption {
            tag: "A3",
            message: format!("kernel {what} must be finite and positive, got {v}"),
        };
        let finite = |what: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Assumption {
                    tag: "A3",
                    message: format!("kernel {what} must be finite, got {v}"),
                })
            }
        };
        match *self {
            Kernel::Gaussian { amplitude, width } => {
                finite("amplitude", amplitude)?;
                if !(width.is_finite() && width > 0.0) {
                    return Err(bad("width", width));
                }
            }
            Kernel::Newtonian { strength, core } => {
                finite("strength", strength)?;
                if !(core.is_finite() && core > 0.0) {
                    return Err(bad("core radius", core));
                }
            }
            Kernel::TopHat { amplitude, radius } => {
                finite("amplitude", amplitude)?;
                if !(radius.is_finite() && radius > 0.0) {
                    return Err(bad("radius", radius));
                }
            }
            Kernel::Zero => {}
        }
        Ok(())
    }

    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Kernel::Gaussian { amplitude, width } => {
                amplitude * (-(r * r) / (2.0 * width * width)).exp()
            }
            Kernel::Newtonian { strength, core } => strength / r.max(core),
            Kernel::TopHat { amplitude, radius } => {
                if r <= radius {
                    amplitude
                } else {
                    0.0
                }
            }
            Kernel::Zero => 0.0,
        }
    }
}

/// Precomputed quadrature plan `w(i, j) = k(|y_j - x_i|) vol_j`.
#[derive(Clone, Debug)]
pub struct NonlocalOperator {
    kernel: Kernel,
    grid: Grid,
    weights: Vec<f64>,
}

impl NonlocalOperator {
    pub fn new(kernel: Kernel, grid: Grid) -> Result<Self> {
        kernel.validate()?;
        let n = grid.len();
        let vol = grid.cell_volume();
        let mut weights = vec![0.0; n * n];
        if kernel != Kernel::Zero {
            for i in 0..n {
                for j in 0..n {
                    weights[i * n + j] = kernel.eval(grid.distance(i, j)) * vol;
                }
            }
        }
        Ok(Self {
            kernel,
            grid,
            weights,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.grid.len() + j]
    }

    pub fn is_zero(&self) -> bool {
        self.kernel == Kernel::Zero
    }

    fn check(&self, f: &Field) -> Result<()> {
        if *f.grid() != self.grid {
            return Err(Error::ShapeMismatch(
                "field grid differs from the operator grid".into(),
            ));
        }
        Ok(())
    }

    pub fn apply_b(&self, f: &Field) -> Result<Field> {
        self.check(f)?;
        let n = self.grid.len();
        let mut out = Field::zeros(self.grid);
        if self.is_zero() {
            return Ok(out);
        }
        let v = f.values();
        for (i, o) in out.values_mut().iter_mut().enumerate() {
            let row = &self.weights[i * n..(i + 1) * n];
            *o = row.iter().zip(v).map(|(w, x)| w * x).sum();
        }
        Ok(out)
    }

    /// Derivative of `B` at `base` applied to `w`. The convolution is
    /// linear, so the base point does not enter.
    pub fn apply_db(&self, base: &Field, w: &Field) -> Result<Field> {
        self.check(base)?;
        self.apply_b(w)
    }

    /// Adjoint of the derivative with respect to the cell-volume weighted
    /// inner product: `(DB* v)_j = sum_i vol_i v_i w(i, j) / vol_j`.
    pub fn apply_db_adjoint(&self, base: &Field, v: &Field) -> Result<Field> {
        self.check(base)?;
        self.check(v)?;
        let n = self.grid.len();
        let mut out = Field::zeros(self.grid);
        if self.is_zero() {
            return Ok(out);
        }
        // uniform cells: the volume factors cancel
        let vals = v.values();
        let o = out.values_mut();
        for (i, &vi) in vals.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = &self.weights[i * n..(i + 1) * n];
            for (oj, w) in o.iter_mut().zip(row) {
                *oj += vi * w;
            }
        }
        Ok(out)
    }

    /// `max_i sum_j |w(i, j)|`, the induced max-norm of the quadrature.
    pub fn row_sum_bound(&self) -> f64 {
        let n = self.grid.len();
        (0..n)
            .map(|i| self.weights[i * n..(i + 1) * n].iter().map(|w| w.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `sum_j max_i |w(i, j)|`
    pub fn column_max_bound(&self) -> f64 {
        let n = self.grid.len();
        (0..n)
            .map(|j| (0..n).map(|i| self.weights[i * n + j].abs()).fold(0.0, f64::max))
            .sum()
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.grid.len();
        (0..n).all(|i| (0..i).all(|j| self.weights[i * n + j] == self.weights[j * n + i]))
    }

    /// Applies `B` snapshot by snapshot.
    pub fn apply_b_trajectory(&self, tr: &Trajectory) -> Result<Trajectory> {
        let snaps = tr
            .snapshots()
            .iter()
            .map(|s| self.apply_b(s))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(*tr.time(), snaps)
    }
}

/// Empirical constants observed by [`check_a3`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct A3Report {
    pub samples: usize,
    /// Smallest `C` with `||B v||_2 <= C (1 + ||v||_2)` over samples.
    pub bound_l2: f64,
    /// Same in the max norm.
    pub bound_max: f64,
    /// Smallest Lipschitz constant in discrete L2(Q) over sample pairs.
    pub lipschitz_l2: f64,
    /// Smallest Lipschitz constant in discrete L^inf(Q) over sample pairs.
    pub lipschitz_max: f64,
    /// Largest `||B v - B w||` over coincident pairs; must vanish.
    pub identical_pair_residual: f64,
    /// Spatial convolution consumes single snapshots, so causality holds.
    pub causal: bool,
    pub row_sum_bound: f64,
    pub column_max_bound: f64,
}

/// Smooth random field: random mean plus a few random cosine modes.
pub fn smooth_random_field<R: Rng>(grid: Grid, rng: &mut R) -> Field {
    let mean: f64 = rng.gen_range(-1.0..1.0);
    let modes: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(-0.3..0.3),
                rng.gen_range(0..4) as f64,
                rng.gen_range(0..4) as f64,
            )
        })
        .collect();
    let (lx, ly) = (grid.length(0), grid.length(1));
    Field::from_fn(grid, |x| {
        mean + modes
            .iter()
            .map(|&(a, kx, ky)| {
                a * (std::f64::consts::PI * kx * x[0] / lx).cos()
                    * (std::f64::consts::PI * ky * x[1] / ly).cos()
            })
            .sum::<f64>()
    })
}

/// Empirically checks the boundedness and Lipschitz conditions on sample
/// trajectory pairs and reports the smallest constants consistent with them.
pub fn check_a3(op: &NonlocalOperator, pairs: &[(Trajectory, Trajectory)]) -> Result<A3Report> {
    let mut report = A3Report {
        samples: pairs.len(),
        causal: true,
        row_sum_bound: op.row_sum_bound(),
        column_max_bound: op.column_max_bound(),
        ..Default::default()
    };
    let norm_q = |tr: &Trajectory, p: f64| {
        let time = tr.time();
        if p.is_infinite() {
            return tr.max_abs();
        }
        (0..time.nodes())
            .map(|n| time.weight(n) * norm_lp(tr.snapshot(n), p).powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    };
    for (v, w) in pairs {
        v.check_same_shape(w)?;
        let bv = op.apply_b_trajectory(v)?;
        let bw = op.apply_b_trajectory(w)?;
        for p in [2.0, f64::INFINITY] {
            let c = norm_q(&bv, p) / (1.0 + norm_q(v, p));
            if p == 2.0 {
                report.bound_l2 = report.bound_l2.max(c);
            } else {
                report.bound_max = report.bound_max.max(c);
            }
            let diff = v.zip_map(w, |a, b| a - b)?;
            let bdiff = bv.zip_map(&bw, |a, b| a - b)?;
            let dn = norm_q(&diff, p);
            let bn = norm_q(&bdiff, p);
            if dn == 0.0 {
                report.identical_pair_residual = report.identical_pair_residual.max(bn);
                continue;
            }
            let lip = bn / dn;
            if p == 2.0 {
                report.lipschitz_l2 = report.lipschitz_l2.max(lip);
            } else {
                report.lipschitz_max = report.lipschitz_max.max(lip);
            }
        }
    }
    Ok(report)
}
