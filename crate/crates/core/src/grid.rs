//! Cell-centered structured grids on rectangles (1D or 2D) with homogeneous
//! Neumann boundary, time grids, fields and trajectories, plus the discrete
//! norms and the Neumann Laplacian used throughout the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform cell-centered grid on `[0, Lx]` or `[0, Lx] x [0, Ly]`.
///
/// Cells are stored x-fastest: `index = i + nx * j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    lengths: [f64; 2],
    cells: [usize; 2],
}

impl Grid {
    pub fn new_1d(length: f64, cells: usize) -> Result<Self> {
        Self::build(1, [length, 1.0], [cells, 1])
    }

    pub fn new_2d(lx: f64, nx: usize, ly: f64, ny: usize) -> Result<Self> {
        Self::build(2, [lx, ly], [nx, ny])
    }

    fn build(dim: usize, lengths: [f64; 2], cells: [usize; 2]) -> Result<Self> {
        for axis in 0..dim {
            if !(lengths[axis].is_finite() && lengths[axis] > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} length must be positive, got {}",
                    lengths[axis]
                )));
            }
            if cells[axis] < 2 {
                return Err(Error::GridTooSmall {
                    axis,
                    cells: cells[axis],
                });
            }
        }
        Ok(Self {
            dim,
            lengths,
            cells,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.lengths[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.cells[axis] as f64
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|a| self.lengths[a]).product()
    }

    /// Euclidean diameter of the rectangle.
    pub fn diameter(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.lengths[a] * self.lengths[a])
            .sum::<f64>()
            .sqrt()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.cells[0] * j
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.cells[0], index / self.cells[0])
    }

    /// Cell center; the second component is 0 in 1D.
    pub fn center(&self, index: usize) -> [f64; 2] {
        let (i, j) = self.coords(index);
        let x = (i as f64 + 0.5) * self.spacing(0);
        let y = if self.dim == 2 {
            (j as f64 + 0.5) * self.spacing(1)
        } else {
            0.0
        };
        [x, y]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let pa = self.center(a);
        let pb = self.center(b);
        ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt()
    }
}

/// Uniform time grid `t_n = n T / nt`, `n = 0..=nt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "final time must be positive, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("time step count must be >= 1".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn tau(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.horizon / self.steps as f64
        }
    }

    /// Trapezoidal quadrature weight of node `n`.
    pub fn weight(&self, n: usize) -> f64 {
        if n == 0 || n == self.steps {
            0.5 * self.tau()
        } else {
            self.tau()
        }
    }
}

/// One real value per grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "field has {} values but grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.center(k))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::ShapeMismatch("fields live on different grids".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete integral `sum f vol`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.check_same_grid(other)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: f64, other: &Field) -> Result<()> {
        self.check_same_grid(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }
}

/// `nt + 1` snapshots of a field on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    time: TimeGrid,
    snapshots: Vec<Field>,
}

impl Trajectory {
    pub fn new(time: TimeGrid, snapshots: Vec<Field>) -> Result<Self> {
        if snapshots.len() != time.nodes() {
            return Err(Error::ShapeMismatch(format!(
                "trajectory needs {} snapshots, got {}",
                time.nodes(),
                snapshots.len()
            )));
        }
        let grid = *snapshots[0].grid();
        if snapshots.iter().any(|s| *s.grid() != grid) {
            return Err(Error::ShapeMismatch(
                "trajectory snapshots live on different grids".into(),
            ));
        }
        Ok(Self { time, snapshots })
    }

    pub fn constant(grid: Grid, time: TimeGrid, c: f64) -> Self {
        Self::repeat(time, &Field::constant(grid, c))
    }

    pub fn zeros(grid: Grid, time: TimeGrid) -> Self {
        Self::constant(grid, time, 0.0)
    }

    /// Constant-in-time trajectory.
    pub fn repeat(time: TimeGrid, field: &Field) -> Self {
        Self {
            time,
            snapshots: vec![field.clone(); time.nodes()],
        }
    }

    /// Samples `f(x, t)` at cell centers and time nodes.
    pub fn from_fn(grid: Grid, time: TimeGrid, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let snapshots = (0..time.nodes())
            .map(|n| {
                let t = time.time(n);
                Field::from_fn(grid, |x| f(x, t))
            })
            .collect();
        Self { time, snapshots }
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn grid(&self) -> &Grid {
        self.snapshots[0].grid()
    }

    pub fn snapshot(&self, n: usize) -> &Field {
        &self.snapshots[n]
    }

    pub fn snapshot_mut(&mut self, n: usize) -> &mut Field {
        &mut self.snapshots[n]
    }

    pub fn snapshots(&self) -> &[Field] {
        &self.snapshots
    }

    pub fn check_same_shape(&self, other: &Trajectory) -> Result<()> {
        if self.time != other.time || self.grid() != other.grid() {
            return Err(Error::ShapeMismatch(
                "trajectories have different grids or time grids".into(),
            ));
        }
        Ok(())
    }

    pub fn reversed(&self) -> Trajectory {
        let mut snapshots = self.snapshots.clone();
        snapshots.reverse();
        Self {
            time: self.time,
            snapshots,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Copy) -> Trajectory {
        Self {
            time: self.time,
            snapshots: self.snapshots.iter().map(|s| s.map(f)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Trajectory, f: impl Fn(f64, f64) -> f64 + Copy) -> Result<Trajectory> {
        self.check_same_shape(other)?;
        let snapshots = self
            .snapshots
            .iter()
            .zip(&other.snapshots)
            .map(|(a, b)| a.zip_map(b, f))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            time: self.time,
            snapshots,
        })
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: f64, other: &Trajectory) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.snapshots.iter_mut().zip(&other.snapshots) {
            a.add_scaled(s, b)?;
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Trajectory {
        self.map(|v| s * v)
    }

    pub fn min(&self) -> f64 {
        self.snapshots.iter().map(Field::min).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.snapshots
            .iter()
            .map(Field::max)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.snapshots.iter().map(Field::max_abs).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.snapshots.iter().all(Field::is_finite)
    }
}

/// Second-order Neumann Laplacian with ghost-cell reflection.
pub fn laplacian_neumann(f: &Field) -> Result<Field> {
    let grid = *f.grid();
    for axis in 0..grid.dim() {
        if grid.cells(axis) < 2 {
            return Err(Error::GridTooSmall {
                axis,
                cells: grid.cells(axis),
            });
        }
    }
    let mut out = Field::zeros(grid);
    let v = f.values();
    let (nx, ny) = (grid.cells(0), grid.cells(1));
    let ihx2 = 1.0 / grid.spacing(0).powi(2);
    let ihy2 = if grid.dim() == 2 {
        1.0 / grid.spacing(1).powi(2)
    } else {
        0.0
    };
    let o = out.values_mut();
    for j in 0..ny {
        for i in 0..nx {
            let k = i + nx * j;
            let c = v[k];
            // ghost reflection: a missing neighbour takes the centre value
            let w = if i > 0 { v[k - 1] } else { c };
            let e = if i + 1 < nx { v[k + 1] } else { c };
            let mut acc = (w - 2.0 * c + e) * ihx2;
            if grid.dim() == 2 {
                let s = if j > 0 { v[k - nx] } else { c };
                let n = if j + 1 < ny { v[k + nx] } else { c };
                acc += (s - 2.0 * c + n) * ihy2;
            }
            o[k] = acc;
        }
    }
    Ok(out)
}

/// Discrete Dirichlet energy `sum over interior faces |grad f|^2 vol`.
///
/// Satisfies `gradient_energy(f) = -inner_product(laplacian_neumann(f), f)`.
pub fn gradient_energy(f: &Field) -> f64 {
    let grid = f.grid();
    let v = f.values();
    let (nx, ny) = (grid.cells(0), grid.cells(1));
    let vol = grid.cell_volume();
    let ihx2 = 1.0 / grid.spacing(0).powi(2);
    let mut acc = 0.0;
    for j in 0..ny {
        for i in 0..nx - 1 {
            let k = i + nx * j;
            acc += (v[k + 1] - v[k]).powi(2) * ihx2;
        }
    }
    if grid.dim() == 2 {
        let ihy2 = 1.0 / grid.spacing(1).powi(2);
        for j in 0..ny - 1 {
            for i in 0..nx {
                let k = i + nx * j;
                acc += (v[k + nx] - v[k]).powi(2) * ihy2;
            }
        }
    }
    acc * vol
}

/// Discrete H1 seminorm (diagnostic only).
pub fn h1_seminorm(f: &Field) -> f64 {
    gradient_energy(f).sqrt()
}

pub fn inner_product(f: &Field, g: &Field) -> Result<f64> {
    f.check_same_grid(g)?;
    let s: f64 = f.values().iter().zip(g.values()).map(|(a, b)| a * b).sum();
    Ok(s * f.grid().cell_volume())
}

pub fn norm_l2(f: &Field) -> f64 {
    let s: f64 = f.values().iter().map(|a| a * a).sum();
    (s * f.grid().cell_volume()).sqrt()
}

/// Discrete L^p norm over the domain; `p = inf` gives the max norm.
pub fn norm_lp(f: &Field, p: f64) -> f64 {
    if p.is_infinite() {
        return f.max_abs();
    }
    let s: f64 = f.values().iter().map(|a| a.abs().powf(p)).sum();
    (s * f.grid().cell_volume()).powf(1.0 / p)
}

/// Space-time inner product with trapezoidal weights in time.
pub fn inner_product_q(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    a.check_same_shape(b)?;
    let time = a.time();
    let mut acc = 0.0;
    for n in 0..time.nodes() {
        acc += time.weight(n) * inner_product(a.snapshot(n), b.snapshot(n))?;
    }
    Ok(acc)
}

pub fn norm_l2_q(tr: &Trajectory) -> f64 {
    norm_lp_q(tr, 2.0)
}

/// Discrete L^p(Q) norm, trapezoidal in time; `p = inf` gives the max norm.
pub fn norm_lp_q(tr: &Trajectory, p: f64) -> f64 {
    if p.is_infinite() {
        return tr.max_abs();
    }
    let time = tr.time();
    let vol = tr.grid().cell_volume();
    let mut acc = 0.0;
    for n in 0..time.nodes() {
        let s: f64 = tr.snapshot(n).values().iter().map(|a| a.abs().powf(p)).sum();
        acc += time.weight(n) * s * vol;
    }
    acc.powf(1.0 / p)
}

/// Backward differences `(f^n - f^{n-1}) / tau`, `n = 1..=nt`, integrated
/// with the rectangle rule over each interval; returns the L^p(Q) norm of
/// the discrete time derivative.
pub fn time_derivative_norm(tr: &Trajectory, p: f64) -> f64 {
    let time = tr.time();
    let tau = time.tau();
    let vol = tr.grid().cell_volume();
    let mut acc: f64 = 0.0;
    for n in 1..time.nodes() {
        let a = tr.snapshot(n).values();
        let b = tr.snapshot(n - 1).values();
        if p.is_infinite() {
            for (x, y) in a.iter().zip(b) {
                acc = acc.max(((x - y) / tau).abs());
            }
        } else {
            let s: f64 = a.iter().zip(b).map(|(x, y)| ((x - y) / tau).abs().powf(p)).sum();
            acc += tau * s * vol;
        }
    }
    if p.is_infinite() {
        acc
    } else {
        acc.powf(1.0 / p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_volumes_sum_to_measure() {
        let g = Grid::new_2d(1.5, 7, 0.3, 11).unwrap();
        let total = g.cell_volume() * g.len() as f64;
        assert!((total - g.measure()).abs() <= 1e-12 * g.measure());
    }

    #[test]
    fn rejects_single_cell_axis() {
        assert!(matches!(
            Grid::new_1d(1.0, 1),
            Err(Error::GridTooSmall { axis: 0, cells: 1 })
        ));
        assert!(Grid::new_2d(1.0, 4, 1.0, 1).is_err());
        assert!(Grid::new_1d(0.0, 4).is_err());
    }

    #[test]
    fn final_time_is_exact() {
        let t = TimeGrid::new(0.7, 3).unwrap();
        assert_eq!(t.time(3), 0.7);
        assert_eq!(t.time(0), 0.0);
        let w: f64 = (0..t.nodes()).map(|n| t.weight(n)).sum();
        assert!((w - 0.7).abs() < 1e-15);
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = Grid::new_2d(1.0, 5, 2.0, 4).unwrap();
        let f = Field::constant(g, 3.25);
        assert!(laplacian_neumann(&f).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_of_linear_index_on_five_cells() {
        // f_i = i, h = 1/5: interior stencil cancels, the boundary sees the
        // mirrored ghost value, giving (f_1 - f_0)/h^2 = 25 and -(f_4 - f_3)/h^2.
        let g = Grid::new_1d(1.0, 5).unwrap();
        let f = Field::from_values(g, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let lap = laplacian_neumann(&f).unwrap();
        let expected = [25.0, 0.0, 0.0, 0.0, -25.0];
        for (a, b) in lap.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn inner_products_and_norms() {
        let g = Grid::new_1d(1.0, 10).unwrap();
        let one = Field::constant(g, 1.0);
        assert!((inner_product(&one, &one).unwrap() - 1.0).abs() < 1e-15);
        let f = Field::from_fn(g, |x| x[0].sin());
        assert!((inner_product(&f, &f).unwrap() - norm_l2(&f).powi(2)).abs() < 1e-15);

        let t = TimeGrid::new(2.0, 8).unwrap();
        let tr = Trajectory::constant(g, t, 3.0);
        assert!((norm_l2_q(&tr) - 3.0 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = Field::zeros(Grid::new_1d(1.0, 4).unwrap());
        let b = Field::zeros(Grid::new_1d(1.0, 5).unwrap());
        assert!(matches!(inner_product(&a, &b), Err(Error::ShapeMismatch(_))));
        assert!(Field::from_values(*a.grid(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn gradient_energy_matches_laplacian_pairing() {
        let g = Grid::new_2d(1.0, 6, 1.0, 5).unwrap();
        let f = Field::from_fn(g, |x| (3.0 * x[0]).cos() + x[1] * x[1]);
        let lap = laplacian_neumann(&f).unwrap();
        let pairing = -inner_product(&lap, &f).unwrap();
        assert!((pairing - gradient_energy(&f)).abs() < 1e-10 * pairing.abs());
    }
}
