//! Forward solvers for the state system, both at a deep-quench level
//! `alpha > 0` and for the double obstacle (`alpha = 0`).
//!
//! Each step first updates the order parameter pointwise, implicit only in
//! the maximal monotone term, then the chemical potential through one SPD
//! linear solve:
//!
//! ```text
//! b        = rho^n + tau (mu^n g'(rho^n) - F'(rho^n) - B[rho^n])
//! rho^{n+1} = resolvent(b)
//! [ (1 + 2 g(rho^{n+1}))/tau + g'(rho^{n+1}) (rho^{n+1} - rho^n)/tau - Lap ] mu^{n+1}
//!          = (1 + 2 g(rho^{n+1})) mu^n / tau + u^n
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    gradient_energy, inner_product, norm_l2, norm_lp_q, time_derivative_norm, Field, Trajectory,
};
use crate::linalg::{solve_shifted_laplacian, CgOptions};
use crate::nonlocal::NonlocalOperator;
use crate::physics::{
    h_prime, resolvent_obstacle, resolvent_quench, Level, PotentialConfig, RHO_FLOOR,
};

/// Model data shared by the forward and adjoint solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub potential: PotentialConfig,
    pub cg: CgOptions,
    /// Lower clamp for the zeroth-order coefficient of the mu-solve.
    pub coefficient_floor: f64,
}

impl Default for Model {
    fn default() -> Self {
        Self {
            potential: PotentialConfig::default(),
            cg: CgOptions::default(),
            coefficient_floor: 1e-8,
        }
    }
}

/// Initial data with `0 < rho0 < 1` and `mu0 >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    rho0: Field,
    mu0: Field,
}

impl InitialData {
    pub fn new(rho0: Field, mu0: Field) -> Result<Self> {
        rho0.check_same_grid(&mu0)?;
        if !(rho0.is_finite() && mu0.is_finite()) {
            return Err(Error::Assumption {
                tag: "A2",
                message: "initial data must be finite".into(),
            });
        }
        if !(rho0.min() > 0.0 && rho0.max() < 1.0) {
            return Err(Error::Assumption {
                tag: "A2",
                message: format!(
                    "initial order parameter must satisfy inf > 0 and sup < 1, got [{}, {}]",
                    rho0.min(),
                    rho0.max()
                ),
            });
        }
        if mu0.min() < 0.0 {
            return Err(Error::Assumption {
                tag: "A2",
                message: format!("initial chemical potential must be >= 0, got min {}", mu0.min()),
            });
        }
        Ok(Self { rho0, mu0 })
    }

    pub fn rho0(&self) -> &Field {
        &self.rho0
    }

    pub fn mu0(&self) -> &Field {
        &self.mu0
    }
}

/// Multiplier recovered from a quench step.
///
/// Uses `phi h'(rho)` while `rho` is resolved in double precision and the
/// equation residual `(b - rho)/tau` once the root is pinned at the edge of
/// the representable interval; both agree at resolvable roots.
fn quench_multiplier(b: f64, rho: f64, phi: f64, tau: f64) -> f64 {
    if rho > RHO_FLOOR && 1.0 - rho > 1e-10 {
        phi * (rho / (1.0 - rho)).ln()
    } else {
        (b - rho) / tau
    }
}

/// Explicit argument `b` of the pointwise resolvent.
pub fn rho_predictor(
    rho_n: &Field,
    mu_n: &Field,
    tau: f64,
    model: &Model,
    op: &NonlocalOperator,
) -> Result<Field> {
    rho_n.check_same_grid(mu_n)?;
    let b_rho = op.apply_b(rho_n)?;
    let pot = &model.potential;
    let mut b = rho_n.clone();
    for ((bv, (&r, &m)), &br) in b
        .values_mut()
        .iter_mut()
        .zip(rho_n.values().iter().zip(mu_n.values()))
        .zip(b_rho.values())
    {
        *bv = r + tau * (m * pot.g_prime(r) - pot.f_prime(r) - br);
    }
    Ok(b)
}

/// One order-parameter step; returns `(rho^{n+1}, xi^{n+1})`.
pub fn step_rho(
    rho_n: &Field,
    mu_n: &Field,
    level: Level,
    tau: f64,
    model: &Model,
    op: &NonlocalOperator,
) -> Result<(Field, Field)> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {tau}")));
    }
    let b = rho_predictor(rho_n, mu_n, tau, model, op)?;
    let grid = *rho_n.grid();
    let mut rho = Field::zeros(grid);
    let mut xi = Field::zeros(grid);
    match level {
        Level::Quench(q) => {
            let s = tau * q.phi();
            for ((r, x), &bv) in rho
                .values_mut()
                .iter_mut()
                .zip(xi.values_mut())
                .zip(b.values())
            {
                *r = resolvent_quench(bv, s)?;
                *x = quench_multiplier(bv, *r, q.phi(), tau);
            }
        }
        Level::Obstacle => {
            for ((r, x), &bv) in rho
                .values_mut()
                .iter_mut()
                .zip(xi.values_mut())
                .zip(b.values())
            {
                (*r, *x) = resolvent_obstacle(bv, tau);
            }
        }
    }
    Ok((rho, xi))
}

/// Zeroth-order coefficient of the mu-solve.
pub struct MuCoefficient {
    /// Coefficient after clamping at the floor.
    pub value: Field,
    pub clamped: Vec<bool>,
    /// Smallest coefficient before clamping.
    pub raw_min: f64,
}

pub fn mu_coefficient(rho_n: &Field, rho_np1: &Field, tau: f64, model: &Model) -> Result<MuCoefficient> {
    rho_n.check_same_grid(rho_np1)?;
    let pot = &model.potential;
    let mut value = rho_np1.zip_map(rho_n, |r1, r0| {
        (1.0 + 2.0 * pot.g(r1)) / tau + pot.g_prime(r1) * (r1 - r0) / tau
    })?;
    let raw_min = value.min();
    let mut clamped = vec![false; rho_n.len()];
    for (c, flag) in value.values_mut().iter_mut().zip(clamped.iter_mut()) {
        if !(*c >= model.coefficient_floor) {
            *c = model.coefficient_floor;
            *flag = true;
        }
    }
    Ok(MuCoefficient {
        value,
        clamped,
        raw_min,
    })
}

#[derive(Clone, Debug)]
pub struct MuStep {
    pub mu: Field,
    pub clamped_cells: usize,
    pub min_coefficient: f64,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// One chemical-potential step with `source` as the right-hand control.
pub fn step_mu(
    mu_n: &Field,
    rho_n: &Field,
    rho_np1: &Field,
    source: &Field,
    tau: f64,
    model: &Model,
) -> Result<MuStep> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {tau}")));
    }
    mu_n.check_same_grid(rho_n)?;
    mu_n.check_same_grid(source)?;
    let coef = mu_coefficient(rho_n, rho_np1, tau, model)?;
    let pot = &model.potential;
    let mut rhs = Field::zeros(*mu_n.grid());
    for (((r, &m), &r1), &u) in rhs
        .values_mut()
        .iter_mut()
        .zip(mu_n.values())
        .zip(rho_np1.values())
        .zip(source.values())
    {
        *r = (1.0 + 2.0 * pot.g(r1)) * m / tau + u;
    }
    let sol = solve_shifted_laplacian(&coef.value, &rhs, mu_n, &model.cg)?;
    Ok(MuStep {
        mu: sol.x,
        clamped_cells: coef.clamped.iter().filter(|&&c| c).count(),
        min_coefficient: coef.raw_min,
        iterations: sol.iterations,
        relative_residual: sol.relative_residual,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateDiagnostics {
    pub alpha: f64,
    pub min_mu: f64,
    pub max_mu: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    /// `||xi||` in discrete L6(Q); `xi = phi(alpha) h'(rho)` for `alpha > 0`.
    pub xi_l6: f64,
    pub energy_residual: f64,
    /// Cells where the mu-coefficient hit the floor, summed over steps.
    pub clamped_coefficients: usize,
    pub min_coefficient: f64,
    pub max_cg_iterations: usize,
    pub worst_cg_residual: f64,
    /// `min mu < -1e-10` although `u >= 0` and `mu0 >= 0`.
    pub negative_mu_violation: bool,
    /// `rho` left `(0, 1)` at a quench level or `[0, 1]` at the obstacle.
    pub rho_bound_violation: bool,
    /// Obstacle multiplier outside the subdifferential somewhere.
    pub sign_violation: bool,
}

/// Solution `(mu, rho, xi)` of the forward problem.
#[derive(Clone, Debug)]
pub struct StateSolution {
    pub mu: Trajectory,
    pub rho: Trajectory,
    pub xi: Trajectory,
    pub level: Level,
    pub diagnostics: StateDiagnostics,
}

impl StateSolution {
    /// True when no invariant flag was raised.
    pub fn invariants_hold(&self) -> bool {
        let d = &self.diagnostics;
        !(d.negative_mu_violation || d.rho_bound_violation || d.sign_violation)
    }
}

/// Marches the state system over the time grid of `u`.
pub fn solve_state(
    u: &Trajectory,
    level: Level,
    init: &InitialData,
    model: &Model,
    op: &NonlocalOperator,
) -> Result<StateSolution> {
    let time = *u.time();
    let grid = *u.grid();
    init.rho0().check_same_grid(u.snapshot(0))?;
    let tau = time.tau();
    let mut mus = Vec::with_capacity(time.nodes());
    let mut rhos = Vec::with_capacity(time.nodes());
    let mut xis = Vec::with_capacity(time.nodes());
    mus.push(init.mu0().clone());
    rhos.push(init.rho0().clone());
    xis.push(match level {
        Level::Quench(q) => init.rho0().map(|r| q.phi() * h_prime(r).unwrap_or(0.0)),
        Level::Obstacle => Field::zeros(grid),
    });
    let mut diag = StateDiagnostics {
        alpha: level.alpha(),
        min_coefficient: f64::INFINITY,
        ..Default::default()
    };
    for n in 0..time.steps() {
        let (rho1, xi1) = step_rho(&rhos[n], &mus[n], level, tau, model, op)?;
        let step = step_mu(&mus[n], &rhos[n], &rho1, u.snapshot(n), tau, model)?;
        diag.clamped_coefficients += step.clamped_cells;
        diag.min_coefficient = diag.min_coefficient.min(step.min_coefficient);
        diag.max_cg_iterations = diag.max_cg_iterations.max(step.iterations);
        diag.worst_cg_residual = diag.worst_cg_residual.max(step.relative_residual);
        rhos.push(rho1);
        xis.push(xi1);
        mus.push(step.mu);
    }
    let mu = Trajectory::new(time, mus)?;
    let rho = Trajectory::new(time, rhos)?;
    let xi = Trajectory::new(time, xis)?;
    diag.min_mu = mu.min();
    diag.max_mu = mu.max();
    diag.min_rho = rho.min();
    diag.max_rho = rho.max();
    diag.xi_l6 = norm_lp_q(&xi, 6.0);
    diag.negative_mu_violation = u.min() >= 0.0 && diag.min_mu < -1e-10;
    diag.rho_bound_violation = match level {
        Level::Quench(_) => !(diag.min_rho > 0.0 && diag.max_rho < 1.0),
        Level::Obstacle => !(diag.min_rho >= 0.0 && diag.max_rho <= 1.0),
    };
    if level == Level::Obstacle {
        diag.sign_violation = rho
            .snapshots()
            .iter()
            .zip(xi.snapshots())
            .any(|(r, x)| {
                r.values()
                    .iter()
                    .zip(x.values())
                    .any(|(&r, &x)| !crate::physics::in_obstacle_subdifferential(r, x))
            });
    }
    let mut sol = StateSolution {
        mu,
        rho,
        xi,
        level,
        diagnostics: diag,
    };
    sol.diagnostics.energy_residual = energy_residual(&sol, u, model)?.max;
    Ok(sol)
}

/// Both sides of the energy identity and their relative mismatch per node.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyResidual {
    /// `int (1/2 + g(rho(t))) mu(t)^2 + int_0^t int |grad mu|^2`
    pub lhs: Vec<f64>,
    /// `int (1/2 + g(rho0)) mu0^2 + int_0^t int u mu`
    pub rhs: Vec<f64>,
    pub relative: Vec<f64>,
    pub max: f64,
}

/// Evaluates the energy identity obtained by testing the mu-equation with
/// `mu`, using discrete gradients and trapezoidal time integrals.
pub fn energy_residual(sol: &StateSolution, u: &Trajectory, model: &Model) -> Result<EnergyResidual> {
    sol.mu.check_same_shape(u)?;
    let time = *u.time();
    let pot = &model.potential;
    let stored = |n: usize| -> Result<f64> {
        let w = sol.rho.snapshot(n).map(|r| 0.5 + pot.g(r));
        let m2 = sol.mu.snapshot(n).map(|m| m * m);
        inner_product(&w, &m2)
    };
    let grad: Vec<f64> = sol.mu.snapshots().iter().map(gradient_energy).collect();
    let work: Vec<f64> = sol
        .mu
        .snapshots()
        .iter()
        .zip(u.snapshots())
        .map(|(m, v)| inner_product(m, v))
        .collect::<Result<_>>()?;
    let e0 = stored(0)?;
    let mut out = EnergyResidual::default();
    let (mut g_acc, mut w_acc) = (0.0, 0.0);
    let tau = time.tau();
    for n in 0..time.nodes() {
        if n > 0 {
            g_acc += 0.5 * tau * (grad[n - 1] + grad[n]);
            w_acc += 0.5 * tau * (work[n - 1] + work[n]);
        }
        let lhs = stored(n)? + g_acc;
        let rhs = e0 + w_acc;
        let scale = lhs.abs().max(rhs.abs());
        let rel = if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale };
        out.lhs.push(lhs);
        out.rhs.push(rhs);
        out.relative.push(rel);
        out.max = out.max.max(rel);
    }
    Ok(out)
}

/// Discrete analogues of the quantities in the uniform a priori bound.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    /// `(||mu||^2 + ||mu_t||^2)^{1/2}` in L2(Q)
    pub mu_h1_time: f64,
    /// `max_t ||mu(t)||_{H1}`
    pub mu_linf_h1: f64,
    pub mu_max: f64,
    /// `(||rho||^6 + ||rho_t||^6)^{1/6}` in L6(Q)
    pub rho_w16: f64,
    pub xi_l6: f64,
    /// `int int phi |grad rho|^2 / (rho (1 - rho))`; absent at the obstacle.
    pub weighted_gradient: Option<f64>,
    pub rho_lower: f64,
    pub rho_upper: f64,
}

pub fn apriori_report(sol: &StateSolution) -> AprioriReport {
    let mu_l2 = norm_lp_q(&sol.mu, 2.0);
    let mu_t = time_derivative_norm(&sol.mu, 2.0);
    let mu_linf_h1 = sol
        .mu
        .snapshots()
        .iter()
        .map(|m| (norm_l2(m).powi(2) + gradient_energy(m)).sqrt())
        .fold(0.0, f64::max);
    let rho_l6 = norm_lp_q(&sol.rho, 6.0);
    let rho_t6 = time_derivative_norm(&sol.rho, 6.0);
    let weighted_gradient = match sol.level {
        Level::Quench(q) => Some(weighted_gradient_integral(&sol.rho, q.phi())),
        Level::Obstacle => None,
    };
    AprioriReport {
        mu_h1_time: (mu_l2 * mu_l2 + mu_t * mu_t).sqrt(),
        mu_linf_h1,
        mu_max: sol.mu.max_abs(),
        rho_w16: (rho_l6.powi(6) + rho_t6.powi(6)).powf(1.0 / 6.0),
        xi_l6: norm_lp_q(&sol.xi, 6.0),
        weighted_gradient,
        rho_lower: sol.rho.min(),
        rho_upper: sol.rho.max(),
    }
}

fn weighted_gradient_integral(rho: &Trajectory, phi: f64) -> f64 {
    let time = rho.time();
    let grid = *rho.grid();
    let vol = grid.cell_volume();
    let (nx, ny) = (grid.cells(0), grid.cells(1));
    let face = |a: f64, b: f64, h: f64| {
        let m = 0.5 * (a + b);
        ((b - a) / h).powi(2) / (m * (1.0 - m))
    };
    let mut acc = 0.0;
    for n in 0..time.nodes() {
        let v = rho.snapshot(n).values();
        let mut s = 0.0;
        for j in 0..ny {
            for i in 0..nx - 1 {
                let k = i + nx * j;
                s += face(v[k], v[k + 1], grid.spacing(0));
            }
        }
        if grid.dim() == 2 {
            for j in 0..ny - 1 {
                for i in 0..nx {
                    let k = i + nx * j;
                    s += face(v[k], v[k + nx], grid.spacing(1));
                }
            }
        }
        acc += time.weight(n) * s * vol;
    }
    phi * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, TimeGrid};
    use crate::nonlocal::Kernel;
    use crate::physics::{Coupling, SmoothPotential};

    fn flat_model(coupling: Coupling) -> Model {
        Model {
            potential: PotentialConfig::new(SmoothPotential::ConcaveQuadratic { c: 0.0 }, coupling, 1.0)
                .unwrap(),
            ..Default::default()
        }
    }

    #[test]
    fn initial_data_assumption() {
        let g = Grid::new_1d(1.0, 4).unwrap();
        let e = InitialData::new(Field::constant(g, 1.0), Field::zeros(g)).unwrap_err();
        assert!(e.to_string().contains("(A2)"));
        let e = InitialData::new(Field::constant(g, 0.5), Field::constant(g, -1.0)).unwrap_err();
        assert!(e.to_string().contains("(A2)"));
    }

    #[test]
    fn symmetric_point_is_stationary() {
        let g = Grid::new_1d(1.0, 8).unwrap();
        let op = NonlocalOperator::new(Kernel::Zero, g).unwrap();
        let model = flat_model(Coupling::Linear);
        let rho = Field::constant(g, 0.5);
        let mu = Field::zeros(g);
        for level in [Level::from_alpha(0.3, 1.0).unwrap(), Level::Obstacle] {
            let (r, x) = step_rho(&rho, &mu, level, 0.01, &model, &op).unwrap();
            assert_eq!(r, rho);
            assert!(x.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn obstacle_step_returns_multiplier() {
        let g = Grid::new_1d(1.0, 4).unwrap();
        let op = NonlocalOperator::new(Kernel::Zero, g).unwrap();
        let model = flat_model(Coupling::Linear);
        // g' = 1, so b = rho + tau mu
        let rho = Field::constant(g, 0.5);
        let tau = 0.1;
        let mu = Field::from_values(g, vec![0.0, 8.0, 0.0, 0.0]).unwrap();
        let (r, x) = step_rho(&rho, &mu, Level::Obstacle, tau, &model, &op).unwrap();
        assert_eq!(r.values()[1], 1.0);
        assert!((x.values()[1] - 0.3 / tau).abs() < 1e-12);
        assert_eq!(r.values()[0], 0.5);
    }

    #[test]
    fn zero_data_gives_zero_mu() {
        let g = Grid::new_1d(1.0, 16).unwrap();
        let model = flat_model(Coupling::Linear);
        let r0 = Field::from_fn(g, |x| 0.3 + 0.2 * x[0]);
        let r1 = Field::from_fn(g, |x| 0.35 + 0.1 * x[0]);
        let z = Field::zeros(g);
        let s = step_mu(&z, &r0, &r1, &z, 0.01, &model).unwrap();
        assert!(s.mu.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decoupled_constant_is_preserved() {
        let g = Grid::new_1d(1.0, 16).unwrap();
        let model = flat_model(Coupling::Zero);
        let r = Field::constant(g, 0.4);
        let mu = Field::constant(g, 2.5);
        let s = step_mu(&mu, &r, &r, &Field::zeros(g), 0.01, &model).unwrap();
        for v in s.mu.values() {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn floor_clamps_nonpositive_coefficient() {
        let g = Grid::new_1d(1.0, 4).unwrap();
        let model = Model {
            potential: PotentialConfig::new(
                SmoothPotential::ConcaveQuadratic { c: 0.0 },
                Coupling::Quadratic,
                1.0,
            )
            .unwrap(),
            ..Default::default()
        };
        // g'(r1)(r1 - r0) = 2 * (-0.9) overwhelms 1 + 2 g(0) = 1
        let r0 = Field::constant(g, 0.95);
        let r1 = Field::constant(g, 0.0);
        let coef = mu_coefficient(&r0, &r1, 1.0, &model).unwrap();
        assert!(coef.clamped.iter().all(|&c| c));
        assert!(coef.raw_min < 0.0);
        assert!(coef.value.values().iter().all(|&c| c == model.coefficient_floor));
    }

    #[test]
    fn trivial_state_is_invariant() {
        let g = Grid::new_1d(1.0, 8).unwrap();
        let t = TimeGrid::new(1.0, 20).unwrap();
        let op = NonlocalOperator::new(Kernel::Zero, g).unwrap();
        let model = flat_model(Coupling::Linear);
        let init = InitialData::new(Field::constant(g, 0.5), Field::zeros(g)).unwrap();
        let u = Trajectory::zeros(g, t);
        let sol = solve_state(&u, Level::Obstacle, &init, &model, &op).unwrap();
        assert_eq!(sol.mu.max_abs(), 0.0);
        assert!(sol.rho.snapshots().iter().all(|s| s.values().iter().all(|&v| v == 0.5)));
        let e = energy_residual(&sol, &u, &model).unwrap();
        assert_eq!(e.max, 0.0);
        let rep = apriori_report(&sol);
        assert_eq!(rep.mu_h1_time, 0.0);
        assert_eq!(rep.xi_l6, 0.0);
    }
}
