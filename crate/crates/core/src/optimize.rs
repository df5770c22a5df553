//! Tracking cost, admissible controls, the reduced gradient and the
//! projected-gradient / deep-quench continuation optimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::{concentration_metric, solve_adjoint, AdjointDiagnostics, AdjointSolution, ConcentrationMetric};
use crate::error::{Error, Result};
use crate::grid::{inner_product_q, norm_l2_q, time_derivative_norm, Field, Trajectory};
use crate::nonlocal::NonlocalOperator;
use crate::physics::Level;
use crate::state::{solve_state, InitialData, Model, StateDiagnostics, StateSolution};

/// Tracking weights and targets.
#[derive(Clone, Debug)]
pub struct CostWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub rho_target: Trajectory,
    pub mu_target: Trajectory,
}

impl CostWeights {
    pub fn new(
        beta1: f64,
        beta2: f64,
        beta3: f64,
        rho_target: Trajectory,
        mu_target: Trajectory,
    ) -> Result<Self> {
        for (name, b) in [("beta1", beta1), ("beta2", beta2), ("beta3", beta3)] {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::Assumption {
                    tag: "A4",
                    message: format!("{name} must be finite and >= 0, got {b}"),
                });
            }
        }
        if !(beta1 + beta2 + beta3 > 0.0) {
            return Err(Error::Assumption {
                tag: "A4",
                message: "beta1 + beta2 + beta3 must be positive".into(),
            });
        }
        rho_target.check_same_shape(&mu_target)?;
        if !(rho_target.is_finite() && mu_target.is_finite()) {
            return Err(Error::Assumption {
                tag: "A4",
                message: "targets must be finite".into(),
            });
        }
        Ok(Self {
            beta1,
            beta2,
            beta3,
            rho_target,
            mu_target,
        })
    }

    pub fn check_shape(&self, tr: &Trajectory) -> Result<()> {
        self.rho_target.check_same_shape(tr)
    }
}

/// `U_ad = { 0 <= u <= u_max, ||u||_{H1(0,T;L2)} <= R }`.
#[derive(Clone, Debug)]
pub struct AdmissibleSet {
    pub u_max: Trajectory,
    pub radius: f64,
}

impl AdmissibleSet {
    pub fn new(u_max: Trajectory, radius: f64) -> Result<Self> {
        if !(u_max.is_finite() && u_max.min() >= 0.0) {
            return Err(Error::Assumption {
                tag: "A4",
                message: format!("u_max must be finite and >= 0, got min {}", u_max.min()),
            });
        }
        if !(radius > 0.0) {
            return Err(Error::Assumption {
                tag: "A4",
                message: format!("R must be positive, got {radius}"),
            });
        }
        Ok(Self { u_max, radius })
    }

    pub fn in_box(&self, u: &Trajectory) -> bool {
        u.snapshots().iter().zip(self.u_max.snapshots()).all(|(a, m)| {
            a.values()
                .iter()
                .zip(m.values())
                .all(|(&v, &hi)| (0.0..=hi).contains(&v))
        })
    }

    pub fn within_budget(&self, u: &Trajectory) -> bool {
        h1_time_norm(u) <= self.radius
    }

    pub fn contains(&self, u: &Trajectory) -> bool {
        self.in_box(u) && self.within_budget(u)
    }
}

/// Discrete `||u||_{H1(0,T;L2)}`.
pub fn h1_time_norm(u: &Trajectory) -> f64 {
    let a = norm_l2_q(u);
    let b = time_derivative_norm(u, 2.0);
    (a * a + b * b).sqrt()
}

fn half_sq_dist(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let d = a.zip_map(b, |x, y| x - y)?;
    Ok(0.5 * norm_l2_q(&d).powi(2))
}

pub fn cost_j(state: &StateSolution, u: &Trajectory, w: &CostWeights) -> Result<f64> {
    u.check_same_shape(&state.rho)?;
    w.check_shape(u)?;
    let mut j = 0.0;
    if w.beta1 != 0.0 {
        j += w.beta1 * half_sq_dist(&state.rho, &w.rho_target)?;
    }
    if w.beta2 != 0.0 {
        j += w.beta2 * half_sq_dist(&state.mu, &w.mu_target)?;
    }
    if w.beta3 != 0.0 {
        j += w.beta3 * 0.5 * norm_l2_q(u).powi(2);
    }
    Ok(j)
}

/// `J + 1/2 ||u - anchor||^2`.
pub fn cost_j_adapted(
    state: &StateSolution,
    u: &Trajectory,
    w: &CostWeights,
    anchor: &Trajectory,
) -> Result<f64> {
    Ok(cost_j(state, u, w)? + half_sq_dist(u, anchor)?)
}

/// Pointwise clip to `[0, u_max]`. The H1 budget is monitored, not enforced.
pub fn project_uad(u: &Trajectory, a: &AdmissibleSet) -> Result<Trajectory> {
    u.zip_map(&a.u_max, |v, hi| v.max(0.0).min(hi))
}

/// Everything the optimizer needs besides the control.
#[derive(Clone, Debug)]
pub struct Problem {
    pub model: Model,
    pub op: NonlocalOperator,
    pub init: InitialData,
    pub weights: CostWeights,
    pub admissible: AdmissibleSet,
}

impl Problem {
    pub fn state(&self, u: &Trajectory, level: Level) -> Result<StateSolution> {
        solve_state(u, level, &self.init, &self.model, &self.op)
    }

    /// Plain or adapted cost at `u`, with the state it required.
    pub fn cost(
        &self,
        u: &Trajectory,
        level: Level,
        anchor: Option<&Trajectory>,
    ) -> Result<(f64, StateSolution)> {
        let state = self.state(u, level)?;
        let j = match anchor {
            Some(a) => cost_j_adapted(&state, u, &self.weights, a)?,
            None => cost_j(&state, u, &self.weights)?,
        };
        Ok((j, state))
    }
}

/// Cost, state, adjoint and L2(Q) gradient at one control.
#[derive(Clone, Debug)]
pub struct GradientEval {
    pub cost: f64,
    pub state: StateSolution,
    pub adjoint: AdjointSolution,
    pub gradient: Trajectory,
}

/// `p + beta3 u (+ u - anchor)`, the Riesz representative of the reduced
/// derivative in the discrete L2(Q) inner product.
pub fn reduced_gradient(
    problem: &Problem,
    u: &Trajectory,
    level: Level,
    anchor: Option<&Trajectory>,
) -> Result<GradientEval> {
    if level == Level::Obstacle {
        return Err(Error::Unsupported(
            "the reduced gradient needs a quench level alpha > 0".into(),
        ));
    }
    let (cost, state) = problem.cost(u, level, anchor)?;
    let adjoint = solve_adjoint(&state, &problem.weights, &problem.model, &problem.op)?;
    let beta3 = problem.weights.beta3;
    let mut gradient = adjoint.p.zip_map(u, |p, v| p + beta3 * v)?;
    if let Some(a) = anchor {
        gradient.add_scaled(1.0, &u.zip_map(a, |x, y| x - y)?)?;
    }
    Ok(GradientEval {
        cost,
        state,
        adjoint,
        gradient,
    })
}

/// `||u - P(u - s g)||_{L2(Q)}`
pub fn stationarity_residual(
    u: &Trajectory,
    gradient: &Trajectory,
    step: f64,
    a: &AdmissibleSet,
) -> Result<f64> {
    let trial = u.zip_map(gradient, |v, g| v - step * g)?;
    let proj = project_uad(&trial, a)?;
    Ok(norm_l2_q(&u.zip_map(&proj, |x, y| x - y)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgdOptions {
    /// Stationarity tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for PgdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub cost: f64,
    pub stationarity: f64,
    /// Accepted step; 0 on the final record.
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct PgdResult {
    pub u: Trajectory,
    pub eval: GradientEval,
    pub history: Vec<IterRecord>,
    pub stationarity: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Initial step `s0`: inverse curvature of the decoupled quadratic terms.
pub fn initial_step(beta3: f64, adapted: bool) -> f64 {
    let curvature = beta3 + if adapted { 1.0 } else { 0.0 };
    if curvature > 0.0 {
        1.0 / curvature
    } else {
        1.0
    }
}

/// Projected gradient with Armijo backtracking at a fixed quench level.
pub fn projected_gradient_descent(
    problem: &Problem,
    u0: &Trajectory,
    level: Level,
    anchor: Option<&Trajectory>,
    opts: &PgdOptions,
) -> Result<PgdResult> {
    let a = &problem.admissible;
    if !a.in_box(u0) {
        return Err(Error::Infeasible("initial control is not admissible".into()));
    }
    let s0 = initial_step(problem.weights.beta3, anchor.is_some());
    let mut u = u0.clone();
    let mut eval = reduced_gradient(problem, &u, level, anchor)?;
    let mut history = Vec::new();
    let mut iter = 0;
    loop {
        let res = stationarity_residual(&u, &eval.gradient, s0, a)?;
        if res <= opts.tol || iter >= opts.max_iter {
            history.push(IterRecord {
                iter,
                cost: eval.cost,
                stationarity: res,
                step: 0.0,
            });
            return Ok(PgdResult {
                u,
                eval,
                history,
                stationarity: res,
                converged: res <= opts.tol,
                iterations: iter,
            });
        }
        let mut s = s0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial = project_uad(&u.zip_map(&eval.gradient, |v, g| v - s * g)?, a)?;
            let moved = norm_l2_q(&u.zip_map(&trial, |x, y| x - y)?);
            let (j, _) = problem.cost(&trial, level, anchor)?;
            if j <= eval.cost - opts.armijo * moved * moved / s {
                accepted = Some(trial);
                break;
            }
            s *= opts.backtrack;
        }
        history.push(IterRecord {
            iter,
            cost: eval.cost,
            stationarity: res,
            step: if accepted.is_some() { s } else { 0.0 },
        });
        match accepted {
            Some(next) => {
                u = next;
                eval = reduced_gradient(problem, &u, level, anchor)?;
                iter += 1;
            }
            None => {
                // no sufficient decrease left at double precision
                return Ok(PgdResult {
                    u,
                    eval,
                    history,
                    stationarity: res,
                    converged: false,
                    iterations: iter,
                });
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelSummary {
    pub alpha: f64,
    pub phi: f64,
    pub adapted: bool,
    pub converged: bool,
    pub iterations: usize,
    pub cost: f64,
    pub stationarity: f64,
    /// `||u^{alpha_n} - u^{alpha_{n-1}}||_{L2(Q)}`; absent at level 0.
    pub distance_to_previous: Option<f64>,
    pub adjoint: AdjointDiagnostics,
    pub concentration: ConcentrationMetric,
    pub h1_norm: f64,
    pub within_budget: bool,
}

#[derive(Clone, Debug)]
pub struct LevelResult {
    pub summary: LevelSummary,
    pub u: Trajectory,
    pub history: Vec<IterRecord>,
}

/// Limit diagnostics at the last level and the obstacle state of the final control.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LimitReport {
    pub alpha: f64,
    pub stationarity: f64,
    pub polish_converged: bool,
    pub polish_iterations: usize,
    /// Smallest sampled `int int (p + beta3 u)(v - u)` over admissible `v`.
    pub vi_min: f64,
    pub vi_samples: usize,
    /// `||u - P(-p/beta3)||`, only when `beta3 > 0`.
    pub projection_residual: Option<f64>,
    pub pairing: f64,
    pub concentration: ConcentrationMetric,
    /// Log-log slope of `|concentration|` against `phi` across levels.
    pub concentration_slope: Option<f64>,
    pub obstacle_state: StateDiagnostics,
    pub obstacle_cost: f64,
    pub h1_norm: f64,
    pub within_budget: bool,
}

#[derive(Clone, Debug)]
pub struct OptimizerRun {
    pub levels: Vec<LevelResult>,
    pub limit: LimitReport,
    /// Final control after the plain-cost polish at the last level.
    pub control: Trajectory,
    pub all_converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub pgd: PgdOptions,
    pub vi_samples: usize,
    pub seed: u64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            pgd: PgdOptions::default(),
            vi_samples: 100,
            seed: 42,
        }
    }
}

/// Probe `t / T`, which vanishes at `t = 0`.
pub fn linear_time_probe(like: &Trajectory) -> Trajectory {
    let horizon = like.time().horizon();
    Trajectory::from_fn(*like.grid(), *like.time(), |_, t| t / horizon)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Uniform random admissible controls `v = theta u_max`, `theta ~ U(0, 1)`.
pub fn sample_admissible(a: &AdmissibleSet, rng: &mut impl Rng) -> Result<Trajectory> {
    let snaps: Vec<Field> = a
        .u_max
        .snapshots()
        .iter()
        .map(|m| {
            let vals = m.values().iter().map(|hi| hi * rng.gen_range(0.0..=1.0)).collect();
            Field::from_values(*m.grid(), vals)
        })
        .collect::<Result<_>>()?;
    Trajectory::new(*a.u_max.time(), snaps)
}

/// Smallest `<gradient, v - u>` over `samples` random admissible `v`.
pub fn sampled_vi_min(
    u: &Trajectory,
    gradient: &Trajectory,
    a: &AdmissibleSet,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let v = sample_admissible(a, &mut rng)?;
        let dv = v.zip_map(u, |x, y| x - y)?;
        worst = worst.min(inner_product_q(gradient, &dv)?);
    }
    Ok(worst)
}

fn level_summary(
    level: Level,
    adapted: bool,
    res: &PgdResult,
    previous: Option<&Trajectory>,
    a: &AdmissibleSet,
) -> Result<LevelSummary> {
    let probe = linear_time_probe(&res.u);
    let concentration = concentration_metric(&res.eval.adjoint, &res.eval.state, &probe)?;
    let distance_to_previous = match previous {
        Some(prev) => Some(norm_l2_q(&res.u.zip_map(prev, |x, y| x - y)?)),
        None => None,
    };
    Ok(LevelSummary {
        alpha: level.alpha(),
        phi: level.phi(),
        adapted,
        converged: res.converged,
        iterations: res.iterations,
        cost: res.eval.cost,
        stationarity: res.stationarity,
        distance_to_previous,
        adjoint: res.eval.adjoint.diagnostics.clone(),
        concentration,
        h1_norm: h1_time_norm(&res.u),
        within_budget: a.within_budget(&res.u),
    })
}

/// Deep-quench continuation: plain cost at the first level, adapted cost
/// anchored at the previous level's control afterwards, then a plain-cost
/// polish at the last level and the obstacle state of the final control.
pub fn deep_quench_continuation(
    problem: &Problem,
    schedule: &[f64],
    u0: &Trajectory,
    opts: &ContinuationOptions,
) -> Result<OptimizerRun> {
    if schedule.is_empty() {
        return Err(Error::Config("alpha schedule is empty".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Config("alpha schedule must be strictly decreasing".into()));
    }
    let exponent = problem.model.potential.quench_exponent;
    let a = &problem.admissible;
    let mut levels: Vec<LevelResult> = Vec::with_capacity(schedule.len());
    let mut warm = project_uad(u0, a)?;
    for (k, &alpha) in schedule.iter().enumerate() {
        let level = Level::from_alpha(alpha, exponent)?;
        if level == Level::Obstacle {
            return Err(Error::Config("alpha schedule must be positive".into()));
        }
        let anchor = if k == 0 { None } else { Some(warm.clone()) };
        let res = projected_gradient_descent(problem, &warm, level, anchor.as_ref(), &opts.pgd)?;
        let summary = level_summary(level, anchor.is_some(), &res, anchor.as_ref(), a)?;
        warm = res.u.clone();
        levels.push(LevelResult {
            summary,
            u: res.u,
            history: res.history,
        });
    }

    let last = Level::from_alpha(*schedule.last().unwrap(), exponent)?;
    let polish = projected_gradient_descent(problem, &warm, last, None, &opts.pgd)?;
    let u_bar = polish.u.clone();
    let beta3 = problem.weights.beta3;
    let plain_gradient = &polish.eval.gradient;
    let vi_min = sampled_vi_min(&u_bar, plain_gradient, a, opts.vi_samples, opts.seed)?;
    let projection_residual = if beta3 > 0.0 {
        let target = polish.eval.adjoint.p.map(|p| -p / beta3);
        let proj = project_uad(&target, a)?;
        Some(norm_l2_q(&u_bar.zip_map(&proj, |x, y| x - y)?))
    } else {
        None
    };
    let probe = linear_time_probe(&u_bar);
    let concentration = concentration_metric(&polish.eval.adjoint, &polish.eval.state, &probe)?;
    let phis: Vec<f64> = levels.iter().map(|l| l.summary.phi).collect();
    let metrics: Vec<f64> = levels
        .iter()
        .map(|l| l.summary.concentration.q_side.abs())
        .collect();
    let (obstacle_cost, obstacle) = problem.cost(&u_bar, Level::Obstacle, None)?;
    let limit = LimitReport {
        alpha: last.alpha(),
        stationarity: polish.stationarity,
        polish_converged: polish.converged,
        polish_iterations: polish.iterations,
        vi_min,
        vi_samples: opts.vi_samples,
        projection_residual,
        pairing: polish.eval.adjoint.diagnostics.pairing,
        concentration,
        concentration_slope: loglog_slope(&phis, &metrics),
        obstacle_state: obstacle.diagnostics,
        obstacle_cost,
        h1_norm: h1_time_norm(&u_bar),
        within_budget: a.within_budget(&u_bar),
    };
    let all_converged = levels.iter().all(|l| l.summary.converged) && polish.converged;
    Ok(OptimizerRun {
        levels,
        limit,
        control: u_bar,
        all_converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::grid::{Grid, TimeGrid};

    fn small(extra: &str) -> Problem {
        let text = format!("cells_x = 16\nsteps = 40\n{extra}");
        Config::parse(&text).unwrap().build().unwrap().problem
    }

    fn shape(pb: &Problem) -> (Grid, TimeGrid) {
        (*pb.op.grid(), *pb.weights.rho_target.time())
    }

    fn level(alpha: f64) -> Level {
        Level::from_alpha(alpha, 1.0).unwrap()
    }

    #[test]
    fn decoupled_cost_is_quadratic_in_control() {
        let pb = small("beta1 = 0\nbeta2 = 0\nbeta3 = 2");
        let (g, t) = shape(&pb);
        let u = Trajectory::constant(g, t, 0.7);
        let st = pb.state(&u, level(0.1)).unwrap();
        let j = cost_j(&st, &u, &pb.weights).unwrap();
        assert!((j - 2.0 * 0.49 / 2.0).abs() < 1e-14);
        let zero = Trajectory::zeros(g, t);
        let ja = cost_j_adapted(&st, &u, &pb.weights, &zero).unwrap();
        assert!((ja - j - 0.5 * 0.49).abs() < 1e-14);
        assert_eq!(cost_j_adapted(&st, &u, &pb.weights, &u).unwrap(), j);
    }

    #[test]
    fn projection_clips_and_is_idempotent() {
        let pb = small("");
        let (g, t) = shape(&pb);
        let a = &pb.admissible;
        let u = Trajectory::from_fn(g, t, |x, s| 6.0 * (7.0 * x[0] + s).sin());
        let p1 = project_uad(&u, a).unwrap();
        assert!(a.in_box(&p1));
        assert_eq!(project_uad(&p1, a).unwrap(), p1);
        let neg = Trajectory::constant(g, t, -1.0);
        assert_eq!(project_uad(&neg, a).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn decoupled_gradient_is_scaled_control() {
        let pb = small("beta1 = 0\nbeta2 = 0\nbeta3 = 0.5");
        let (g, t) = shape(&pb);
        let u = Trajectory::from_fn(g, t, |x, s| x[0] + s);
        let plain = reduced_gradient(&pb, &u, level(0.1), None).unwrap();
        assert_eq!(plain.gradient, u.scaled(0.5));
        let anchored = reduced_gradient(&pb, &u, level(0.1), Some(&u)).unwrap();
        assert_eq!(anchored.gradient, u.scaled(0.5));
    }

    #[test]
    fn trivial_optimum_is_zero() {
        let pb = small("beta1 = 0\nbeta2 = 0\nbeta3 = 1");
        let (g, t) = shape(&pb);
        let u0 = Trajectory::constant(g, t, 1.0);
        let res = projected_gradient_descent(&pb, &u0, level(0.1), None, &PgdOptions::default()).unwrap();
        assert!(res.converged);
        assert!(norm_l2_q(&res.u) <= 1e-8);
        assert!(res.iterations <= 50);
    }

    #[test]
    fn stationary_start_takes_no_steps() {
        let pb = small("beta1 = 0\nbeta2 = 0\nbeta3 = 1");
        let (g, t) = shape(&pb);
        let res = projected_gradient_descent(&pb, &Trajectory::zeros(g, t), level(0.1), None, &PgdOptions::default())
            .unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(res.history.len(), 1);
    }

    #[test]
    fn inadmissible_start_rejected() {
        let pb = small("");
        let (g, t) = shape(&pb);
        let u0 = Trajectory::constant(g, t, 3.0);
        assert!(matches!(
            projected_gradient_descent(&pb, &u0, level(0.1), None, &PgdOptions::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn tracking_history_nonincreasing_and_vi_holds() {
        let pb = small("");
        let (g, t) = shape(&pb);
        let opts = PgdOptions::default();
        let res = projected_gradient_descent(&pb, &Trajectory::zeros(g, t), level(0.01), None, &opts).unwrap();
        assert!(res.converged);
        assert!(res.history.windows(2).all(|w| w[1].cost <= w[0].cost));
        let vi = sampled_vi_min(&res.u, &res.eval.gradient, &pb.admissible, 100, 7).unwrap();
        assert!(vi >= -1e-6, "vi {vi}");
    }

    #[test]
    fn continuation_on_trivial_problem() {
        let pb = small("beta1 = 0\nbeta2 = 0\nbeta3 = 1");
        let (g, t) = shape(&pb);
        let u0 = Trajectory::constant(g, t, 1.0);
        let run = deep_quench_continuation(&pb, &[1e-1, 1e-2, 1e-3], &u0, &ContinuationOptions::default()).unwrap();
        assert!(run.all_converged);
        for l in &run.levels {
            assert!(norm_l2_q(&l.u) <= 1e-8);
            if let Some(d) = l.summary.distance_to_previous {
                assert!(d <= 1e-8);
            }
        }
        assert!(run.limit.projection_residual.unwrap() <= 1e-7);
    }

    #[test]
    fn anchor_term_vanishes_at_warm_start() {
        let pb = small("");
        let (g, t) = shape(&pb);
        let u = Trajectory::constant(g, t, 0.5);
        let (plain, _) = pb.cost(&u, level(0.1), None).unwrap();
        let (adapted, _) = pb.cost(&u, level(0.1), Some(&u)).unwrap();
        assert_eq!(plain, adapted);
    }

    #[test]
    fn schedule_must_decrease() {
        let pb = small("");
        let (g, t) = shape(&pb);
        let u0 = Trajectory::zeros(g, t);
        let opts = ContinuationOptions::default();
        assert!(deep_quench_continuation(&pb, &[1e-2, 1e-1], &u0, &opts).is_err());
        assert!(deep_quench_continuation(&pb, &[], &u0, &opts).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 0.1, 0.01];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 1.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_none());
    }
}
