//! Independent oracles and the invariant suite.
//!
//! Each oracle takes a different code path from the implementation it
//! checks: Gaussian elimination on an assembled matrix against CG, bisection
//! in the order parameter against logit Newton, a coordinate double loop
//! against the tabulated convolution, and forward differences of the cost
//! against the adjoint gradient.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Config, Setup, TOLERANCES};
use crate::error::{Error, Result};
use crate::grid::{
    gradient_energy, inner_product, inner_product_q, laplacian_neumann, norm_l2, norm_l2_q,
    Field, Grid, TimeGrid, Trajectory,
};
use crate::io::{trajectories_to_csv, trajectory_from_csv};
use crate::linalg::solve_shifted_laplacian;
use crate::nonlocal::{check_a3, smooth_random_field, Kernel, NonlocalOperator};
use crate::optimize::{
    deep_quench_continuation, loglog_slope, project_uad, reduced_gradient, CostWeights,
    OptimizerRun, Problem,
};
use crate::physics::{
    h_prime, in_obstacle_subdifferential, resolvent_obstacle, resolvent_quench, Coupling, Level,
    PotentialConfig, SmoothPotential,
};
use crate::state::InitialData;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::ShapeMismatch("dense system is not square".into()));
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col] == 0.0 {
            return Err(Error::SolverFailure {
                iterations: col,
                residual: f64::INFINITY,
            });
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Ok(x)
}

/// Assembles `diag(shift) - Laplacian` from the five-point stencil with
/// Neumann rows (each missing neighbour removes one coupling).
pub fn dense_shifted_laplacian(shift: &Field) -> Vec<Vec<f64>> {
    let grid = *shift.grid();
    let (nx, ny) = (grid.cells(0), grid.cells(1));
    let n = grid.len();
    let mut a = vec![vec![0.0; n]; n];
    let cx = 1.0 / (grid.spacing(0) * grid.spacing(0));
    let cy = if grid.dim() == 2 {
        1.0 / (grid.spacing(1) * grid.spacing(1))
    } else {
        0.0
    };
    for j in 0..ny {
        for i in 0..nx {
            let row = j * nx + i;
            a[row][row] += shift.values()[row];
            let mut couple = |other: usize, c: f64| {
                a[row][row] += c;
                a[row][other] -= c;
            };
            if i > 0 {
                couple(row - 1, cx);
            }
            if i + 1 < nx {
                couple(row + 1, cx);
            }
            if grid.dim() == 2 {
                if j > 0 {
                    couple(row - nx, cy);
                }
                if j + 1 < ny {
                    couple(row + nx, cy);
                }
            }
        }
    }
    a
}

/// Root of `r + s ln(r / (1 - r)) = b` by plain bisection in `r`.
pub fn bisection_resolvent(b: f64, s: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let f = mid + s * (mid.ln() - (1.0 - mid).ln()) - b;
        if f > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

/// `B[f]` by a double loop over cell centres computed from scratch.
pub fn quadrature_apply_b(kernel: &Kernel, f: &Field) -> Field {
    let grid = *f.grid();
    let (nx, ny) = (grid.cells(0), grid.cells(1));
    let (hx, hy) = (grid.spacing(0), grid.spacing(1));
    let vol = if grid.dim() == 2 { hx * hy } else { hx };
    let centre = |k: usize| {
        let (i, j) = (k % nx, k / nx);
        let y = if grid.dim() == 2 { (j as f64 + 0.5) * hy } else { 0.0 };
        ((i as f64 + 0.5) * hx, y)
    };
    let mut out = vec![0.0; nx * ny];
    for (a, o) in out.iter_mut().enumerate() {
        let (xa, ya) = centre(a);
        let mut acc = 0.0;
        for (b, fb) in f.values().iter().enumerate() {
            let (xb, yb) = centre(b);
            let r = ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt();
            acc += kernel.eval(r) * fb * vol;
        }
        *o = acc;
    }
    Field::from_values(grid, out).unwrap()
}

/// Taylor remainders `|J(u + eps d) - J(u) - eps <g, d>|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorReport {
    pub eps: Vec<f64>,
    pub remainders: Vec<f64>,
    pub slope: Option<f64>,
    pub base_cost: f64,
    pub directional: f64,
}

pub fn fd_gradient_oracle(
    problem: &Problem,
    u: &Trajectory,
    d: &Trajectory,
    eps: &[f64],
    level: Level,
    anchor: Option<&Trajectory>,
) -> Result<TaylorReport> {
    let a = &problem.admissible;
    for &e in eps {
        let mut v = u.clone();
        v.add_scaled(e, d)?;
        if !a.in_box(&v) {
            return Err(Error::Infeasible(format!(
                "u + {e:e} d leaves the admissible box"
            )));
        }
    }
    let base = reduced_gradient(problem, u, level, anchor)?;
    let directional = inner_product_q(&base.gradient, d)?;
    let mut remainders = Vec::with_capacity(eps.len());
    for &e in eps {
        let mut v = u.clone();
        v.add_scaled(e, d)?;
        let (j, _) = problem.cost(&v, level, anchor)?;
        remainders.push((j - base.cost - e * directional).abs());
    }
    Ok(TaylorReport {
        eps: eps.to_vec(),
        slope: loglog_slope(eps, &remainders),
        remainders,
        base_cost: base.cost,
        directional,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: String,
    pub detail: String,
    /// Wall time; left out of the JSON report so that it stays reproducible.
    #[serde(skip)]
    pub runtime_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(4);
        let mut out = String::new();
        writeln!(
            out,
            "{:<width$}  {:<4}  {:>12}  {:<24}  {:>9}",
            "check", "ok", "measured", "tolerance", "ms"
        )
        .unwrap();
        for c in &self.checks {
            writeln!(
                out,
                "{:<width$}  {:<4}  {:>12.4e}  {:<24}  {:>9.1}",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.measured,
                c.tolerance,
                c.runtime_ms
            )
            .unwrap();
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        writeln!(out, "{} checks, {} failed", self.checks.len(), failed).unwrap();
        out
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Outcome of one check body: measured value, verdict, detail.
struct Outcome {
    measured: f64,
    passed: bool,
    detail: String,
}

fn outcome(measured: f64, passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        measured,
        passed,
        detail: detail.into(),
    }
}

struct Recorder {
    checks: Vec<Check>,
}

impl Recorder {
    fn run(&mut self, name: &str, tolerance: String, body: impl FnOnce() -> Result<Outcome>) {
        let start = Instant::now();
        let (measured, passed, detail) = match body() {
            Ok(o) => (o.measured, o.passed && !o.measured.is_nan(), o.detail),
            Err(e) => (f64::NAN, false, format!("error: {e}")),
        };
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            measured,
            tolerance,
            detail,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
}

/// Strictly decreasing, or exactly zero throughout.
fn decreasing(values: &[f64]) -> bool {
    values.iter().all(|&v| v == 0.0) || values.windows(2).all(|w| w[1] < w[0])
}

fn random_trajectory(grid: Grid, time: TimeGrid, rng: &mut ChaCha8Rng) -> Trajectory {
    let a = smooth_random_field(grid, rng);
    let b = smooth_random_field(grid, rng);
    let horizon = time.horizon();
    let snaps = (0..time.nodes())
        .map(|n| {
            let s = time.time(n) / horizon;
            a.zip_map(&b, |x, y| (1.0 - s) * x + s * y).unwrap()
        })
        .collect();
    Trajectory::new(time, snaps).unwrap()
}

fn sci_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn diff_norm(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    Ok(norm_l2_q(&a.zip_map(b, |x, y| x - y)?))
}

/// The trivial configuration on the grid of `setup`: no source, `mu0 = 0`,
/// `rho0 = 1/2`, `F' = 0` and no nonlocal interaction.
pub fn trivial_problem(setup: &Setup) -> Result<Problem> {
    let grid = setup.grid();
    let time = setup.time();
    let mut model = setup.problem.model;
    model.potential = PotentialConfig::new(
        SmoothPotential::ConcaveQuadratic { c: 0.0 },
        Coupling::Linear,
        model.potential.quench_exponent,
    )?;
    Ok(Problem {
        model,
        op: NonlocalOperator::new(Kernel::Zero, grid)?,
        init: InitialData::new(Field::constant(grid, 0.5), Field::zeros(grid))?,
        weights: CostWeights::new(
            1.0,
            1.0,
            1.0,
            Trajectory::constant(grid, time, 0.5),
            Trajectory::zeros(grid, time),
        )?,
        admissible: setup.problem.admissible.clone(),
    })
}

/// Same problem without tracking terms (`beta1 = beta2 = 0`).
pub fn decoupled_problem(problem: &Problem) -> Result<Problem> {
    let w = &problem.weights;
    let beta3 = if w.beta3 > 0.0 { w.beta3 } else { 1.0 };
    let mut out = problem.clone();
    out.weights = CostWeights::new(0.0, 0.0, beta3, w.rho_target.clone(), w.mu_target.clone())?;
    Ok(out)
}

/// Interior control `u_max / 2` and a smooth direction with `|d| <= u_max / 2`.
fn taylor_point(problem: &Problem, rng: &mut ChaCha8Rng) -> Result<(Trajectory, Trajectory)> {
    let u_max = &problem.admissible.u_max;
    let u = u_max.scaled(0.5);
    let shape = random_trajectory(*u.grid(), *u.time(), rng);
    let m = shape.max_abs().max(f64::MIN_POSITIVE);
    let d = shape.zip_map(u_max, |s, hi| 0.5 * hi * s / m)?;
    Ok((u, d))
}

fn levels(setup: &Setup) -> Result<Vec<Level>> {
    let p = setup.problem.model.potential.quench_exponent;
    setup
        .schedule
        .iter()
        .map(|&a| Level::from_alpha(a, p))
        .collect()
}

fn state_checks(rec: &mut Recorder, setup: &Setup) {
    let pb = &setup.problem;
    let tol = TOLERANCES;
    let grid = setup.grid();
    let time = setup.time();
    let u_state = setup.control.clone();
    let Ok(lv) = levels(setup) else {
        rec.run("state_setup", "valid schedule".into(), || {
            Err(Error::Config("invalid schedule".into()))
        });
        return;
    };

    rec.run("state_fixed_point", format!("<= {:e}", tol.fixed_point), || {
        let trivial = trivial_problem(setup)?;
        let zero = Trajectory::zeros(grid, time);
        let mut worst: f64 = 0.0;
        for alpha in [1.0, 1e-3, 0.0] {
            let level = Level::from_alpha(alpha, pb.model.potential.quench_exponent)?;
            let st = trivial.state(&zero, level)?;
            worst = worst.max(st.mu.max_abs());
            worst = worst.max(st.rho.map(|r| r - 0.5).max_abs());
        }
        Ok(outcome(worst, worst <= tol.fixed_point, "alpha in {1, 1e-3, 0}"))
    });

    let controls = [("config", u_state.clone()), ("half_u_max", pb.admissible.u_max.scaled(0.5))];
    rec.run("state_bounds_quench", format!("min mu >= -{:e}, 0 < rho < 1", tol.mu_lower), || {
        let mut min_mu = f64::INFINITY;
        let mut ok = true;
        let mut detail = String::new();
        for (name, u) in &controls {
            if u.min() < 0.0 {
                continue;
            }
            for &level in &lv {
                let st = pb.state(u, level)?;
                let d = &st.diagnostics;
                min_mu = min_mu.min(d.min_mu);
                if d.min_mu < -tol.mu_lower || !(d.min_rho > 0.0 && d.max_rho < 1.0) {
                    ok = false;
                    write!(detail, "{name} at alpha {:e}; ", level.alpha()).unwrap();
                }
            }
        }
        Ok(outcome(min_mu, ok, detail))
    });

    rec.run("state_bounds_obstacle", "rho in [0,1], sign table exact".into(), || {
        let mut min_mu = f64::INFINITY;
        let mut ok = true;
        for (_, u) in &controls {
            if u.min() < 0.0 {
                continue;
            }
            let st = pb.state(u, Level::Obstacle)?;
            let d = &st.diagnostics;
            min_mu = min_mu.min(d.min_mu);
            let table = st.rho.snapshots().iter().zip(st.xi.snapshots()).all(|(r, x)| {
                r.values()
                    .iter()
                    .zip(x.values())
                    .all(|(&r, &x)| in_obstacle_subdifferential(r, x))
            });
            ok &= table
                && d.min_rho >= 0.0
                && d.max_rho <= 1.0
                && d.min_mu >= -tol.mu_lower;
        }
        Ok(outcome(min_mu, ok, "measured: min mu"))
    });

    let energy_levels: Vec<Level> = lv.iter().copied().chain([Level::Obstacle]).collect();
    rec.run("state_energy_residual", format!("<= {}", tol.energy_max), || {
        let mut worst: f64 = 0.0;
        for &level in &energy_levels {
            worst = worst.max(pb.state(&u_state, level)?.diagnostics.energy_residual);
        }
        Ok(outcome(worst, worst <= tol.energy_max, "max over levels"))
    });

    rec.run(
        "state_energy_order",
        format!("ratio in [{}, {}]", tol.energy_ratio.0, tol.energy_ratio.1),
        || {
            let fine_time = TimeGrid::new(time.horizon(), 2 * time.steps())?;
            let snaps = (0..fine_time.nodes())
                .map(|n| u_state.snapshot(n / 2).clone())
                .collect();
            let fine_u = Trajectory::new(fine_time, snaps)?;
            let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
            for &level in &energy_levels {
                let coarse = pb.state(&u_state, level)?.diagnostics.energy_residual;
                let fine = pb.state(&fine_u, level)?.diagnostics.energy_residual;
                if coarse == 0.0 && fine == 0.0 {
                    continue;
                }
                let r = coarse / fine;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            if hi == 0.0 {
                return Ok(outcome(0.0, true, "identity exact"));
            }
            let ok = lo >= tol.energy_ratio.0 && hi <= tol.energy_ratio.1;
            Ok(outcome(lo, ok, format!("ratios in [{lo:.4}, {hi:.4}]")))
        },
    );

    rec.run(
        "state_quench_convergence",
        format!("decreasing, final < {:e}", tol.quench_final),
        || {
            let limit = pb.state(&u_state, Level::Obstacle)?;
            let dists = lv
                .iter()
                .map(|&l| diff_norm(&pb.state(&u_state, l)?.rho, &limit.rho))
                .collect::<Result<Vec<_>>>()?;
            let last = *dists.last().unwrap();
            let ok = decreasing(&dists) && last < tol.quench_final;
            Ok(outcome(last, ok, sci_list(&dists)))
        },
    );

    rec.run("state_xi_uniform_bound", format!("< {} decade", tol.xi_decades), || {
        let norms = lv
            .iter()
            .map(|&l| Ok(pb.state(&u_state, l)?.diagnostics.xi_l6))
            .collect::<Result<Vec<f64>>>()?;
        let hi = norms.iter().copied().fold(0.0, f64::max);
        let lo = norms.iter().copied().fold(f64::INFINITY, f64::min);
        if hi == 0.0 {
            return Ok(outcome(0.0, true, "all zero"));
        }
        let spread = if lo > 0.0 { (hi / lo).log10() } else { f64::INFINITY };
        Ok(outcome(spread, spread < tol.xi_decades, sci_list(&norms)))
    });

    rec.run("state_determinism", "bitwise equal".into(), || {
        let level = *lv.last().unwrap();
        let a = pb.state(&u_state, level)?;
        let b = pb.state(&u_state, level)?;
        let same = |x: &Trajectory, y: &Trajectory| {
            x.snapshots().iter().zip(y.snapshots()).all(|(f, g)| {
                f.values().iter().zip(g.values()).all(|(p, q)| p.to_bits() == q.to_bits())
            })
        };
        let ok = same(&a.mu, &b.mu) && same(&a.rho, &b.rho) && same(&a.xi, &b.xi);
        Ok(outcome(if ok { 0.0 } else { 1.0 }, ok, ""))
    });

    rec.run("io_csv_roundtrip", "bitwise equal".into(), || {
        let st = pb.state(&u_state, Level::Obstacle)?;
        let text = trajectories_to_csv(&[
            ("mu", &st.mu),
            ("rho", &st.rho),
            ("xi", &st.xi),
            ("u", &u_state),
        ])?;
        let mut worst = 0_u64;
        for (name, tr) in [("mu", &st.mu), ("rho", &st.rho), ("xi", &st.xi), ("u", &u_state)] {
            let back = trajectory_from_csv(&text, Some(name), grid, time)?;
            for (f, g) in back.snapshots().iter().zip(tr.snapshots()) {
                for (p, q) in f.values().iter().zip(g.values()) {
                    if p.to_bits() != q.to_bits() {
                        worst += 1;
                    }
                }
            }
        }
        Ok(outcome(worst as f64, worst == 0, "mismatching entries"))
    });
}

fn operator_checks(rec: &mut Recorder, setup: &Setup, seed: u64) {
    let pb = &setup.problem;
    let tol = TOLERANCES;
    let grid = setup.grid();
    let time = setup.time();

    rec.run("grid_laplacian_symmetry", "<= 1e-12 |Lap f||g|".into(), || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let f = smooth_random_field(grid, &mut rng);
            let g = smooth_random_field(grid, &mut rng);
            let (lf, lg) = (laplacian_neumann(&f)?, laplacian_neumann(&g)?);
            let a = inner_product(&lf, &g)?;
            let b = inner_product(&f, &lg)?;
            let scale = (norm_l2(&lf) * norm_l2(&g) + norm_l2(&f) * norm_l2(&lg)).max(1e-300);
            worst = worst.max((a - b).abs() / scale);
        }
        Ok(outcome(worst, worst <= 1e-12, "<Lap f, g> vs <f, Lap g>"))
    });

    rec.run("grid_gradient_energy_identity", "<= 1e-12 relative".into(), || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let f = smooth_random_field(grid, &mut rng);
            let e = gradient_energy(&f);
            let l = -inner_product(&laplacian_neumann(&f)?, &f)?;
            worst = worst.max((e - l).abs() / e.abs().max(1e-300));
        }
        Ok(outcome(worst, worst <= 1e-12, ""))
    });

    rec.run("linalg_cg_vs_dense", "<= 1e-9 relative".into(), || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
        let shift = smooth_random_field(grid, &mut rng).map(|v| 1.0 + v.abs() * 50.0);
        let rhs = smooth_random_field(grid, &mut rng);
        let cg = solve_shifted_laplacian(&shift, &rhs, &Field::zeros(grid), &pb.model.cg)?;
        let x = dense_solve(dense_shifted_laplacian(&shift), rhs.values().to_vec())?;
        let dense = Field::from_values(grid, x)?;
        let err = norm_l2(&cg.x.zip_map(&dense, |a, b| a - b)?) / norm_l2(&dense).max(1e-300);
        Ok(outcome(err, err <= 1e-9, format!("{} CG iterations", cg.iterations)))
    });

    rec.run(
        "nonlocal_adjoint_identity",
        format!("<= {:e} |v||w|", tol.adjoint_identity),
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
            let mut worst: f64 = 0.0;
            for _ in 0..100 {
                let base = smooth_random_field(grid, &mut rng);
                let v = smooth_random_field(grid, &mut rng);
                let w = smooth_random_field(grid, &mut rng);
                let lhs = inner_product(&pb.op.apply_db_adjoint(&base, &v)?, &w)?;
                let rhs = inner_product(&v, &pb.op.apply_db(&base, &w)?)?;
                let scale = norm_l2(&v) * norm_l2(&w);
                worst = worst.max((lhs - rhs).abs() / scale.max(1e-300));
            }
            Ok(outcome(worst, worst <= tol.adjoint_identity, "100 random pairs"))
        },
    );

    rec.run("nonlocal_quadrature_oracle", format!("<= {:e}", tol.quadrature), || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 4);
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let f = smooth_random_field(grid, &mut rng);
            let fast = pb.op.apply_b(&f)?;
            let slow = quadrature_apply_b(pb.op.kernel(), &f);
            let scale = slow.max_abs().max(1.0);
            worst = worst.max(fast.zip_map(&slow, |a, b| a - b)?.max_abs() / scale);
        }
        Ok(outcome(worst, worst <= tol.quadrature, "max-norm, relative to max(1, |B f|)"))
    });

    rec.run("nonlocal_a3_lipschitz", "empirical <= table bounds".into(), || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 5);
        let small = TimeGrid::new(time.horizon(), 4)?;
        let pairs: Vec<(Trajectory, Trajectory)> = (0..20)
            .map(|_| {
                (
                    random_trajectory(grid, small, &mut rng),
                    random_trajectory(grid, small, &mut rng),
                )
            })
            .collect();
        let r = check_a3(&pb.op, &pairs)?;
        let slack = 1.0 + 1e-12;
        let ok = r.lipschitz_max <= r.row_sum_bound * slack
            && r.lipschitz_l2 <= r.row_sum_bound.max(r.column_max_bound) * slack
            && r.identical_pair_residual == 0.0
            && r.causal
            && pb.op.is_symmetric();
        Ok(outcome(
            r.lipschitz_max,
            ok,
            format!("row-sum bound {:.4e}", r.row_sum_bound),
        ))
    });

    rec.run("resolvent_residual", format!("<= {:e}", tol.resolvent_residual), || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 6);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let b = rng.gen_range(-0.5..1.5);
            let s = rng.gen_range(0.05..1.0);
            let r = resolvent_quench(b, s)?;
            let res = (r + s * h_prime(r)? - b).abs() / f64::max(1.0, b.abs());
            worst = worst.max(res);
        }
        Ok(outcome(worst, worst <= tol.resolvent_residual, "b in [-0.5, 1.5], s in [0.05, 1]"))
    });

    rec.run("resolvent_bisection_agreement", format!("<= {:e}", tol.bisection), || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let b = rng.gen_range(-2.0..3.0);
            let s = 10f64.powf(rng.gen_range(-6.0..1.0));
            let r = resolvent_quench(b, s)?;
            worst = worst.max((r - bisection_resolvent(b, s)).abs());
        }
        Ok(outcome(worst, worst <= tol.bisection, "s in [1e-6, 10]"))
    });

    rec.run("resolvent_obstacle_gap", format!("< {:e} at phi = 1e-6", tol.quench_gap), || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 8);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let b = rng.gen_range(-1.0..2.0);
            let (clip, _) = resolvent_obstacle(b, 1.0);
            worst = worst.max((resolvent_quench(b, 1e-6)? - clip).abs());
        }
        Ok(outcome(worst, worst < tol.quench_gap, "50 random inputs"))
    });

    rec.run("resolvent_nonexpansive", "<= 1".into(), || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 9);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let b1 = rng.gen_range(-1.0..2.0);
            let b2 = rng.gen_range(-1.0..2.0);
            if b1 == b2 {
                continue;
            }
            let s = 10f64.powf(rng.gen_range(-6.0..0.0));
            let q = (resolvent_quench(b1, s)? - resolvent_quench(b2, s)?).abs() / (b1 - b2).abs();
            let o = (resolvent_obstacle(b1, 1.0).0 - resolvent_obstacle(b2, 1.0).0).abs()
                / (b1 - b2).abs();
            worst = worst.max(q).max(o);
        }
        Ok(outcome(worst, worst <= 1.0 + 1e-12, "largest ratio |R(b1) - R(b2)| / |b1 - b2|"))
    });

    rec.run("resolvent_obstacle_sign_table", "exact".into(), || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 10);
        let mut bad = 0;
        for k in 0..300 {
            let b = match k % 3 {
                0 => rng.gen_range(-2.0..0.0),
                1 => rng.gen_range(0.0..=1.0),
                _ => rng.gen_range(1.0..3.0),
            };
            let (r, xi) = resolvent_obstacle(b, rng.gen_range(1e-3..1.0));
            if !in_obstacle_subdifferential(r, xi) {
                bad += 1;
            }
        }
        Ok(outcome(bad as f64, bad == 0, "violations"))
    });
}

fn gradient_checks(rec: &mut Recorder, setup: &Setup, seed: u64) {
    let pb = &setup.problem;
    let tol = TOLERANCES;
    let Ok(lv) = levels(setup) else { return };
    let eps = [1e-1, 1e-2, 1e-3, 1e-4];

    rec.run(
        "adjoint_terminal_values",
        "p(T) = q(T) = 0 exactly".into(),
        || {
            let mut worst: f64 = 0.0;
            let u = pb.admissible.u_max.scaled(0.5);
            for &level in &lv {
                let adj = reduced_gradient(pb, &u, level, None)?.adjoint;
                let nt = u.time().steps();
                worst = worst.max(adj.p.snapshot(nt).max_abs());
                worst = worst.max(adj.q.snapshot(nt).max_abs());
            }
            Ok(outcome(worst, worst == 0.0, ""))
        },
    );

    rec.run("adjoint_pairing_nonnegative", ">= 0".into(), || {
        let u = pb.admissible.u_max.scaled(0.5);
        let mut least = f64::INFINITY;
        for &level in &lv {
            let d = reduced_gradient(pb, &u, level, None)?.adjoint.diagnostics;
            least = least.min(d.pairing);
        }
        Ok(outcome(least, least >= 0.0, "smallest pairing over levels"))
    });

    rec.run("adjoint_decoupled_zero", "p = q = 0 exactly".into(), || {
        let dec = decoupled_problem(pb)?;
        let u = pb.admissible.u_max.scaled(0.5);
        let adj = reduced_gradient(&dec, &u, lv[0], None)?.adjoint;
        let m = adj.p.max_abs().max(adj.q.max_abs());
        Ok(outcome(m, m == 0.0, ""))
    });

    rec.run(
        "gradient_taylor_slope",
        format!("in [{}, {}]", tol.taylor_slope.0, tol.taylor_slope.1),
        || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 11);
            let (u, d) = taylor_point(pb, &mut rng)?;
            let mut slopes = Vec::new();
            for level in [lv[0], *lv.last().unwrap()] {
                let rep = fd_gradient_oracle(pb, &u, &d, &eps, level, None)?;
                if rep.remainders.iter().all(|&r| r <= 1e-14 * rep.base_cost.abs().max(1.0)) {
                    slopes.push(2.0);
                    continue;
                }
                slopes.push(rep.slope.unwrap_or(f64::NAN));
            }
            let worst = slopes
                .iter()
                .copied()
                .max_by(|a, b| (a - 2.0).abs().total_cmp(&(b - 2.0).abs()))
                .unwrap();
            let ok = slopes
                .iter()
                .all(|s| *s >= tol.taylor_slope.0 && *s <= tol.taylor_slope.1);
            Ok(outcome(worst, ok, format!("first and last level: {slopes:.4?}")))
        },
    );

    rec.run("gradient_decoupled_exact", "rounding".into(), || {
        let dec = decoupled_problem(pb)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 12);
        let (u, d) = taylor_point(&dec, &mut rng)?;
        let rep = fd_gradient_oracle(&dec, &u, &d, &eps, lv[0], None)?;
        let dn = norm_l2_q(&d);
        let beta3 = dec.weights.beta3;
        let worst = rep
            .eps
            .iter()
            .zip(&rep.remainders)
            .map(|(e, r)| (r - 0.5 * e * e * beta3 * dn * dn).abs())
            .fold(0.0, f64::max);
        let scale = 1e-13 * rep.base_cost.abs().max(1.0);
        Ok(outcome(worst, worst <= scale, "|remainder - eps^2 beta3 |d|^2 / 2|"))
    });

    rec.run("gradient_zero_direction", "all remainders 0".into(), || {
        let u = pb.admissible.u_max.scaled(0.5);
        let d = Trajectory::zeros(*u.grid(), *u.time());
        let rep = fd_gradient_oracle(pb, &u, &d, &eps, lv[0], None)?;
        let m = rep.remainders.iter().copied().fold(0.0, f64::max);
        Ok(outcome(m, m == 0.0, ""))
    });
}

fn optimizer_checks(rec: &mut Recorder, setup: &Setup) {
    let pb = &setup.problem;
    let tol = TOLERANCES;
    let opts = setup.options;

    rec.run(
        "optimize_trivial_optimum",
        format!("|u| <= {:e} within {} iterations", tol.trivial_optimum, tol.trivial_iterations),
        || {
            let dec = decoupled_problem(pb)?;
            let mut dec = dec;
            dec.weights.beta3 = 1.0;
            let u0 = pb.admissible.u_max.scaled(0.5);
            let run = deep_quench_continuation(&dec, &setup.schedule, &u0, &opts)?;
            let worst = run
                .levels
                .iter()
                .map(|l| norm_l2_q(&l.u))
                .fold(0.0, f64::max);
            let iters_ok = run
                .levels
                .iter()
                .all(|l| l.summary.iterations <= tol.trivial_iterations);
            Ok(outcome(
                worst,
                worst <= tol.trivial_optimum && iters_ok && run.all_converged,
                "largest level norm",
            ))
        },
    );

    let u0 = match project_uad(&setup.control, &pb.admissible) {
        Ok(u) => u,
        Err(_) => return,
    };
    let run: std::result::Result<OptimizerRun, String> =
        deep_quench_continuation(pb, &setup.schedule, &u0, &opts).map_err(|e| e.to_string());
    let with_run = |f: &dyn Fn(&OptimizerRun) -> Result<Outcome>| -> Result<Outcome> {
        match &run {
            Ok(r) => f(r),
            Err(e) => Err(Error::Config(format!("continuation failed: {e}"))),
        }
    };

    rec.run("optimize_converged", format!("stationarity <= {:e}", opts.pgd.tol), || {
        with_run(&|r| {
            let worst = r
                .levels
                .iter()
                .map(|l| l.summary.stationarity)
                .fold(r.limit.stationarity, f64::max);
            Ok(outcome(
                worst,
                r.all_converged && worst <= tol.stationarity,
                "largest final residual",
            ))
        })
    });

    rec.run("optimize_cost_monotone", "nonincreasing".into(), || {
        with_run(&|r| {
            let mut worst_rise: f64 = 0.0;
            for l in &r.levels {
                for w in l.history.windows(2) {
                    worst_rise = worst_rise.max(w[1].cost - w[0].cost);
                }
            }
            Ok(outcome(worst_rise, worst_rise <= 0.0, "largest increase"))
        })
    });

    rec.run("optimize_box_admissible", "0 <= u <= u_max".into(), || {
        with_run(&|r| {
            let ok = r.levels.iter().all(|l| pb.admissible.in_box(&l.u))
                && pb.admissible.in_box(&r.control);
            Ok(outcome(if ok { 0.0 } else { 1.0 }, ok, ""))
        })
    });

    rec.run("optimize_anchor_telescoping", "exact".into(), || {
        with_run(&|r| {
            let mut worst: f64 = 0.0;
            for (k, l) in r.levels.iter().enumerate().skip(1) {
                let level = Level::from_alpha(l.summary.alpha, pb.model.potential.quench_exponent)?;
                let (plain, _) = pb.cost(&r.levels[k - 1].u, level, None)?;
                worst = worst.max((l.history[0].cost - plain).abs());
            }
            Ok(outcome(worst, worst == 0.0, "adapted start cost vs plain cost"))
        })
    });

    rec.run(
        "continuation_state_convergence",
        format!("decreasing, final < {:e}", tol.quench_final),
        || {
            with_run(&|r| {
                let limit = pb.state(&r.control, Level::Obstacle)?;
                let dists = r
                    .levels
                    .iter()
                    .map(|l| {
                        let level =
                            Level::from_alpha(l.summary.alpha, pb.model.potential.quench_exponent)?;
                        diff_norm(&pb.state(&l.u, level)?.rho, &limit.rho)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let last = *dists.last().unwrap();
                Ok(outcome(
                    last,
                    decreasing(&dists) && last < tol.quench_final,
                    sci_list(&dists),
                ))
            })
        },
    );

    rec.run("continuation_distances_decreasing", "strictly decreasing".into(), || {
        with_run(&|r| {
            let d: Vec<f64> = r
                .levels
                .iter()
                .filter_map(|l| l.summary.distance_to_previous)
                .collect();
            let small = d.iter().all(|&x| x <= tol.trivial_optimum);
            let last = d.last().copied().unwrap_or(0.0);
            Ok(outcome(last, small || decreasing(&d), sci_list(&d)))
        })
    });

    rec.run("limit_vi_sampled", format!(">= -{:e}", tol.vi), || {
        with_run(&|r| {
            let v = r.limit.vi_min;
            Ok(outcome(v, v >= -tol.vi, format!("{} samples", r.limit.vi_samples)))
        })
    });

    rec.run(
        "limit_projection_formula",
        format!("<= {} x tol", tol.projection_factor),
        || {
            with_run(&|r| match r.limit.projection_residual {
                Some(p) => Ok(outcome(p, p <= tol.projection_factor * opts.pgd.tol, "")),
                None => Ok(outcome(0.0, true, "beta3 = 0: not applicable")),
            })
        },
    );

    rec.run("limit_pairing_nonnegative", ">= 0 exactly".into(), || {
        with_run(&|r| {
            let least = r
                .levels
                .iter()
                .map(|l| l.summary.adjoint.pairing)
                .fold(r.limit.pairing, f64::min);
            Ok(outcome(least, least >= 0.0, "smallest over levels"))
        })
    });

    rec.run(
        "limit_concentration_slope",
        format!("in [{}, {}]", tol.concentration_slope.0, tol.concentration_slope.1),
        || {
            with_run(&|r| {
                let all_zero = r
                    .levels
                    .iter()
                    .all(|l| l.summary.concentration.q_side == 0.0);
                if all_zero {
                    return Ok(outcome(0.0, true, "metric identically zero"));
                }
                let s = r.limit.concentration_slope.unwrap_or(f64::NAN);
                let ok = s >= tol.concentration_slope.0 && s <= tol.concentration_slope.1;
                Ok(outcome(s, ok, "log-log slope against phi"))
            })
        },
    );
}

/// Runs every invariant check on `config` with the given seed.
pub fn run_suite(config: &Config, seed: u64) -> Result<VerificationReport> {
    let setup = config.build()?;
    let mut rec = Recorder { checks: Vec::new() };
    operator_checks(&mut rec, &setup, seed);
    state_checks(&mut rec, &setup);
    gradient_checks(&mut rec, &setup, seed);
    optimizer_checks(&mut rec, &setup);
    let passed = rec.checks.iter().all(|c| c.passed);
    Ok(VerificationReport {
        seed,
        passed,
        checks: rec.checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solve_small_system() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = dense_solve(a, vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn dense_matrix_matches_stencil() {
        let grid = Grid::new_2d(1.0, 4, 2.0, 3).unwrap();
        let shift = Field::from_fn(grid, |x| 1.0 + x[0]);
        let a = dense_shifted_laplacian(&shift);
        let f = Field::from_fn(grid, |x| (x[0] * 3.0).sin() + x[1]);
        let lap = laplacian_neumann(&f).unwrap();
        for r in 0..grid.len() {
            let dense: f64 = a[r].iter().zip(f.values()).map(|(m, v)| m * v).sum();
            let stencil = shift.values()[r] * f.values()[r] - lap.values()[r];
            assert!((dense - stencil).abs() < 1e-12);
        }
    }

    #[test]
    fn bisection_matches_closed_form_midpoint() {
        assert_eq!(bisection_resolvent(0.5, 0.3), 0.5);
    }

    #[test]
    fn quadrature_oracle_matches_table() {
        let grid = Grid::new_1d(1.0, 12).unwrap();
        let k = Kernel::Gaussian {
            amplitude: 1.5,
            width: 0.2,
        };
        let op = NonlocalOperator::new(k, grid).unwrap();
        let f = Field::from_fn(grid, |x| x[0] * x[0]);
        let a = op.apply_b(&f).unwrap();
        let b = quadrature_apply_b(&k, &f);
        assert!(a.zip_map(&b, |x, y| x - y).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn decreasing_helper() {
        assert!(decreasing(&[3.0, 2.0, 1.0]));
        assert!(!decreasing(&[3.0, 3.0]));
        assert!(decreasing(&[0.0, 0.0]));
    }

    #[test]
    fn infeasible_perturbation_is_rejected() {
        let setup = Config::parse("cells_x = 8\nsteps = 10").unwrap().build().unwrap();
        let u = setup.problem.admissible.u_max.clone();
        let d = u.clone();
        let level = Level::from_alpha(0.1, 1.0).unwrap();
        assert!(matches!(
            fd_gradient_oracle(&setup.problem, &u, &d, &[0.1], level, None),
            Err(Error::Infeasible(_))
        ));
    }
}
