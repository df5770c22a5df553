//! Backward-in-time adjoint system and the multiplier `lambda = phi h''(rho) q`.
//!
//! The backward march is the exact transpose of the forward scheme in
//! [`crate::state`], so the reduced gradient `p + beta3 u` is exact for the
//! discrete cost. Per step (n from nt-1 down to 0):
//!
//! ```text
//! [ a^n - Lap ] z = mu_hat^{n+1}                     (p-solve, SPD)
//! rho_hat^{n+1} += (linearized mu-step terms in z)
//! b_hat = rho_hat^{n+1} / (1 + tau phi h''(rho^{n+1}))   (q-step, implicit in phi h'')
//! rho_hat^n += b_hat (1 + tau (mu^n g'' - F'')) - tau DB*[b_hat] + tracking
//! mu_hat^n  += (1 + 2g) z / tau + tau g' b_hat          + tracking
//! ```
//!
//! and `p^n = z / (w_n vol)`, `q^n = b_hat / (tau vol)`, `p^nt = q^nt = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{inner_product_q, norm_l2_q, Field, Trajectory};
use crate::linalg::solve_shifted_laplacian;
use crate::nonlocal::NonlocalOperator;
use crate::optimize::CostWeights;
use crate::physics::Level;
use crate::state::{mu_coefficient, Model, StateSolution};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdjointDiagnostics {
    pub alpha: f64,
    /// `int int lambda q` (trapezoidal in time); nonnegative.
    pub pairing: f64,
    /// `int int phi h''(rho) q^2`, the same quantity evaluated directly.
    pub pairing_direct: f64,
    pub p_l2: f64,
    pub p_max: f64,
    pub q_l2: f64,
    pub lambda_l2: f64,
    pub max_cg_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct AdjointSolution {
    pub p: Trajectory,
    pub q: Trajectory,
    pub lambda: Trajectory,
    pub phi: f64,
    pub diagnostics: AdjointDiagnostics,
}

fn h_second_unchecked(r: f64) -> f64 {
    1.0 / (r * (1.0 - r))
}

/// Solves the adjoint system for the state `state` at the same quench level.
pub fn solve_adjoint(
    state: &StateSolution,
    weights: &CostWeights,
    model: &Model,
    op: &NonlocalOperator,
) -> Result<AdjointSolution> {
    let phi = match state.level {
        Level::Quench(q) => q.phi(),
        Level::Obstacle => {
            return Err(Error::Unsupported(
                "no adjoint system is available at the obstacle limit".into(),
            ))
        }
    };
    weights.check_shape(&state.rho)?;
    let time = *state.rho.time();
    let grid = *state.rho.grid();
    let tau = time.tau();
    let vol = grid.cell_volume();
    let nt = time.steps();
    let pot = &model.potential;
    let (b1, b2) = (weights.beta1, weights.beta2);

    let tracking = |n: usize, rho_hat: &mut Field, mu_hat: &mut Field| {
        let w = time.weight(n) * vol;
        if b1 != 0.0 {
            let (r, t) = (state.rho.snapshot(n).values(), weights.rho_target.snapshot(n).values());
            for ((h, r), t) in rho_hat.values_mut().iter_mut().zip(r).zip(t) {
                *h += w * b1 * (r - t);
            }
        }
        if b2 != 0.0 {
            let (m, t) = (state.mu.snapshot(n).values(), weights.mu_target.snapshot(n).values());
            for ((h, m), t) in mu_hat.values_mut().iter_mut().zip(m).zip(t) {
                *h += w * b2 * (m - t);
            }
        }
    };

    let mut p = vec![Field::zeros(grid); nt + 1];
    let mut q = vec![Field::zeros(grid); nt + 1];
    let mut rho_hat = Field::zeros(grid);
    let mut mu_hat = Field::zeros(grid);
    tracking(nt, &mut rho_hat, &mut mu_hat);
    let mut z_prev = Field::zeros(grid);
    let mut max_it = 0;

    for n in (0..nt).rev() {
        let rho_n = state.rho.snapshot(n);
        let rho_1 = state.rho.snapshot(n + 1);
        let mu_n = state.mu.snapshot(n);
        let mu_1 = state.mu.snapshot(n + 1);

        // transpose of the mu-step
        let coef = mu_coefficient(rho_n, rho_1, tau, model)?;
        let sol = solve_shifted_laplacian(&coef.value, &mu_hat, &z_prev, &model.cg)?;
        max_it = max_it.max(sol.iterations);
        let z = sol.x;
        let mut rho_hat_n = Field::zeros(grid);
        let mut mu_hat_n = Field::zeros(grid);
        for k in 0..grid.len() {
            let (r0, r1) = (rho_n.values()[k], rho_1.values()[k]);
            let (m0, m1) = (mu_n.values()[k], mu_1.values()[k]);
            let zk = z.values()[k];
            let g1 = pot.g_prime(r1);
            mu_hat_n.values_mut()[k] = (1.0 + 2.0 * pot.g(r1)) * zk / tau;
            let mut d1 = zk * 2.0 * g1 * m0 / tau;
            if !coef.clamped[k] {
                let da1 = (2.0 * g1 + pot.g_second(r1) * (r1 - r0) + g1) / tau;
                d1 -= zk * m1 * da1;
                rho_hat_n.values_mut()[k] += zk * m1 * g1 / tau;
            }
            rho_hat.values_mut()[k] += d1;
        }

        // transpose of the rho-step
        let b_hat = rho_hat.zip_map(rho_1, |h, r1| h / (1.0 + tau * phi * h_second_unchecked(r1)))?;
        let db_star = op.apply_db_adjoint(rho_n, &b_hat)?;
        for k in 0..grid.len() {
            let r0 = rho_n.values()[k];
            let m0 = mu_n.values()[k];
            let bh = b_hat.values()[k];
            rho_hat_n.values_mut()[k] +=
                bh * (1.0 + tau * (m0 * pot.g_second(r0) - pot.f_second(r0))) - tau * db_star.values()[k];
            mu_hat_n.values_mut()[k] += tau * pot.g_prime(r0) * bh;
        }
        tracking(n, &mut rho_hat_n, &mut mu_hat_n);

        p[n] = z.scaled(1.0 / (time.weight(n) * vol));
        q[n] = b_hat.scaled(1.0 / (tau * vol));
        rho_hat = rho_hat_n;
        mu_hat = mu_hat_n;
        z_prev = z;
    }

    let p = Trajectory::new(time, p)?;
    let q = Trajectory::new(time, q)?;
    let lambda = state
        .rho
        .zip_map(&q, |r, qv| if qv == 0.0 { 0.0 } else { phi * h_second_unchecked(r) * qv })?;
    let pairing = inner_product_q(&lambda, &q)?;
    let direct = state
        .rho
        .zip_map(&q, |r, qv| phi * h_second_unchecked(r) * qv * qv)?;
    let pairing_direct = (0..time.nodes())
        .map(|n| time.weight(n) * direct.snapshot(n).integral())
        .sum();
    let diagnostics = AdjointDiagnostics {
        alpha: state.level.alpha(),
        pairing,
        pairing_direct,
        p_l2: norm_l2_q(&p),
        p_max: p.max_abs(),
        q_l2: norm_l2_q(&q),
        lambda_l2: norm_l2_q(&lambda),
        max_cg_iterations: max_it,
    };
    Ok(AdjointSolution {
        p,
        q,
        lambda,
        phi,
        diagnostics,
    })
}

/// Both sides of `int int lambda rho (1 - rho) probe = phi int int q probe`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationMetric {
    pub lambda_side: f64,
    pub q_side: f64,
}

pub fn concentration_metric(
    adj: &AdjointSolution,
    state: &StateSolution,
    probe: &Trajectory,
) -> Result<ConcentrationMetric> {
    probe.check_same_shape(&adj.q)?;
    if probe.snapshot(0).max_abs() != 0.0 {
        return Err(Error::Domain("probe must vanish at t = 0".into()));
    }
    let weighted = adj
        .lambda
        .zip_map(&state.rho, |l, r| l * r * (1.0 - r))?;
    Ok(ConcentrationMetric {
        lambda_side: inner_product_q(&weighted, probe)?,
        q_side: adj.phi * inner_product_q(&adj.q, probe)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::grid::inner_product_q;
    use crate::optimize::Problem;

    fn small(extra: &str) -> Problem {
        let text = format!("cells_x = 16\nsteps = 40\n{extra}");
        Config::parse(&text).unwrap().build().unwrap().problem
    }

    fn level(alpha: f64) -> Level {
        Level::from_alpha(alpha, 1.0).unwrap()
    }

    #[test]
    fn terminal_values_vanish() {
        let pb = small("");
        let u = Trajectory::constant(*pb.op.grid(), *pb.weights.rho_target.time(), 1.0);
        let st = pb.state(&u, level(1e-2)).unwrap();
        let adj = solve_adjoint(&st, &pb.weights, &pb.model, &pb.op).unwrap();
        let nt = u.time().steps();
        assert_eq!(adj.p.snapshot(nt).max_abs(), 0.0);
        assert_eq!(adj.q.snapshot(nt).max_abs(), 0.0);
        assert!(adj.p.max_abs() > 0.0);
    }

    #[test]
    fn no_tracking_means_zero_adjoint() {
        let pb = small("beta1 = 0\nbeta2 = 0");
        let u = Trajectory::constant(*pb.op.grid(), *pb.weights.rho_target.time(), 0.5);
        let st = pb.state(&u, level(0.1)).unwrap();
        let adj = solve_adjoint(&st, &pb.weights, &pb.model, &pb.op).unwrap();
        assert_eq!(adj.p.max_abs(), 0.0);
        assert_eq!(adj.q.max_abs(), 0.0);
        assert_eq!(adj.diagnostics.pairing, 0.0);
    }

    #[test]
    fn pairing_is_nonnegative_and_consistent() {
        let pb = small("");
        let time = *pb.weights.rho_target.time();
        for alpha in [1.0, 1e-1, 1e-3] {
            let u = Trajectory::from_fn(*pb.op.grid(), time, |x, t| 1.0 + x[0] * t);
            let st = pb.state(&u, level(alpha)).unwrap();
            let adj = solve_adjoint(&st, &pb.weights, &pb.model, &pb.op).unwrap();
            let d = &adj.diagnostics;
            assert!(d.pairing >= 0.0);
            assert!((d.pairing - d.pairing_direct).abs() <= 1e-10 * d.pairing.max(1.0));
        }
    }

    #[test]
    fn obstacle_level_is_unsupported() {
        let pb = small("");
        let u = Trajectory::zeros(*pb.op.grid(), *pb.weights.rho_target.time());
        let st = pb.state(&u, Level::Obstacle).unwrap();
        assert!(matches!(
            solve_adjoint(&st, &pb.weights, &pb.model, &pb.op),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn directional_derivative_matches_central_difference() {
        let pb = small("");
        let time = *pb.weights.rho_target.time();
        let grid = *pb.op.grid();
        let lv = level(1e-2);
        let u = Trajectory::constant(grid, time, 1.0);
        let d = Trajectory::from_fn(grid, time, |x, t| (5.0 * x[0]).cos() * (0.5 + t));
        let st = pb.state(&u, lv).unwrap();
        let adj = solve_adjoint(&st, &pb.weights, &pb.model, &pb.op).unwrap();
        let g = adj.p.zip_map(&u, |p, v| p + pb.weights.beta3 * v).unwrap();
        let eps = 1e-5;
        let cost = |s: f64| {
            let mut v = u.clone();
            v.add_scaled(s, &d).unwrap();
            pb.cost(&v, lv, None).unwrap().0
        };
        let fd = (cost(eps) - cost(-eps)) / (2.0 * eps);
        let ad = inner_product_q(&g, &d).unwrap();
        assert!((fd - ad).abs() <= 1e-7 * ad.abs().max(1.0), "fd {fd} adjoint {ad}");
    }

    #[test]
    fn concentration_sides_agree() {
        let pb = small("");
        let time = *pb.weights.rho_target.time();
        let u = Trajectory::constant(*pb.op.grid(), time, 1.0);
        let st = pb.state(&u, level(1e-2)).unwrap();
        let adj = solve_adjoint(&st, &pb.weights, &pb.model, &pb.op).unwrap();
        let probe = Trajectory::from_fn(*u.grid(), time, |_, t| t);
        let m = concentration_metric(&adj, &st, &probe).unwrap();
        assert!((m.lambda_side - m.q_side).abs() <= 1e-9 * m.q_side.abs().max(1e-12));
        let bad = Trajectory::constant(*u.grid(), time, 1.0);
        assert!(concentration_metric(&adj, &st, &bad).is_err());
    }
}
