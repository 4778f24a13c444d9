use super::cost::{total_cost, CostBreakdown, PlannerConfig, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::V3;
use crate::pesdf::{Esdf, Pesdf};

/// Armijo sufficient-decrease constant.
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub trajectory: Trajectory,
    /// Total cost of the initial trajectory, then of every accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub costs: CostBreakdown,
}

/// Gradient descent with backtracking over the free waypoints (all but the
/// first), then uniform time scaling so no segment exceeds `v_max`.
pub fn optimize(t0: &Trajectory, p: &Pesdf, e: &Esdf, cfg: &PlannerConfig) -> Result<OptimizeResult> {
    cfg.validate()?;
    let mut t = t0.clone();
    let (mut costs, mut grad) = total_cost(&t, p, e, cfg);
    if !costs.total().is_finite() {
        return Err(Error::OptimizerDivergence { iteration: 0 });
    }
    grad[0] = V3::zeros();
    let mut history = vec![costs.total()];
    let mut step = cfg.step;
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        let gn2: f64 = grad.iter().map(|g| g.norm_squared()).sum();
        if gn2.sqrt() < cfg.tol {
            break;
        }
        let mut alpha = step;
        let accepted = loop {
            let mut cand = t.clone();
            for (pt, g) in cand.points.iter_mut().zip(&grad).skip(1) {
                *pt -= g * alpha;
            }
            let (c, g) = total_cost(&cand, p, e, cfg);
            if !c.total().is_finite() {
                return Err(Error::OptimizerDivergence { iteration: it });
            }
            if c.total() <= costs.total() - ARMIJO * alpha * gn2 {
                break Some((cand, c, g));
            }
            alpha *= 0.5;
            if alpha < MIN_STEP {
                break None;
            }
        };
        let Some((cand, c, mut g)) = accepted else { break };
        g[0] = V3::zeros();
        t = cand;
        costs = c;
        grad = g;
        history.push(costs.total());
        iterations = it;
        step = (alpha * 2.0).min(cfg.step * 16.0);
    }
    let speed = t.max_speed();
    if speed > cfg.v_max {
        t.dt *= speed / cfg.v_max;
    }
    Ok(OptimizeResult { trajectory: t, history, iterations, costs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::P3;
    use crate::pesdf::{Field3, Lattice};
    use rand::Rng;

    fn lattice() -> Lattice {
        Lattice::new(P3::new(-5.0, -5.0, 0.0), 0.2, [51, 51, 21]).unwrap()
    }

    fn flat(v: f64) -> (Pesdf, Esdf) {
        (Pesdf { field: Field3::from_fn(lattice(), |_| v), lambda: 0.5 }, Esdf { field: Field3::from_fn(lattice(), |_| 10.0), d_max: 10.0 })
    }

    #[test]
    fn smoothness_alone_straightens() {
        let (p, e) = flat(5.0);
        let cfg = PlannerConfig { lambda_p: 0.0, lambda_c: 0.0, max_iters: 5000, step: 0.05, tol: 1e-9, ..Default::default() };
        let mut r = crate::rng::rng(1);
        let mut t = Trajectory::straight(P3::new(0.0, 0.0, 1.0), P3::new(2.0, 1.0, 2.0), 10, 0.2, 10.0).unwrap();
        for pt in t.points.iter_mut().skip(1).take(9) {
            *pt += V3::new(r.random_range(-0.3..0.3), r.random_range(-0.3..0.3), r.random_range(-0.3..0.3));
        }
        let res = optimize(&t, &p, &e, &cfg).unwrap();
        let pts = &res.trajectory.points;
        let dir = (pts[10] - pts[0]) / 10.0;
        for (k, q) in pts.iter().enumerate() {
            assert!((q - (pts[0] + dir * k as f64)).norm() < 1e-3, "waypoint {k}");
        }
    }

    #[test]
    fn history_never_increases() {
        let mut r = crate::rng::rng(2);
        for seed in 0..50u64 {
            let c = P3::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), 1.5);
            let peak = Field3::from_fn(lattice(), |q| 5.0 * (-(q - c).norm_squared() / 4.0).exp());
            let p = Pesdf { field: peak, lambda: 0.5 };
            let e = Esdf { field: Field3::from_fn(lattice(), |q| (q - P3::new(0.0, 0.0, 1.0)).norm()), d_max: 10.0 };
            let t = Trajectory::straight(P3::new(-3.0, -3.0, 1.0), P3::new(3.0, 3.0, 2.0), 10, 0.2, 8.0).unwrap();
            let res = optimize(&t, &p, &e, &PlannerConfig::default()).unwrap();
            assert!(res.history.windows(2).all(|w| w[1] <= w[0]), "seed {seed}");
        }
    }

    #[test]
    fn end_reaches_goodness_peak() {
        let c = P3::new(1.6, -0.8, 1.4);
        let p = Pesdf { field: Field3::from_fn(lattice(), |q| 5.0 * (-(q - c).norm_squared() / 2.0).exp()), lambda: 1.0 };
        let (_, e) = flat(0.0);
        let cfg = PlannerConfig { lambda_p: 50.0, lambda_s: 0.01, lambda_c: 0.0, rho: 4.99, max_iters: 3000, ..Default::default() };
        let t = Trajectory::straight(P3::new(0.0, 0.0, 1.0), P3::new(1.0, 0.0, 1.0), 10, 0.2, 10.0).unwrap();
        let res = optimize(&t, &p, &e, &cfg).unwrap();
        let argmax = (0..p.field.values.len()).max_by(|&a, &b| p.field.values[a].total_cmp(&p.field.values[b])).unwrap();
        let peak = p.field.lattice.center_of(argmax);
        assert!((res.trajectory.end() - peak).norm() <= 2.0 * 0.2 * 3f64.sqrt(), "end {}", res.trajectory.end());
    }

    #[test]
    fn pose_free_result_ignores_field() {
        let cfg = PlannerConfig { lambda_p: 0.0, ..Default::default() };
        let (p1, e) = flat(1.0);
        let p2 = Pesdf { field: Field3::from_fn(lattice(), |q| q.x.sin() + 3.0), lambda: 0.5 };
        let t = Trajectory::new((0..=10).map(|k| P3::new(k as f64 * 0.3, (k as f64).sin() * 0.2, 1.0)).collect(), 0.2).unwrap();
        let a = optimize(&t, &p1, &e, &cfg).unwrap();
        let b = optimize(&t, &p2, &e, &cfg).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn speed_is_clamped() {
        let (p, e) = flat(5.0);
        let cfg = PlannerConfig { v_max: 1.0, ..Default::default() };
        let t = Trajectory::straight(P3::new(0.0, 0.0, 1.0), P3::new(4.0, 0.0, 1.0), 10, 0.2, 10.0).unwrap();
        let res = optimize(&t, &p, &e, &cfg).unwrap();
        assert!(res.trajectory.max_speed() <= 1.0 + 1e-12);
        assert_eq!(res.trajectory.points[0], t.points[0]);
    }

    #[test]
    fn non_finite_cost_diverges() {
        let (p, mut e) = flat(5.0);
        e.field.values[0] = f64::NAN;
        let t = Trajectory::straight(P3::new(-5.0, -5.0, 0.0), P3::new(0.0, 0.0, 1.0), 10, 0.2, 10.0).unwrap();
        assert!(matches!(optimize(&t, &p, &e, &PlannerConfig::default()), Err(Error::OptimizerDivergence { iteration: 0 })));
    }
}
