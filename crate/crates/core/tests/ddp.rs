use nalgebra::{SMatrix, Vector2, Vector3};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod oracles;
use oracles::*;

use pushplan::ddp::{self, backward_pass, forward_pass, rollout, total_cost, CostModel, SolverOptions, Termination};
use pushplan::planner::{plan_zs, Method, PlanRequest};
use pushplan::pushdyn::state_diff;
use pushplan::{Control, ContactMode, HybridState, SliderParams};

#[test]
fn separation_lqr_matches_batch_oracle() {
    let (x0, cost, n, dt) = lqr_problem();
    let p = SliderParams::default();
    let (traj, report) = ddp::solve(&x0, &vec![Control::zero(); n], &cost, &SolverOptions::default(), dt, &p).unwrap();
    assert!(traj.modes.iter().all(|m| *m == ContactMode::Separation));
    let oracle = lqr_oracle(&x0, &cost, n, dt);
    let worst = traj.controls.iter().zip(&oracle).map(|(u, o)| (u.accel - o).amax()).fold(0.0, f64::max);
    assert!(worst <= 1e-8, "max control error {worst:e}");
    assert!(report.iterations <= 2, "{} iterations", report.iterations);
    assert!(report.converged);
}

#[test]
fn costate_gradient_matches_finite_differences() {
    let p = SliderParams::default();
    let dt = 0.05;
    for seed in 0..5 {
        let (x0, cost, controls) = pushing_problem(seed);
        let mut nominal = rollout(&x0, &controls, dt, &p, None).unwrap();
        nominal.evaluate(&cost);
        assert!(nominal.modes.iter().any(|m| m.is_contact()));
        let bp = backward_pass(&nominal, &cost, 0.0, &p).or_else(|| backward_pass(&nominal, &cost, 1.0, &p)).unwrap();
        let schedule = nominal.modes.clone();
        let j = |us: &[Control]| {
            let t = rollout(&x0, us, dt, &p, Some(&schedule)).unwrap();
            total_cost(&cost, &t.state_vectors(), &t.control_vectors())
        };
        let h = 1e-6;
        for t in (0..controls.len()).step_by(7) {
            for i in 0..2 {
                let (mut up, mut um) = (controls.clone(), controls.clone());
                up[t].accel[i] += h;
                um[t].accel[i] -= h;
                let fd = (j(&up) - j(&um)) / (2.0 * h);
                let an = bp.cost_gradient[t][i];
                assert!((fd - an).abs() <= 1e-4 * (1.0 + fd.abs()), "seed {seed} t {t} i {i}: fd {fd} vs {an}");
            }
        }
    }
}

#[test]
fn indefinite_cost_stops_at_reg_max() {
    let (x0, mut cost, n, dt) = lqr_problem();
    cost.r = SMatrix::identity() * -1e12;
    let p = SliderParams::default();
    let u0 = vec![Control::new(0.1, 0.0); n];
    let (traj, report) = ddp::solve(&x0, &u0, &cost, &SolverOptions::default(), dt, &p).unwrap();
    assert_eq!(report.termination_reason, Termination::RegMax);
    assert!(!report.converged);
    assert_eq!(report.cost_trace.len(), 1);
    assert_eq!(traj.controls, u0);
}

#[test]
fn zero_step_reproduces_nominal() {
    let p = SliderParams::default();
    let (x0, cost, controls) = pushing_problem(9);
    let mut nominal = rollout(&x0, &controls, 0.05, &p, None).unwrap();
    nominal.evaluate(&cost);
    let bp = backward_pass(&nominal, &cost, 1.0, &p).unwrap();
    let same = forward_pass(&nominal, &bp.gains, &bp.feedforward, 0.0, &cost, 0.05, &p).unwrap();
    assert_eq!(same, nominal);
}

#[test]
fn cost_traces_decrease_on_pushing_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let target = Vector3::new(uniform(&mut rng, -0.15, 0.15), uniform(&mut rng, -0.15, 0.15), uniform(&mut rng, -1.0, 1.0));
        let mut req = PlanRequest::new(target, Method::Zs);
        req.horizon = 120;
        let res = plan_zs(&req).unwrap();
        let trace = &res.report.cost_trace;
        assert!(trace.windows(2).all(|w| w[1] < w[0]), "{trace:?}");
        assert_eq!(*trace.last().unwrap(), res.trajectory.total_cost);
        assert!(trace.len() <= res.report.iterations + 1);
    }
}

#[test]
fn feedback_reduces_drift_under_perturbation() {
    let target = Vector3::new(0.1, 0.03, 0.3);
    let res = plan_zs(&PlanRequest::new(target, Method::Zs)).unwrap();
    let p = SliderParams::default();
    let nominal = &res.trajectory;
    let end = nominal.final_state().to_vector();
    let dist = |x: &HybridState| {
        let e = state_diff(&x.to_vector(), &end);
        (e[0].powi(2) + e[1].powi(2) + (0.25 / std::f64::consts::PI).powi(2) * e[2].powi(2)).sqrt()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut better = 0;
    for _ in 0..50 {
        let mut x0 = nominal.states[0];
        x0.slider_pose += Vector3::new(uniform(&mut rng, -0.003, 0.003), uniform(&mut rng, -0.003, 0.003), uniform(&mut rng, -0.03, 0.03));
        let open = rollout(&x0, &nominal.controls, nominal.dt, &p, None).unwrap();
        let closed = ddp::closed_loop_rollout(nominal, &res.report, &x0, &p).unwrap();
        if dist(closed.final_state()) < dist(open.final_state()) {
            better += 1;
        }
    }
    assert!(better >= 45, "feedback helped in {better}/50 trials");
}

#[test]
fn solve_is_deterministic() {
    let (x0, cost, controls) = pushing_problem(4);
    let p = SliderParams::default();
    let a = ddp::solve(&x0, &controls, &cost, &SolverOptions::default(), 0.05, &p).unwrap();
    let b = ddp::solve(&x0, &controls, &cost, &SolverOptions::default(), 0.05, &p).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rollout_rejects_bad_input() {
    let (x0, ..) = lqr_problem();
    let p = SliderParams::default();
    assert_eq!(rollout(&x0, &[], 0.05, &p, None).unwrap_err(), ddp::DdpError::EmptyControls);
    let err = rollout(&x0, &[Control::zero(); 3], 0.05, &p, Some(&[ContactMode::Separation])).unwrap_err();
    assert_eq!(err, ddp::DdpError::ScheduleLength { expected: 3, got: 1 });
}

#[test]
fn numeric_derivatives_match_quadratic_cost() {
    let (x0, cost, ..) = lqr_problem();
    let x = x0.to_vector();
    let u = Vector2::new(0.3, -0.2);
    let an = cost.stage_derivatives(&x, &u, 0);
    let nu = ddp::numeric_stage_derivatives(&cost, &x, &u, 0);
    assert!((an.lx - nu.lx).amax() < 1e-6 && (an.lu - nu.lu).amax() < 1e-6);
    assert!((an.lxx - nu.lxx).amax() < 1e-4 && (an.luu - nu.luu).amax() < 1e-4);
    let at = cost.terminal_derivatives(&x);
    let nt = ddp::numeric_terminal_derivatives(&cost, &x);
    assert!((at.lx - nt.lx).amax() < 1e-4 && (at.lxx - nt.lxx).amax() < 1e-2);
}

