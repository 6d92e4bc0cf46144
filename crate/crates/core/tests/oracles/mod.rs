//! Independent reference implementations shared by the integration suites.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, SMatrix, Vector2, Vector3};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pushplan::cost::{target_state, DsCost};
use pushplan::ddp::QuadraticCost;
use pushplan::demo::{DemoSample, Demonstration};
use pushplan::pushdyn::{ContactKind, ControlVec, FaceContact, StateVec};
use pushplan::{Control, ContactMode, Face, GuidanceRefs, HybridState, SliderParams, Weights};

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
}

/// `J A J^T` built from explicit matrix products.
pub fn oracle_compliance(r: &Vector2<f64>, p: &SliderParams) -> Matrix2<f64> {
    let j = nalgebra::Matrix2x3::new(1.0, 0.0, -r[1], 0.0, 1.0, r[0]);
    let a = Matrix3::from_diagonal(&Vector3::new(1.0 / p.f_max().powi(2), 1.0 / p.f_max().powi(2), 1.0 / p.m_max().powi(2)));
    j * a * j.transpose()
}

/// Minimizes `residual` over a 2-D box by repeated grid search and zoom.
pub fn grid_zoom_2d(residual: impl Fn(&Vector2<f64>) -> f64, half_width: f64) -> Vector2<f64> {
    const N: i32 = 40;
    let mut center = Vector2::zeros();
    let mut w = half_width;
    for _ in 0..60 {
        let mut best = (f64::INFINITY, center);
        for i in -N / 2..=N / 2 {
            for j in -N / 2..=N / 2 {
                let f = center + Vector2::new(i as f64, j as f64) * (2.0 * w / N as f64);
                let r = residual(&f);
                if r < best.0 {
                    best = (r, f);
                }
            }
        }
        center = best.1;
        w /= 4.0;
    }
    center
}

pub fn grid_zoom_1d(residual: impl Fn(f64) -> f64, half_width: f64) -> f64 {
    const N: i32 = 200;
    let mut center = 0.0;
    let mut w = half_width;
    for _ in 0..60 {
        let mut best = (f64::INFINITY, center);
        for i in -N / 2..=N / 2 {
            let f = center + i as f64 * (2.0 * w / N as f64);
            let r = residual(f);
            if r < best.0 {
                best = (r, f);
            }
        }
        center = best.1;
        w /= 10.0;
    }
    center
}

/// Oracle force `(f_n, f_t)` for `kind`, found by residual minimization.
pub fn oracle_force(fc: &FaceContact<f64>, v: &Vector2<f64>, kind: ContactKind, p: &SliderParams) -> (f64, f64) {
    let c = oracle_compliance(&fc.contact_point, p);
    let scale = 10.0 * v.norm() / c.symmetric_eigenvalues().min();
    match kind {
        ContactKind::Stick => {
            let f = grid_zoom_2d(|f| (c * f - v).norm_squared(), scale);
            (-f.dot(&fc.normal), f.dot(&fc.tangent))
        }
        _ => {
            let s = if kind == ContactKind::SlideUp { 1.0 } else { -1.0 };
            let dir = -fc.normal + fc.tangent * (s * p.mu_contact);
            let f_n = grid_zoom_1d(|f_n| (fc.normal.dot(&(c * dir * f_n)) - fc.normal.dot(v)).powi(2), scale);
            (f_n, s * p.mu_contact * f_n)
        }
    }
}

/// Free pusher far from the slider: dynamics are linear, so DDP is exact LQR.
pub fn lqr_problem() -> (HybridState, QuadraticCost<f64>, usize, f64) {
    let x0 = HybridState::new(Vector3::new(0.0, 0.0, 0.4), Vector2::new(-1.0, 0.3), Vector2::new(0.05, -0.02));
    let goal = HybridState::new(Vector3::new(0.0, 0.0, 0.4), Vector2::new(-0.8, 0.4), Vector2::zeros()).to_vector();
    let q = SMatrix::from_diagonal(&StateVec::from_column_slice(&[0.0, 0.0, 0.0, 1.0, 2.0, 0.5, 0.5]));
    let qt = SMatrix::from_diagonal(&StateVec::from_column_slice(&[0.0, 0.0, 0.0, 500.0, 500.0, 50.0, 50.0]));
    let cost = QuadraticCost { state_ref: goal, q, r: SMatrix::identity() * 0.1, goal, q_terminal: qt };
    (x0, cost, 40, 0.05)
}

/// Batch least squares over the stacked control vector.
pub fn lqr_oracle(x0: &HybridState, cost: &QuadraticCost<f64>, n: usize, dt: f64) -> Vec<Vector2<f64>> {
    // Pusher block z = (p_body, v_world); semi-implicit Euler with the slider at rest.
    let (s, c) = x0.slider_pose[2].sin_cos();
    let rt = DMatrix::from_row_slice(2, 2, &[c, s, -s, c]);
    let mut a = DMatrix::<f64>::identity(4, 4);
    a.view_mut((0, 2), (2, 2)).copy_from(&(&rt * dt));
    let mut b = DMatrix::<f64>::zeros(4, 2);
    b.view_mut((0, 0), (2, 2)).copy_from(&(&rt * (dt * dt)));
    b[(2, 0)] = dt;
    b[(3, 1)] = dt;
    let z0 = DVector::from_vec(vec![x0.pusher_pos[0], x0.pusher_pos[1], x0.pusher_vel[0], x0.pusher_vel[1]]);
    // z_t = Phi_t z0 + Gamma_t U
    let mut phi = vec![DMatrix::<f64>::identity(4, 4)];
    let mut gamma = vec![DMatrix::<f64>::zeros(4, 2 * n)];
    for t in 0..n {
        let mut g = &a * &gamma[t];
        g.view_mut((0, 2 * t), (4, 2)).copy_from(&b);
        gamma.push(g);
        phi.push(&a * &phi[t]);
    }
    let sub = |m: &SMatrix<f64, 7, 7>| DMatrix::from_fn(4, 4, |i, j| m[(i + 3, j + 3)]);
    let r_ref = DVector::from_fn(4, |i, _| cost.state_ref[i + 3]);
    let goal = DVector::from_fn(4, |i, _| cost.goal[i + 3]);
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let mut g = DVector::<f64>::zeros(2 * n);
    for t in 0..=n {
        let (w, target) = if t == n { (sub(&cost.q_terminal), &goal) } else { (sub(&cost.q), &r_ref) };
        let off = &phi[t] * &z0 - target;
        h += gamma[t].transpose() * &w * &gamma[t];
        g += gamma[t].transpose() * &w * off;
    }
    for t in 0..n {
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            h[(2 * t + i, 2 * t + j)] += cost.r[(i, j)];
        }
    }
    let u = h.cholesky().expect("positive definite").solve(&(-g));
    (0..n).map(|t| Vector2::new(u[2 * t], u[2 * t + 1])).collect()
}

pub fn pushing_problem(seed: u64) -> (HybridState, DsCost<f64>, Vec<Control>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = Vector3::new(uniform(&mut rng, 0.05, 0.15), uniform(&mut rng, -0.05, 0.05), uniform(&mut rng, -0.5, 0.5));
    let x0 = pushplan::planner::initial_state(&Vector3::zeros(), &target, &SliderParams::default());
    let controls = (0..60).map(|_| Control::new(uniform(&mut rng, 0.0, 0.3), uniform(&mut rng, -0.1, 0.1))).collect();
    (x0, DsCost::new(target_state(&target), Weights::default()), controls)
}

pub fn fixture(id: &str) -> Demonstration {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{id}.demo.jsonl"));
    Demonstration::load(path).unwrap()
}

pub fn oracle_wrap(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

pub fn oracle_cut(v: f64, l: f64) -> f64 {
    v.signum() * (v.abs() - l).max(0.0)
}

pub fn qf<const N: usize>(e: &[f64; N], w: &SMatrix<f64, N, N>) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        for j in 0..N {
            s += e[i] * w[(i, j)] * e[j];
        }
    }
    s
}

pub fn diff(a: &StateVec<f64>, b: &StateVec<f64>) -> [f64; 7] {
    let mut e = [0.0; 7];
    for i in 0..7 {
        e[i] = a[i] - b[i];
    }
    e[2] = oracle_wrap(e[2]);
    e
}

/// Element-wise total of every term, in plain loops.
pub fn oracle_total(w: &Weights, refs: &GuidanceRefs, xs: &[StateVec<f64>], us: &[ControlVec<f64>]) -> [f64; 6] {
    let n = us.len();
    let reach = qf(&diff(&xs[n], &refs.target), &w.q_terminal);
    let (mut reg, mut bound, mut sw, mut vel, mut acc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for t in 0..n {
        let u = [us[t][0], us[t][1]];
        reg += qf(&u, &w.r);
        bound += qf(&[oracle_cut(u[0], w.u_limit), oracle_cut(u[1], w.u_limit)], &w.q_bound);
        for (ts, mu) in &refs.switch_states {
            if *ts == t {
                sw += qf(&diff(&xs[t], mu), &w.q_switch);
            }
        }
        let v = refs.vel_refs[t];
        vel += qf(&[xs[t][5] - v[0], xs[t][6] - v[1]], &w.r_vel);
        let a = refs.acc_refs[t];
        acc += qf(&[u[0] - a[0], u[1] - a[1]], &w.r_acc);
    }
    [reach, reg, bound, sw, vel, acc]
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Linear scan: last index on the old face before each face change.
pub fn oracle_switch_times(modes: &[ContactMode]) -> Vec<usize> {
    let contact: Vec<(usize, Face)> = modes.iter().enumerate().filter_map(|(i, m)| m.face().map(|f| (i, f))).collect();
    contact.windows(2).filter(|w| w[0].1 != w[1].1).map(|w| w[0].0).collect()
}

pub fn random_demo(rng: &mut ChaCha8Rng, id: String) -> Demonstration {
    let modes = ContactMode::all();
    let n = 1 + (rng.next_u64() % 40) as usize;
    let dt = uniform(rng, 0.005, 0.1);
    let samples = (0..n)
        .map(|i| {
            let mut v = [0.0; 7];
            v.iter_mut().for_each(|x| *x = uniform(rng, -1e3, 1e3) * 10f64.powi((rng.next_u64() % 9) as i32 - 6));
            DemoSample {
                t: i as f64 * dt,
                state: HybridState::from_vector(&v.into()),
                control: Control::new(uniform(rng, -3.0, 3.0), uniform(rng, -3.0, 3.0)),
                mode: modes[(rng.next_u64() % 13) as usize],
            }
        })
        .collect();
    let target = Vector3::new(uniform(rng, -0.2, 0.2), uniform(rng, -0.2, 0.2), uniform(rng, -PI, PI));
    Demonstration { id, target, dt_rec: dt, samples }
}
