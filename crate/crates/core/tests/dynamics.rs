use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use proptest::prelude::*;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod oracles;
use oracles::*;

use pushplan::pushdyn::{
    self, active_face, classify, contact_solve, face_contact, linearize, step, ContactKind, DynamicsError,
};
use pushplan::{Control, ContactMode, Face, HybridState, SliderParams};

#[test]
fn contact_solve_matches_residual_oracle_on_1000_configurations() {
    let p = SliderParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut pulls = 0;
    for _ in 0..1000 {
        let face = Face::ALL[(rng.next_u64() % 4) as usize];
        let kind = [ContactKind::Stick, ContactKind::SlideUp, ContactKind::SlideDown][(rng.next_u64() % 3) as usize];
        let along = uniform(&mut rng, -p.half_side, p.half_side);
        let pos = face.normal::<f64>() * p.half_side + face.tangent::<f64>() * along;
        let fc = face_contact(face, &pos, &p);
        let v = Vector2::new(uniform(&mut rng, -0.1, 0.1), uniform(&mut rng, -0.1, 0.1));
        let (f_n, f_t) = oracle_force(&fc, &v, kind, &p);
        match contact_solve(&fc.contact_point, &fc.normal, &fc.tangent, &v, kind, &p) {
            Ok(sol) => {
                worst = worst.max((sol.f_n - f_n).abs()).max((sol.f_t - f_t).abs());
            }
            Err(DynamicsError::NoPush(_)) => {
                assert!(f_n < 1e-9, "NoPush reported but oracle f_n = {f_n}");
                pulls += 1;
            }
            Err(e) => panic!("unexpected {e}"),
        }
    }
    assert!(worst <= 1e-6, "worst force error {worst:e} N");
    assert!(pulls > 100 && pulls < 900);
}

#[test]
fn active_face_examples() {
    let p = SliderParams::default();
    let fc = active_face(&Vector2::new(0.05 + 1e-4, 0.0), &p).unwrap();
    assert_eq!(fc.face, Face::PosX);
    assert!((fc.gap - 1e-4).abs() < 1e-15);
    assert_eq!(fc.normal, Vector2::new(1.0, 0.0));
    assert_eq!(fc.tangent, Vector2::new(0.0, 1.0));
    let far = active_face(&Vector2::new(0.2, 0.2), &p).unwrap();
    assert!(far.gap > 0.1);
    let fc = active_face(&Vector2::new(0.0, -0.05 - 5e-4), &p).unwrap();
    assert_eq!(fc.face, Face::NegY);
    assert!((fc.contact_point - Vector2::new(0.0, -0.05)).norm() < 1e-15);
    assert!(active_face(&Vector2::new(f64::NAN, 0.0), &p).is_none());
}

#[test]
fn contact_solve_examples() {
    let p = SliderParams::default();
    let fc = face_contact(Face::PosX, &Vector2::new(0.05, 0.0), &p);
    let sol = contact_solve(&fc.contact_point, &fc.normal, &fc.tangent, &Vector2::new(-0.01, 0.0), ContactKind::Stick, &p).unwrap();
    assert!(sol.f_t.abs() < 1e-15 && sol.body_twist[2].abs() < 1e-15);
    assert!(sol.body_twist[0] < 0.0 && sol.f_n > 0.0);
    let away = contact_solve(&fc.contact_point, &fc.normal, &fc.tangent, &Vector2::new(0.01, 0.0), ContactKind::Stick, &p);
    assert!(matches!(away, Err(DynamicsError::NoPush(_))));

    // Off-centre push: check the full solution against the oracle.
    let fc = face_contact(Face::PosX, &Vector2::new(0.05, 0.02), &p);
    let v = Vector2::new(-0.01, 0.0);
    let sol = contact_solve(&fc.contact_point, &fc.normal, &fc.tangent, &v, ContactKind::Stick, &p).unwrap();
    let (f_n, f_t) = oracle_force(&fc, &v, ContactKind::Stick, &p);
    assert!((sol.f_n - f_n).abs() < 1e-9 && (sol.f_t - f_t).abs() < 1e-9);
    let f = sol.force(&fc.normal, &fc.tangent);
    let torque = fc.contact_point[0] * f[1] - fc.contact_point[1] * f[0];
    assert_eq!(sol.body_twist[2].signum(), torque.signum());
    // The induced contact-point velocity equals the pusher velocity.
    let tw = sol.body_twist;
    let v_cp = Vector2::new(tw[0] - tw[2] * fc.contact_point[1], tw[1] + tw[2] * fc.contact_point[0]);
    assert!((v_cp - v).norm() < 1e-15);
}

#[test]
fn select_mode_examples() {
    let p = SliderParams::default();
    let far = HybridState::new(Vector3::zeros(), Vector2::new(0.1, 0.0), Vector2::zeros());
    assert_eq!(pushdyn::select_mode(&far, &p), ContactMode::Separation);
    let push = HybridState::new(Vector3::zeros(), Vector2::new(0.0505, 0.0), Vector2::new(-0.01, 0.0));
    assert_eq!(pushdyn::select_mode(&push, &p), ContactMode::Sticking(Face::PosX));

    let slide = HybridState::new(Vector3::zeros(), Vector2::new(0.0505, 0.0), Vector2::new(-0.001, 0.05));
    assert_eq!(pushdyn::select_mode(&slide, &p), ContactMode::SlidingUp(Face::PosX));
    let fc = face_contact(Face::PosX, &slide.pusher_pos, &p);
    let v = slide.pusher_vel_body();
    let (f_n, f_t) = oracle_force(&fc, &v, ContactKind::Stick, &p);
    assert!(f_t > p.mu_contact * f_n);
    let up = contact_solve(&fc.contact_point, &fc.normal, &fc.tangent, &v, ContactKind::SlideUp, &p).unwrap();
    assert!(up.slip > 0.0);
}

#[test]
fn step_examples() {
    let p = SliderParams::default();
    let free = HybridState::new(Vector3::zeros(), Vector2::new(-0.2, 0.0), Vector2::new(0.1, 0.0));
    let (next, mode) = step(&free, &Control::zero(), 0.05, &p, None).unwrap();
    assert_eq!(mode, ContactMode::Separation);
    assert_eq!(next.slider_pose, free.slider_pose);
    assert!((next.pusher_pos[0] - (-0.2 + 0.005)).abs() < 1e-15);

    let push = HybridState::new(Vector3::zeros(), Vector2::new(0.0505, 0.0), Vector2::new(-0.01, 0.0));
    let (next, mode) = step(&push, &Control::zero(), 0.05, &p, None).unwrap();
    assert_eq!(mode, ContactMode::Sticking(Face::PosX));
    assert!(next.slider_pose[2].abs() < 1e-12);
    assert!(next.slider_pose[0] < 0.0);

    let off = HybridState::new(Vector3::zeros(), Vector2::new(0.0505, 0.02), Vector2::new(-0.01, 0.0));
    let (next, _) = step(&off, &Control::zero(), 0.05, &p, None).unwrap();
    let fc = face_contact(Face::PosX, &off.pusher_pos, &p);
    let (f_n, f_t) = oracle_force(&fc, &off.pusher_vel_body(), ContactKind::Stick, &p);
    let f = -fc.normal * f_n + fc.tangent * f_t;
    let torque = -fc.contact_point[1] * f[0] + fc.contact_point[0] * f[1];
    assert_eq!(next.slider_pose[2].signum(), torque.signum());

    assert!(matches!(step(&push, &Control::zero(), 0.0, &p, None), Err(DynamicsError::InvalidTimestep(_))));
    assert!(matches!(step(&push, &Control::zero(), 0.3, &p, None), Err(DynamicsError::InvalidTimestep(_))));
}

#[test]
fn thirteen_modes() {
    let modes = ContactMode::all();
    let set: std::collections::HashSet<_> = modes.iter().collect();
    assert_eq!(set.len(), 13);
    for m in modes {
        assert_eq!(m.to_string().parse::<ContactMode>().unwrap(), m);
    }
}

#[test]
fn linearize_examples() {
    let p = SliderParams::default();
    let dt = 0.05;
    let free = HybridState::new(Vector3::new(0.1, -0.2, 0.7), Vector2::new(-0.2, 0.03), Vector2::new(0.02, 0.01));
    let (a, b) = linearize(&free, &Control::new(0.1, -0.2), dt, &p, ContactMode::Separation).unwrap();
    assert!((a.fixed_view::<3, 3>(0, 0) - Matrix3::identity()).amax() < 1e-9);
    assert!((b.fixed_view::<2, 2>(5, 0) - Matrix2::identity() * dt).amax() < 1e-9);

    // Central differences agree with forward differences at a sticking nominal.
    let push = HybridState::new(Vector3::new(0.0, 0.0, 0.3), Vector2::new(-0.0505, 0.01), Vector2::new(0.03, 0.01));
    let u = Control::new(0.05, 0.0);
    let mode = step(&push, &u, dt, &p, None).unwrap().1;
    assert!(matches!(mode, ContactMode::Sticking(_)));
    let (a, b) = linearize(&push, &u, dt, &p, mode).unwrap();
    let f = |x: &pushdyn::StateVec<f64>, u: &pushdyn::ControlVec<f64>| {
        step(&HybridState::from_vector(x), &Control::from_vector(u), dt, &p, Some(mode)).unwrap().0.to_vector()
    };
    let (x0, u0) = (push.to_vector(), u.to_vector());
    let f0 = f(&x0, &u0);
    let h = 1e-7;
    for i in 0..7 {
        let mut xp = x0;
        xp[i] += h;
        let col = (f(&xp, &u0) - f0) / h;
        assert!((col - a.column(i)).amax() < 1e-5, "A column {i}");
    }
    for i in 0..2 {
        let mut up = u0;
        up[i] += h;
        let col = (f(&x0, &up) - f0) / h;
        assert!((col - b.column(i)).amax() < 1e-5, "B column {i}");
    }
}

/// Two half steps against one full step; the discrepancy shrinks about fourfold per halving.
#[test]
fn dt_refinement_ratio() {
    let p = SliderParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 100 {
        let face = Face::ALL[(rng.next_u64() % 4) as usize];
        let along = uniform(&mut rng, -0.03, 0.03);
        let pos = face.normal::<f64>() * (p.half_side + 5e-4) + face.tangent::<f64>() * along;
        let theta = uniform(&mut rng, -3.0, 3.0);
        let v_body = -face.normal::<f64>() * uniform(&mut rng, 0.01, 0.05) + face.tangent::<f64>() * uniform(&mut rng, -0.002, 0.002);
        let v = pushdyn::rotation(theta) * v_body;
        let s = HybridState::new(Vector3::new(0.0, 0.0, theta), pos, v);
        if !matches!(pushdyn::select_mode(&s, &p), ContactMode::Sticking(_)) {
            continue;
        }
        let run = |dt: f64, n: usize| {
            let mut x = s;
            for _ in 0..n {
                x = step(&x, &Control::zero(), dt, &p, None).unwrap().0;
            }
            x.slider_pose
        };
        let dt = 0.1;
        let e1 = (run(dt, 1) - run(dt / 2.0, 2)).norm();
        let e2 = (run(dt / 2.0, 1) - run(dt / 4.0, 2)).norm();
        if e2 > 0.0 {
            assert!(e1 / e2 >= 3.0, "ratio {} at {s:?}", e1 / e2);
        }
        checked += 1;
    }
}

#[test]
fn generic_over_f32() {
    let p = pushdyn::SliderParams::<f32>::default();
    let s = pushdyn::HybridState::<f32>::new(Vector3::zeros(), Vector2::new(0.0505, 0.0), Vector2::new(-0.01, 0.0));
    let (next, mode) = step(&s, &pushdyn::Control::new(0.0f32, 0.0), 0.05, &p, None).unwrap();
    assert_eq!(mode, ContactMode::Sticking(Face::PosX));
    assert!(next.slider_pose[0] < 0.0);
}

fn contact_state() -> impl Strategy<Value = HybridState> {
    (0usize..4, -0.05f64..0.05, 0.0f64..1e-3, -3.1f64..3.1, -0.1f64..0.1, -0.1f64..0.1).prop_map(|(f, along, gap, th, vx, vy)| {
        let face = Face::ALL[f];
        let pos = face.normal::<f64>() * (0.05 + gap) + face.tangent::<f64>() * along;
        HybridState::new(Vector3::new(0.0, 0.0, th), pos, Vector2::new(vx, vy))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn separation_leaves_slider_untouched(
        px in 0.052f64..0.3, py in -0.3f64..0.3, th in -3.1f64..3.1,
        vx in -0.5f64..0.5, vy in -0.5f64..0.5, ax in -5.0f64..5.0, ay in -5.0f64..5.0, face in 0usize..4,
    ) {
        let p = SliderParams::default();
        let n = Face::ALL[face].normal::<f64>();
        let t = Face::ALL[face].tangent::<f64>();
        let pos = n * px + t * py;
        let s = HybridState::new(Vector3::new(0.2, -0.1, th), pos, Vector2::new(vx, vy));
        let (next, mode) = step(&s, &Control::new(ax, ay), 0.05, &p, None).unwrap();
        prop_assert_eq!(mode, ContactMode::Separation);
        prop_assert_eq!(next.slider_pose, s.slider_pose);
    }

    #[test]
    fn guard_solutions_respect_cone_and_slip(s in contact_state(), ax in -2.0f64..2.0, ay in -2.0f64..2.0) {
        let p = SliderParams::default();
        let mut x = s;
        for _ in 0..20 {
            let mut mid = x;
            mid.pusher_vel += Vector2::new(ax, ay) * 0.05;
            let (mode, sol) = classify(&mid, &p);
            if let Some(sol) = sol {
                let mu = p.mu_contact;
                prop_assert!(sol.f_n >= 0.0);
                match mode {
                    ContactMode::Sticking(_) => prop_assert!(sol.f_t.abs() <= mu * sol.f_n + 1e-9),
                    ContactMode::SlidingUp(_) => {
                        prop_assert!((sol.f_t - mu * sol.f_n).abs() <= 1e-15 * (1.0 + sol.f_n));
                        prop_assert!(sol.slip.abs() <= 1e-12 || sol.slip > 0.0);
                    }
                    ContactMode::SlidingDown(_) => {
                        prop_assert!((sol.f_t + mu * sol.f_n).abs() <= 1e-15 * (1.0 + sol.f_n));
                        prop_assert!(sol.slip.abs() <= 1e-12 || sol.slip < 0.0);
                    }
                    ContactMode::Separation => unreachable!(),
                }
                // Passivity of the contact.
                let fc = active_face(&mid.pusher_pos, &p).unwrap();
                let f = sol.force(&fc.normal, &fc.tangent);
                let tw = sol.body_twist;
                let r = fc.contact_point;
                let v_cp = Vector2::new(tw[0] - tw[2] * r[1], tw[1] + tw[2] * r[0]);
                prop_assert!(f.dot(&v_cp) >= -1e-12);
            }
            x = step(&x, &Control::new(ax, ay), 0.05, &p, None).unwrap().0;
            // Projection keeps the pusher out of the slider.
            let fc = active_face(&x.pusher_pos, &p).unwrap();
            prop_assert!(fc.gap >= -p.contact_tol);
        }
    }

    #[test]
    fn contact_solve_is_homogeneous(
        f in 0usize..4, along in -0.05f64..0.05, vx in -0.1f64..0.1, vy in -0.1f64..0.1, k in 0usize..3, lambda in 0.01f64..100.0,
    ) {
        let p = SliderParams::default();
        let face = Face::ALL[f];
        let fc = face_contact(face, &(face.normal::<f64>() * 0.05 + face.tangent::<f64>() * along), &p);
        let kind = [ContactKind::Stick, ContactKind::SlideUp, ContactKind::SlideDown][k];
        let v = Vector2::new(vx, vy);
        let a = contact_solve(&fc.contact_point, &fc.normal, &fc.tangent, &v, kind, &p);
        let b = contact_solve(&fc.contact_point, &fc.normal, &fc.tangent, &(v * lambda), kind, &p);
        if let (Ok(a), Ok(b)) = (a, b) {
            let tol = 1e-12 * (1.0 + b.f_n.abs() + b.body_twist.norm());
            prop_assert!((a.f_n * lambda - b.f_n).abs() <= tol);
            prop_assert!((a.f_t * lambda - b.f_t).abs() <= tol);
            prop_assert!((a.body_twist * lambda - b.body_twist).norm() <= tol);
        }
    }

    #[test]
    fn quiescent_contact_has_no_twist(f in 0usize..4, along in -0.05f64..0.05) {
        let p = SliderParams::default();
        let face = Face::ALL[f];
        let pos = face.normal::<f64>() * 0.0505 + face.tangent::<f64>() * along;
        let s = HybridState::new(Vector3::zeros(), pos, Vector2::zeros());
        let fc = face_contact(face, &pos, &p);
        for kind in [ContactKind::Stick, ContactKind::SlideUp, ContactKind::SlideDown] {
            let sol = contact_solve(&fc.contact_point, &fc.normal, &fc.tangent, &Vector2::zeros(), kind, &p).unwrap();
            prop_assert_eq!(sol.body_twist, Vector3::zeros());
        }
        let (next, _) = step(&s, &Control::zero(), 0.05, &p, None).unwrap();
        prop_assert_eq!(next.slider_pose, s.slider_pose);
    }

    #[test]
    fn heading_stays_normalized(s in contact_state(), ax in -2.0f64..2.0, ay in -2.0f64..2.0) {
        let p = SliderParams::default();
        let mut x = s;
        for _ in 0..30 {
            x = step(&x, &Control::new(ax, ay), 0.05, &p, None).unwrap().0;
            let th = x.slider_pose[2];
            prop_assert!(th > -std::f64::consts::PI && th <= std::f64::consts::PI);
        }
    }
}
