use proptest::prelude::*;
use tactile_servo::control::*;
use tactile_servo::params::ControllerParams;
use tactile_servo::se3::*;

fn gains() -> impl Strategy<Value = [f64; 6]> {
    prop::array::uniform6(0.0f64..10.0)
}

fn errors(len: usize) -> impl Strategy<Value = Vec<[f64; 6]>> {
    prop::collection::vec(prop::array::uniform6(-50.0f64..50.0), 1..len)
}

fn pose() -> impl Strategy<Value = Pose> {
    prop::array::uniform6(-1.0f64..1.0).prop_map(|v| {
        let mut w = v;
        for x in &mut w[..3] {
            *x *= 20.0;
        }
        exp_map(&Twist::from_array(w))
    })
}

fn run(cfg: &MimoPid, seq: &[[f64; 6]], dt: f64) -> (Vec<[f64; 6]>, PidState<6>) {
    let mut st = PidState::default();
    let mut out = Vec::new();
    for e in seq {
        let (u, next) = pid_update(cfg, &st, e, dt).unwrap();
        out.push(u);
        st = next;
    }
    (out, st)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn unclipped_pid_is_linear(kp in gains(), ki in gains(), kd in gains(), seq in errors(20), a in -5.0f64..5.0) {
        let cfg = PidConfig { kp, ki, kd, integral_clip: None, output_clip: None, ewma_decay: 0.5 };
        let scaled: Vec<[f64; 6]> = seq.iter().map(|e| e.map(|x| a * x)).collect();
        let (u, _) = run(&cfg, &seq, 0.05);
        let (ua, _) = run(&cfg, &scaled, 0.05);
        for (x, y) in u.iter().zip(&ua) {
            for i in 0..6 {
                prop_assert!((a * x[i] - y[i]).abs() <= 1e-9 * (1.0 + y[i].abs()));
            }
        }
    }

    #[test]
    fn proportional_path_is_exact(kp in gains(), e in prop::array::uniform6(-50.0f64..50.0)) {
        let (u, _) = run(&PidConfig::proportional(kp), &[e, e, e], 0.1);
        for step in u {
            for i in 0..6 {
                prop_assert_eq!(step[i], kp[i] * e[i]);
            }
        }
    }

    #[test]
    fn integral_stays_inside_its_clip(ki in gains(), seq in errors(200), bound in 0.1f64..20.0, dt in 0.001f64..1.0) {
        let cfg = PidConfig {
            kp: [1.0; 6],
            ki,
            kd: [0.0; 6],
            integral_clip: Some(Clip::symmetric(bound)),
            output_clip: None,
            ewma_decay: 0.5,
        };
        let mut st = PidState::default();
        for e in &seq {
            st = pid_update(&cfg, &st, e, dt).unwrap().1;
            prop_assert!(st.integral.iter().all(|x| x.abs() <= bound));
        }
    }

    #[test]
    fn output_stays_inside_its_clip(kp in gains(), seq in errors(50)) {
        let cfg = PidConfig { output_clip: Some(Clip::uniform(-3.0, 7.0)), ..PidConfig::proportional(kp) };
        let (u, _) = run(&cfg, &seq, 0.1);
        prop_assert!(u.iter().flatten().all(|x| (-3.0..=7.0).contains(x)));
    }

    #[test]
    fn zero_error_only_advances_time(kp in gains(), ki in gains(), kd in gains(), n in 1usize..20) {
        let cfg = PidConfig { kp, ki, kd, integral_clip: None, output_clip: None, ewma_decay: 0.5 };
        let (u, st) = run(&cfg, &vec![[0.0; 6]; n], 0.25);
        prop_assert!(u.iter().flatten().all(|x| *x == 0.0));
        prop_assert_eq!(st.integral, [0.0; 6]);
        prop_assert!((st.time - 0.25 * n as f64).abs() < 1e-12);
    }

    #[test]
    fn servo_at_reference_outputs_feedforward(
        reference in prop::array::uniform6(-10.0f64..10.0),
        ff in prop::array::uniform6(-20.0f64..20.0),
    ) {
        let params = ControllerParams::tracking();
        let cfg = ServoConfig::new(reference, ff);
        let at_reference = cfg.reference_pose.inverse();
        let (out, _) = servo_control(&cfg, &params.servo.pid().unwrap(), &PidState::default(), &at_reference, 1.0 / 30.0).unwrap();
        let expect = from_mm_deg(&ff);
        prop_assert!((out.u - expect).norm() < 1e-12);
    }

    #[test]
    fn pose_error_reaches_the_reference(observed in pose(), e in prop::array::uniform6(-0.5f64..0.5)) {
        let e = Twist::from_array(e);
        let reference = observed * exp_map(&e);
        let back = pose_error(&observed, &reference).unwrap();
        prop_assert!((back - e).norm() < 1e-9);
    }

    #[test]
    fn servo_error_recomposes_to_the_observation(x_sf in pose(), reference in pose()) {
        let err = servo_error(&x_sf, &reference);
        prop_assert!((err * reference.inverse()).matrix_distance(&x_sf) < 1e-9);
    }
}
