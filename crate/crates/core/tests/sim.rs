use std::f64::consts::FRAC_PI_2;

use approx::assert_relative_eq;
use funnelhand::fixtures::{cube45, default_hand, skill, PLANAR_RBO};
use funnelhand::*;
use proptest::prelude::*;

fn far() -> PlanarPose {
    PlanarPose::new(0.5, 0.5, 0.0)
}

fn sim_with(objects: Vec<ObjectSpec>) -> Simulator {
    Simulator::new(default_hand(), objects, SimConfig::default()).unwrap()
}

#[test]
fn bundled_hand_layout() {
    let h = default_hand();
    assert_eq!(h.name, "planar-rbo");
    assert_eq!(h.actuator_count, 11);
    assert_eq!(h.digits.len(), 5);
    for d in &h.digits[..4] {
        assert_eq!(d.links.len(), 3);
        assert_relative_eq!(d.base_pose.theta, FRAC_PI_2, epsilon = 1e-5);
    }
    let thumb = &h.digits[4];
    assert_eq!(thumb.links.len(), 3);
    // Enters from the +x side, pointing back across the palm.
    assert!(thumb.base_pose.x > h.digits[2].base_pose.x);
    assert!(thumb.base_pose.theta.abs() > FRAC_PI_2);
}

fn edited(f: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(PLANAR_RBO).unwrap();
    f(&mut v);
    v.to_string()
}

#[test]
fn hand_validation_errors_name_the_field() {
    let doc = edited(|v| v["digits"][1]["joints"][0]["actuator_index"] = 99.into());
    match load_hand_spec(&doc) {
        Err(Error::Validation { field, .. }) => assert!(field.contains("actuator_index"), "{field}"),
        other => panic!("expected validation error, got {other:?}"),
    }
    let doc = edited(|v| v["digits"][0]["joints"][2]["stiffness_min"] = 0.0.into());
    match load_hand_spec(&doc) {
        Err(Error::Validation { field, .. }) => assert!(field.contains("stiffness_min"), "{field}"),
        other => panic!("expected validation error, got {other:?}"),
    }
    assert!(matches!(load_hand_spec("{\"name\": "), Err(Error::Parse(_))));
    let doc = edited(|v| v["palm_polygon"] = serde_json::json!([[0.0, 0.0], [1.0, 0.0]]));
    assert!(matches!(load_hand_spec(&doc), Err(Error::Validation { .. })));
}

#[test]
fn hand_round_trips_through_document() {
    let h = default_hand();
    assert_eq!(load_hand_spec(&h.to_document()).unwrap(), h);
}

fn single_joint(r: (f64, f64), k: (f64, f64)) -> HandSpec {
    HandSpec {
        name: "one".into(),
        actuator_count: 1,
        palm_polygon: vec![[-0.05, -0.05], [0.05, -0.05], [0.05, 0.0], [-0.05, 0.0]],
        palm_friction: 0.5,
        link_mass_per_length: 0.25,
        digits: vec![DigitSpec {
            name: "f".into(),
            base_pose: PlanarPose::new(0.0, 0.0, FRAC_PI_2),
            links: vec![LinkSpec { length: 0.04, width: 0.01 }],
            joints: vec![JointSpec {
                actuator_index: 0,
                rest_angle_min: r.0,
                rest_angle_max: r.1,
                stiffness_min: k.0,
                stiffness_max: k.1,
                damping: 0.01,
                angle_limits: (-2.0, 2.0),
            }],
            friction_coefficient: 0.5,
        }],
    }
}

#[test]
fn rest_configuration_is_affine() {
    let h = single_joint((0.0, 1.2), (0.1, 0.5));
    let (r, k) = rest_configuration(&h, &AirMassVector::new(vec![0.5]).unwrap()).unwrap();
    assert_relative_eq!(r[0], 0.6, epsilon = 1e-15);
    assert_relative_eq!(k[0], 0.3, epsilon = 1e-15);

    let hand = default_hand();
    let (r0, k0) = rest_configuration(&hand, &AirMassVector::zeros(11)).unwrap();
    let (r1, k1) = rest_configuration(&hand, &AirMassVector::filled(11, 1.0).unwrap()).unwrap();
    for (j, joint) in hand.joints().enumerate() {
        assert_eq!(r0[j], joint.rest_angle_min);
        assert_eq!(k0[j], joint.stiffness_min);
        assert_eq!(r1[j], joint.rest_angle_max);
        assert_eq!(k1[j], joint.stiffness_max);
    }
    assert!(matches!(
        rest_configuration(&hand, &AirMassVector::zeros(10)),
        Err(Error::DimensionMismatch { .. })
    ));
}

/// Continuous solution of `I q'' + c q' + k (q - r) = 0` from rest at `q0`.
fn damped_oscillator(i: f64, c: f64, k: f64, q0: f64, r: f64, t: f64) -> f64 {
    let a = c / (2.0 * i);
    let w0sq = k / i;
    let e0 = q0 - r;
    let disc = a * a - w0sq;
    let e = if disc < -1e-12 {
        let wd = (-disc).sqrt();
        e0 * (-a * t).exp() * ((wd * t).cos() + a / wd * (wd * t).sin())
    } else if disc > 1e-12 {
        let s = disc.sqrt();
        let (l1, l2) = (-a + s, -a - s);
        e0 * (l1 * (l2 * t).exp() - l2 * (l1 * t).exp()) / (l1 - l2)
    } else {
        e0 * (1.0 + a * t) * (-a * t).exp()
    };
    r + e
}

#[test]
fn joints_settle_like_damped_springs() {
    let hand = default_hand();
    let sim = Simulator::new(hand.clone(), vec![cube45()], SimConfig::default()).unwrap();
    let mut world = sim.initial_world(&AirMassVector::zeros(11), &[far()]).unwrap();
    let start = world.joint_angles.clone();
    let on = AirMassVector::filled(11, 1.0).unwrap();
    sim.set_actuation(&mut world, &on).unwrap();
    let (rest, k) = rest_configuration(&hand, &on).unwrap();
    let inertia = sim.joint_inertia().to_vec();
    let damping: Vec<f64> = hand.joints().map(|j| j.damping).collect();

    let mut worst_track: f64 = 0.0;
    let steps = 2000;
    for n in 1..=steps {
        sim.step(&mut world).unwrap();
        if n == 50 || n == 200 {
            let t = n as f64 * sim.dt();
            for j in 0..rest.len() {
                let exact = damped_oscillator(inertia[j], damping[j], k[j], start[j], rest[j], t);
                let scale = (start[j] - rest[j]).abs().max(1e-9);
                worst_track = worst_track.max((world.joint_angles[j] - exact).abs() / scale);
            }
        }
    }
    assert!(worst_track < 0.1, "sim departs from closed form by {worst_track}");
    for j in 0..rest.len() {
        let exact = damped_oscillator(inertia[j], damping[j], k[j], start[j], rest[j], 2.0);
        assert!((exact - rest[j]).abs() < 1e-3, "closed form joint {j} not settled");
        assert!((world.joint_angles[j] - rest[j]).abs() < 1e-3, "joint {j}");
    }
}

fn slide_distance(dt: f64, v0: f64) -> f64 {
    let sim = Simulator::new(default_hand(), vec![cube45()], SimConfig::with_dt(dt)).unwrap();
    let mut world = sim.initial_world(&AirMassVector::zeros(11), &[far()]).unwrap();
    world.object_velocities[0].vx = v0;
    let x0 = world.object_poses[0].x;
    for _ in 0..(4.0 / dt) as usize {
        sim.step(&mut world).unwrap();
        if world.object_velocities[0].vx.abs() < 1e-12 {
            return world.object_poses[0].x - x0;
        }
    }
    panic!("object never came to rest at dt {dt}");
}

#[test]
fn sliding_object_stops_at_coulomb_distance() {
    let cube = cube45();
    let v0 = 0.1;
    let mug = cube.ground_friction * SimConfig::default().gravity;
    let coulomb = v0 * v0 / (2.0 * mug);
    // Continuous closed form with viscous drag dv/dt = -mug - c v.
    let c = SimConfig::default().ground_viscosity;
    let mixed = v0 / c - mug / (c * c) * (1.0 + c * v0 / mug).ln();

    let coarse = slide_distance(1.0e-3, v0);
    let fine = slide_distance(2.5e-4, v0);
    assert!((coarse - coulomb).abs() / coulomb < 0.05, "{coarse} vs {coulomb}");
    // Positions advance with the post-step velocity, so the discrete distance
    // trails the continuous one by v0 dt / 2 to first order.
    assert!((fine - mixed).abs() < (coarse - mixed).abs() / 2.0, "{coarse} {fine} {mixed}");
    for (dt, d) in [(1.0e-3, coarse), (2.5e-4, fine)] {
        let corrected = d + 0.5 * v0 * dt;
        assert!((corrected - mixed).abs() / mixed < 0.005, "dt {dt}: {corrected} vs {mixed}");
    }
}

#[test]
fn zero_dt_rejected() {
    let sim = sim_with(vec![cube45()]);
    let world = sim.initial_world(&AirMassVector::zeros(11), &[far()]).unwrap();
    assert!(step(&world, sim.hand(), sim.objects(), 0.0).is_err());
    assert!(step(&world, sim.hand(), sim.objects(), -1e-3).is_err());
    assert!(Simulator::new(default_hand(), vec![cube45()], SimConfig::with_dt(0.0)).is_err());
    let next = step(&world, sim.hand(), sim.objects(), 1e-3).unwrap();
    assert_relative_eq!(next.time, 1e-3);
}

#[test]
fn functional_step_matches_simulator() {
    let sim = sim_with(vec![cube45()]);
    let mut world = sim.initial_world(&AirMassVector::zeros(11), &[far()]).unwrap();
    sim.set_actuation(&mut world, &AirMassVector::filled(11, 0.4).unwrap()).unwrap();
    let a = step(&world, sim.hand(), sim.objects(), sim.dt()).unwrap();
    sim.step(&mut world).unwrap();
    assert_eq!(a, world);
}

#[test]
fn set_actuation_contract() {
    let sim = sim_with(vec![cube45()]);
    let mut world = sim.initial_world(&AirMassVector::zeros(11), &[far()]).unwrap();
    let a = AirMassVector::zeros(11).with(3, 0.7).unwrap();
    sim.set_actuation(&mut world, &a).unwrap();
    assert_eq!(world.current_airmass, a);
    let once = world.clone();
    sim.set_actuation(&mut world, &a).unwrap();
    assert_eq!(world, once);
    assert!(matches!(
        sim.set_actuation(&mut world, &AirMassVector::zeros(10)),
        Err(Error::DimensionMismatch { expected: 11, actual: 10 })
    ));
    assert_eq!(world, once);
    assert!(AirMassVector::new(vec![0.0, 1.5]).is_err());
}

#[test]
fn place_object_contract() {
    let sim = sim_with(vec![cube45()]);
    let mut world = sim.initial_world(&AirMassVector::zeros(11), &[far()]).unwrap();
    world.object_velocities[0].vx = 0.3;
    let p = PlanarPose::new(0.0, 0.03, 0.1);
    sim.place_object(&mut world, 0, p).unwrap();
    assert_eq!(world.object_poses[0], p);
    assert_eq!(world.object_velocities[0], Velocity::default());

    // The middle finger stands at x = 0.041 when relaxed.
    let before = world.clone();
    match sim.place_object(&mut world, 0, PlanarPose::new(0.03, 0.04, 0.0)) {
        Err(Error::Penetration { body, depth, .. }) => {
            assert!(body.contains("digit 2"), "{body}");
            assert!(depth > 1e-4);
        }
        other => panic!("expected penetration, got {other:?}"),
    }
    assert_eq!(world, before);
    // Sinking into the palm is caught too.
    assert!(matches!(
        sim.place_object(&mut world, 0, PlanarPose::new(0.0, 0.01, 0.0)),
        Err(Error::Penetration { .. })
    ));
    assert!(sim.place_object(&mut world, 3, p).is_err());
}

/// Plays the bundled spin by hand, checking every contact of every step.
#[test]
fn spin_respects_friction_cone_and_is_deterministic() {
    let sim = sim_with(vec![cube45()]);
    let spin = skill("spin").unwrap();
    let run = || {
        let mut world = sim.initial_world(&spin.keyframes[0].airmass, &[spin.nominal_start]).unwrap();
        let mut worst_cone: f64 = 0.0;
        let mut worst_normal: f64 = 0.0;
        let mut contacts = 0;
        let mut max_pen: f64 = 0.0;
        let steps = ((spin.nominal_duration() + 0.5) / sim.dt()).round() as usize;
        for n in 0..steps {
            let t = (n as f64 * sim.dt()).min(spin.nominal_duration());
            sim.set_actuation(&mut world, &interpolate(&spin, t).unwrap()).unwrap();
            sim.step(&mut world).unwrap();
            assert!(world.is_valid());
            for c in &world.contacts {
                contacts += 1;
                assert!(c.normal_impulse >= 0.0);
                worst_cone = worst_cone.max(c.tangent_impulse.abs() - c.friction * c.normal_impulse);
                worst_normal = worst_normal.max(((c.normal[0].powi(2) + c.normal[1].powi(2)).sqrt() - 1.0).abs());
                max_pen = max_pen.max(c.penetration_depth);
            }
        }
        assert!(contacts > 1000, "scenario should be contact rich");
        assert!(worst_cone <= 1e-9, "cone violated by {worst_cone}");
        assert!(worst_normal <= 1e-9);
        assert!(max_pen <= 1e-3, "penetration {max_pen}");
        world
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
}

#[test]
fn kinetic_energy_decays_under_constant_actuation() {
    let sim = sim_with(vec![cube45()]);
    let spin = skill("spin").unwrap();
    let mut world = sim.initial_world(&spin.keyframes[0].airmass, &[spin.nominal_start]).unwrap();
    // Run into the middle of the roll, then freeze the command.
    let freeze = 2.6;
    let mut peak: f64 = 0.0;
    for n in 0..(freeze / sim.dt()) as usize {
        sim.set_actuation(&mut world, &interpolate(&spin, n as f64 * sim.dt()).unwrap())
            .unwrap();
        sim.step(&mut world).unwrap();
        peak = peak.max(sim.kinetic_energy(&world));
    }
    assert!(peak > 1e-6);
    for _ in 0..(5.0 / sim.dt()) as usize {
        sim.step(&mut world).unwrap();
    }
    let ke = sim.kinetic_energy(&world);
    assert!(ke < 1e-8, "kinetic energy {ke}");
}

#[test]
fn halving_dt_keeps_spin_outcome() {
    let spin = skill("spin").unwrap();
    let run = |dt| {
        let sim = Simulator::new(default_hand(), vec![cube45()], SimConfig::with_dt(dt)).unwrap();
        let mut world = sim.initial_world(&spin.keyframes[0].airmass, &[spin.nominal_start]).unwrap();
        play(&spin, &sim, &mut world, &PlayOptions::default())
            .unwrap()
            .final_pose()
            .unwrap()
    };
    let a = run(1e-3);
    let b = run(5e-4);
    assert!((a.x - b.x).hypot(a.y - b.y) < 2e-3);
    assert!(funnelhand::skill::rotation_between(&a, &b).abs() < 2f64.to_radians());
}

proptest! {
    #[test]
    fn wrapped_angles_stay_in_half_open_range(t in -100.0f64..100.0) {
        let p = PlanarPose::new(0.0, 0.0, t);
        prop_assert!(p.theta > -std::f64::consts::PI && p.theta <= std::f64::consts::PI);
        let turns = (t - p.theta) / std::f64::consts::TAU;
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn rest_configuration_interpolates(a in proptest::collection::vec(0.0f64..=1.0, 11)) {
        let hand = default_hand();
        let (r, k) = rest_configuration(&hand, &AirMassVector::new(a.clone()).unwrap()).unwrap();
        for (j, joint) in hand.joints().enumerate() {
            let u = a[joint.actuator_index];
            let lo = joint.rest_angle_min.min(joint.rest_angle_max);
            let hi = joint.rest_angle_min.max(joint.rest_angle_max);
            prop_assert!(r[j] >= lo - 1e-12 && r[j] <= hi + 1e-12);
            prop_assert!((k[j] - (joint.stiffness_min + u * (joint.stiffness_max - joint.stiffness_min))).abs() < 1e-12);
            prop_assert!(k[j] > 0.0);
        }
    }
}
