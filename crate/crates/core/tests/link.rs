mod common;

use common::loopback::{random_frame, run_loop};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twin_core::geometry::DOF;
use twin_core::link::*;
use twin_core::motion::{plan_joint, time_parameterize, CollisionWorld, RobotLoad};
use twin_core::robotsim::{set_tool_command, SimState};
use twin_core::skills::ToolCommand;
use twin_core::{JointState, RobotModel, Scene};

#[test]
fn codec_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10_000 {
        let f = random_frame(&mut rng);
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(decode_frame(&bytes).unwrap(), f, "{}", String::from_utf8_lossy(&bytes));
        // Canonical: re-encoding gives the same bytes.
        assert_eq!(encode_frame(&decode_frame(&bytes).unwrap()).unwrap(), bytes);
    }
}

#[test]
fn codec_errors() {
    let reply = |c: f64| {
        let mut corrections = [0.0; DOF];
        corrections[3] = c;
        CyclicFrame::ClientToController(ReplyFrame { ipoc: 7, corrections, dout: 0 })
    };
    assert!(matches!(encode_frame(&reply(0.2)), Err(LinkError::ClampViolation { index: 3, .. })));
    assert!(encode_frame(&reply(0.1)).is_ok());

    let ok = "IPOC=1;E1=0.000000;A1=0.000000;A2=0.000000;A3=0.000000;A4=0.000000;A5=0.000000;A6=0.000000;RPM=0.000000;DIN=0\n";
    assert!(decode_frame(ok.as_bytes()).is_ok());
    let missing = ok.replace("IPOC=1;", "");
    assert!(matches!(decode_frame(missing.as_bytes()), Err(LinkError::Parse(_))));
    let swapped = ok.replace("A1=0.000000;A2=0.000000", "A2=0.000000;A1=0.000000");
    assert!(matches!(decode_frame(swapped.as_bytes()), Err(LinkError::Order { .. })));
    let unknown = ok.replace("DIN=0", "DIN=0;XX=1");
    assert!(matches!(decode_frame(unknown.as_bytes()), Err(LinkError::Parse(_))));
    let no_newline = ok.trim_end();
    assert!(matches!(decode_frame(no_newline.as_bytes()), Err(LinkError::Parse(_))));
    let bad_number = ok.replace("A3=0.000000", "A3=zero");
    assert!(matches!(decode_frame(bad_number.as_bytes()), Err(LinkError::Parse(_))));
    let negative_rpm = ok.replace("RPM=0.000000", "RPM=-1.000000");
    assert!(matches!(decode_frame(negative_rpm.as_bytes()), Err(LinkError::Range(_))));

    let too_big = "IPOC=3;DE1=0.000000;DA1=0.200000;DA2=0.000000;DA3=0.000000;DA4=0.000000;DA5=0.000000;DA6=0.000000;DOUT=0\n";
    assert!(matches!(decode_frame(too_big.as_bytes()), Err(LinkError::Range(_))));
}

fn still(q: JointState) -> impl Fn(&[f64; DOF]) -> Actuals {
    move |_| Actuals { q, tool_rpm: 0.0, din: 0 }
}

fn zero_reply(ipoc: u64) -> ReplyFrame {
    ReplyFrame { ipoc, corrections: [0.0; DOF], dout: 0 }
}

#[test]
fn hold_recover_and_fault() {
    let q = JointState::zero();
    let mut s = LinkState::default();
    let mut modes = Vec::new();
    let mut last_ipoc = 0;
    // Cycle 0 has nothing to answer; then replies for 5 cycles, 3 losses,
    // replies again.
    let script: Vec<bool> = [vec![true; 5], vec![false; 3], vec![true; 5]].concat();
    let (n, f, _) = controller_step(&s, None, still(q));
    s = n;
    last_ipoc = last_ipoc.max(f.ipoc);
    assert_eq!(s.mode, LinkMode::Running);
    for answered in script {
        let reply = answered.then(|| zero_reply(s.awaiting.unwrap()));
        let (n, f, applied) = controller_step(&s, reply.as_ref(), still(q));
        assert_eq!(f.ipoc, last_ipoc + 1);
        last_ipoc = f.ipoc;
        assert_eq!(applied, [0.0; DOF]);
        s = n;
        modes.push(s.mode);
    }
    use LinkMode::*;
    assert_eq!(modes, [
        Running, Running, Running, Running, Running, Holding, Holding, Holding, Running, Running, Running, Running,
        Running
    ]);
    assert_eq!(s.stats.worst_gap, 3);

    // Ten misses in a row: Holding through the ninth, Faulted on the tenth.
    for k in 1..=FAULT_MISSES {
        let (n, _, _) = controller_step(&s, None, still(q));
        s = n;
        assert_eq!(s.consecutive_misses, k);
        assert_eq!(s.mode, if k < FAULT_MISSES { Holding } else { Faulted });
    }
    // Faulted ignores even valid replies.
    for _ in 0..20 {
        let mut r = zero_reply(s.awaiting.unwrap());
        r.corrections[1] = 0.1;
        let (n, _, applied) = controller_step(&s, Some(&r), still(q));
        assert_eq!(applied, [0.0; DOF]);
        assert_eq!(n.mode, Faulted);
        s = n;
    }
    let s = s.reset();
    let (n, _, _) = controller_step(&s, None, still(q));
    assert_eq!(n.mode, Running);
}

#[test]
fn stale_replies_count_as_misses() {
    let q = JointState::zero();
    let (s, f, _) = controller_step(&LinkState::default(), None, still(q));
    let (s, _, _) = controller_step(&s, Some(&zero_reply(f.ipoc)), still(q));
    assert_eq!(s.consecutive_misses, 0);
    let mut r = zero_reply(f.ipoc);
    r.corrections[2] = 0.1;
    let (s, _, applied) = controller_step(&s, Some(&r), still(q));
    assert_eq!(applied, [0.0; DOF]);
    assert_eq!((s.consecutive_misses, s.stats.stale, s.mode), (1, 1, LinkMode::Holding));
}

#[test]
fn client_clamps_toward_desired() {
    let actual = ActualFrame { ipoc: 9, track_mm: 0.0, joints_deg: [0.0; 6], tool_rpm: 0.0, din: 0 };
    let (_, r) = client_step(&ClientState::default(), Some(&actual), &JointState::zero(), 0);
    assert_eq!(r.unwrap(), zero_reply(9));
    let mut desired = JointState::zero();
    desired.q[2] = 0.5f64.to_radians();
    desired.track = -0.0004;
    let (s, r) = client_step(&ClientState::default(), Some(&actual), &desired, 0);
    let r = r.unwrap();
    assert_eq!(r.corrections[3], 0.1);
    assert_eq!(r.corrections[0], -0.4);
    assert_eq!(s.last_ipoc, Some(9));
    let (s2, r) = client_step(&s, None, &desired, 0);
    assert!(r.is_none());
    assert_eq!(s2, s);
}

#[test]
fn impairment_basics() {
    let f = 42u32;
    assert_eq!(impair(&Impairment::perfect(), 17, &f, 1), vec![(17, 42)]);
    let lossy = Impairment { loss_prob: 1.0, ..Impairment::perfect() };
    assert!(impair(&lossy, 17, &f, 1).is_empty());
    let net = Impairment {
        loss_prob: 0.2,
        delay: DelayDist::Uniform { min: 0, max: 3 },
        duplicate_prob: 0.3,
    };
    let a: Vec<_> = (0..1000).map(|c| impair(&net, c, &c, 99)).collect();
    let b: Vec<_> = (0..1000).map(|c| impair(&net, c, &c, 99)).collect();
    assert_eq!(a, b);
    let dups = a.iter().filter(|d| d.len() == 2).count();
    assert!(dups > 100);
    for (c, d) in a.iter().enumerate() {
        for (at, v) in d {
            assert_eq!(*v, c as u64);
            assert!((c as u64..=c as u64 + 3).contains(at));
        }
    }
}

#[test]
fn loopback_holds_still_for_1e5_cycles() {
    let model = RobotModel::canonical();
    let q = model.home;
    let (sim, link, applied) = run_loop(&model, q, |_| q, 100_000, Impairment::perfect(), 0);
    assert_eq!(sim.q_actual, q);
    assert!(applied.iter().all(|a| *a == [0.0; DOF]));
    assert_eq!(link.mode, LinkMode::Running);
    assert_eq!(link.stats.missed, 0);
}

#[test]
fn corrections_never_exceed_the_clamp_under_impairment() {
    let model = RobotModel::canonical();
    let start = model.home;
    let mut far = start;
    far.track += 0.5;
    far.q[0] += 1.0;
    far.q[4] -= 0.7;
    let net = Impairment {
        loss_prob: 0.1,
        delay: DelayDist::Uniform { min: 0, max: 2 },
        duplicate_prob: 0.1,
    };
    let (a, la, log_a) = run_loop(&model, start, |_| far, 5000, net, 3);
    let (b, lb, log_b) = run_loop(&model, start, |_| far, 5000, net, 3);
    assert_eq!((a, la, &log_a), (b, lb, &log_b));
    let clamp_m = CLAMP_MM / 1000.0 + 1e-12;
    let clamp_rad = CLAMP_DEG.to_radians() + 1e-12;
    for c in &log_a {
        assert!(c[0].abs() <= clamp_m);
        assert!(c[1..].iter().all(|x| x.abs() <= clamp_rad));
    }
    assert!(la.stats.missed > 0);
}

#[test]
fn sim_tracks_a_planned_trajectory() {
    let model = RobotModel::canonical();
    let scene = Scene::canonical();
    let world = CollisionWorld::new(&scene, RobotLoad::tool(scene.tool("screwdriver").ok()));
    let start = model.home;
    let mut goal = start;
    goal.track += 0.3;
    goal.q[0] -= 0.4;
    goal.q[5] += 0.5;
    let traj = time_parameterize(&model, &plan_joint(&world, &model, &start, &goal, 1).unwrap(), 1.0);
    let dt = DEFAULT_CYCLE_MS as f64 / 1000.0;
    let cycles = (traj.duration() / dt).ceil() as u64 + 5;
    let (sim, link, _) = run_loop(
        &model,
        start,
        |k| traj.sample(k as f64 * dt),
        cycles,
        Impairment::perfect(),
        0,
    );
    assert_eq!(link.stats.missed, 0);
    let err = sim.q_actual.max_abs_diff(&goal);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn rpm_on_the_wire_is_the_commanded_rpm() {
    let model = RobotModel::canonical();
    let sim = set_tool_command(&SimState::new(model.home), &ToolCommand::ScrewCcw { rpm: 300.0 });
    let (_, frame, _) = controller_step(&LinkState::default(), None, |_| sim.actuals());
    let bytes = encode_frame(&CyclicFrame::ControllerToClient(frame)).unwrap();
    let CyclicFrame::ControllerToClient(back) = decode_frame(&bytes).unwrap() else { panic!() };
    assert_eq!(back.tool_rpm, 300.0);
    assert_ne!(back.din & bits::SCREW_RUN, 0);
}
