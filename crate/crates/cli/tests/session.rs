use funnelhand::fixtures::{cube45, default_hand, skill};
use funnelhand::{load_skill, play, Outcome, PlanarPose, PlayOptions};
use funnelhand_cli::config::bundled_skills;
use funnelhand_cli::protocol::{ClientMessage, ServerMessage, StateFrame};
use funnelhand_cli::session::FRAME_RATE;
use funnelhand_cli::{new_session, Session};
use proptest::prelude::*;

fn session() -> Session {
    new_session(default_hand(), vec![cube45()], bundled_skills(), funnelhand::sim::DEFAULT_DT).unwrap()
}

fn send(s: &mut Session, m: ClientMessage) -> Vec<ServerMessage> {
    s.handle_text(&m.to_json())
}

fn run(s: &mut Session, steps: usize) -> Vec<ServerMessage> {
    (0..steps).flat_map(|_| s.tick()).collect()
}

fn next_frame(s: &mut Session) -> StateFrame {
    for _ in 0..1000 {
        for m in s.tick() {
            if let ServerMessage::StateFrame(f) = m {
                return f;
            }
        }
    }
    panic!("no frame within a second");
}

fn only_error(replies: &[ServerMessage]) -> &str {
    match replies {
        [ServerMessage::Error { message }] => message,
        other => panic!("expected one error, got {other:?}"),
    }
}

fn set_all(s: &mut Session, values: &[f64]) {
    for (index, &value) in values.iter().enumerate() {
        assert!(send(s, ClientMessage::SetSlider { index, value }).is_empty());
    }
}

#[test]
fn starts_at_rest_above_the_palm() {
    let mut s = session();
    assert!(s.world().is_valid());
    assert!(s.simulator().max_penetration(s.world()) < 1e-4);
    run(&mut s, 1000);
    assert!(s.world().is_valid());
    let p = s.world().object_poses[0];
    assert!((p.x).abs() < 2e-3 && (p.y - 0.03).abs() < 2e-3 && p.theta.abs() < 0.02, "{p:?}");
}

#[test]
fn frames_are_decimated_to_a_fixed_rate() {
    let mut s = session();
    let msgs = run(&mut s, 1000);
    let times: Vec<f64> = msgs
        .iter()
        .filter_map(|m| match m {
            ServerMessage::StateFrame(f) => Some(f.time),
            _ => None,
        })
        .collect();
    assert_eq!(times.len(), FRAME_RATE as usize);
    for (i, t) in times.iter().enumerate() {
        // sampled at the first step at or after each frame instant
        let due = (i + 1) as f64 / FRAME_RATE;
        assert!(*t >= due - 1e-9 && *t < due + 1e-3, "{i}: {t}");
    }
}

#[test]
fn slider_is_reflected_in_the_next_frame() {
    let mut s = session();
    assert!(send(&mut s, ClientMessage::SetSlider { index: 3, value: 0.7 }).is_empty());
    let f = next_frame(&mut s);
    assert_eq!(f.airmass[3], 0.7);
    assert_eq!(f.airmass.len(), 11);
}

#[test]
fn slider_out_of_range_leaves_state_unchanged() {
    let mut s = session();
    run(&mut s, 10);
    let before = s.state();
    let r = send(&mut s, ClientMessage::SetSlider { index: 3, value: 1.5 });
    assert_eq!(only_error(&r), "slider out of range");
    assert_eq!(s.state(), before);
    let r = send(&mut s, ClientMessage::SetSlider { index: 11, value: 0.5 });
    assert_eq!(only_error(&r), "slider out of range");
    let r = send(&mut s, ClientMessage::SetSlider { index: 0, value: -0.01 });
    assert_eq!(only_error(&r), "slider out of range");
    assert_eq!(s.state(), before);
}

#[test]
fn two_captures_save_a_loadable_two_keyframe_skill() {
    let mut s = session();
    let ack = send(&mut s, ClientMessage::CaptureKeyframe { label: None });
    assert!(matches!(&ack[..], [ServerMessage::KeyframeAck { label, index: 0, count: 1, previous_duration_s: None }] if label == "KF1"));
    send(&mut s, ClientMessage::SetSlider { index: 0, value: 0.4 });
    run(&mut s, 300);
    let ack = send(&mut s, ClientMessage::CaptureKeyframe { label: None });
    match &ack[..] {
        [ServerMessage::KeyframeAck {
            label,
            index: 1,
            count: 2,
            previous_duration_s: Some(d),
        }] => {
            assert_eq!(label, "KF2");
            assert!((d - 0.3).abs() < 1e-9, "{d}");
        }
        other => panic!("{other:?}"),
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nudge.json");
    let r = send(
        &mut s,
        ClientMessage::SaveSkill {
            path: path.to_string_lossy().into(),
        },
    );
    assert!(
        matches!(&r[..], [ServerMessage::SkillSaved { keyframes: 2, name, .. }] if name == "nudge"),
        "{r:?}"
    );
    let loaded = load_skill(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(loaded.keyframes.len(), 2);
    assert_eq!(loaded.keyframes[1].airmass.values()[0], 0.4);
    assert_eq!(loaded.keyframes, s.draft());
    assert!(s.state().skills.contains(&"nudge".to_string()));
}

#[test]
fn a_capture_needs_elapsed_time() {
    let mut s = session();
    send(&mut s, ClientMessage::CaptureKeyframe { label: None });
    let before = s.state();
    let r = send(&mut s, ClientMessage::CaptureKeyframe { label: None });
    assert!(only_error(&r).contains("no time has passed"));
    assert_eq!(s.state(), before);
}

#[test]
fn saving_a_single_keyframe_is_a_validation_error() {
    let mut s = session();
    send(&mut s, ClientMessage::CaptureKeyframe { label: None });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.json");
    let before = s.state();
    let r = send(
        &mut s,
        ClientMessage::SaveSkill {
            path: path.to_string_lossy().into(),
        },
    );
    only_error(&r);
    assert!(!path.exists());
    assert_eq!(s.state(), before);
}

#[test]
fn playing_a_library_skill_reports_the_outcome() {
    let mut s = session();
    let spin = skill("spin").unwrap();
    // the session starts relaxed; move to the skill's first posture and settle
    set_all(&mut s, spin.keyframes[0].airmass.values());
    run(&mut s, 1000);
    assert!(send(
        &mut s,
        ClientMessage::PlaySkill {
            name: "spin".into(),
            time_scale: 1.0
        }
    )
    .is_empty());
    assert!(s.is_playing());
    let r = send(&mut s, ClientMessage::SetSlider { index: 0, value: 0.1 });
    assert_eq!(only_error(&r), "playback in progress");
    let mut outcome = None;
    let mut frames_while_playing = 0;
    for _ in 0..20_000 {
        for m in s.tick() {
            match m {
                ServerMessage::Outcome {
                    skill, result, final_pose, ..
                } => outcome = Some((skill, result, final_pose)),
                ServerMessage::StateFrame(f) if f.playing.is_some() => frames_while_playing += 1,
                _ => {}
            }
        }
        if outcome.is_some() {
            break;
        }
    }
    let (name, result, pose) = outcome.expect("playback finished");
    assert_eq!(name, "spin");
    assert_eq!(result, Outcome::Success);
    assert!((pose.theta - std::f64::consts::FRAC_PI_2).abs() < 0.1);
    assert!(frames_while_playing > 0);
    assert!(!s.is_playing());
}

#[test]
fn reset_restores_the_start_and_clears_the_draft() {
    let mut s = session();
    let fresh = s.state();
    send(&mut s, ClientMessage::SetSlider { index: 2, value: 0.9 });
    run(&mut s, 50);
    send(&mut s, ClientMessage::CaptureKeyframe { label: Some("a".into()) });
    assert!(send(&mut s, ClientMessage::Reset).is_empty());
    assert_eq!(s.state(), fresh);
}

#[test]
fn place_object_is_atomic() {
    let mut s = session();
    let ok = PlanarPose::new(0.002, 0.032, 0.05);
    let r = send(&mut s, ClientMessage::PlaceObject { pose: ok, object: 0 });
    assert!(r.is_empty(), "{r:?}");
    assert_eq!(s.world().object_poses[0], ok);
    let before = s.state();
    // overlapping the palm
    let r = send(
        &mut s,
        ClientMessage::PlaceObject {
            pose: PlanarPose::new(0.0, 0.0, 0.0),
            object: 0,
        },
    );
    only_error(&r);
    assert_eq!(s.state(), before);
    let r = send(&mut s, ClientMessage::PlaceObject { pose: ok, object: 4 });
    only_error(&r);
    assert_eq!(s.state(), before);
}

const MALFORMED: &[&str] = &[
    "",
    "not json",
    "[1, 2]",
    "{}",
    r#"{"type": "dance"}"#,
    r#"{"type": "set_slider"}"#,
    r#"{"type": "set_slider", "index": 3}"#,
    r#"{"type": "set_slider", "index": -1, "value": 0.5}"#,
    r#"{"type": "set_slider", "index": 3, "value": "high"}"#,
    r#"{"type": "set_slider", "index": 3, "value": 0.5, "extra": true}"#,
    r#"{"v": 2, "type": "reset"}"#,
    r#"{"v": "1", "type": "reset"}"#,
    r#"{"type": "play_skill"}"#,
    r#"{"type": "play_skill", "name": "wave"}"#,
    r#"{"type": "play_skill", "name": "spin", "time_scale": 0}"#,
    r#"{"type": "play_skill", "name": "twist"}"#,
    r#"{"type": "play_skill", "name": "draft"}"#,
    r#"{"type": "place_object", "pose": {"x": 0.0, "y": 0.0}}"#,
    r#"{"type": "save_skill", "path": ""}"#,
    r#"{"type": "save_skill", "path": "/nonexistent/dir/x.json"}"#,
    r#"{"type": "capture_keyframe", "label": ""}"#,
];

#[test]
fn malformed_messages_leave_the_session_untouched() {
    let mut s = session();
    send(&mut s, ClientMessage::SetSlider { index: 1, value: 0.3 });
    run(&mut s, 200);
    send(&mut s, ClientMessage::CaptureKeyframe { label: None });
    run(&mut s, 100);
    for text in MALFORMED {
        let before = s.state();
        let r = s.handle_text(text);
        only_error(&r);
        assert_eq!(s.state(), before, "{text}");
    }
    // the session still works afterwards
    send(&mut s, ClientMessage::SetSlider { index: 3, value: 0.7 });
    assert_eq!(next_frame(&mut s).airmass[3], 0.7);
}

#[test]
fn version_field_is_optional_but_checked() {
    let mut s = session();
    assert!(s.handle_text(r#"{"type": "set_slider", "index": 3, "value": 0.2}"#).is_empty());
    assert!(s
        .handle_text(r#"{"v": 1, "type": "set_slider", "index": 3, "value": 0.25}"#)
        .is_empty());
    assert_eq!(s.world().current_airmass.values()[3], 0.25);
}

#[test]
fn server_messages_round_trip() {
    let mut s = session();
    let f = s.frame();
    let text = f.to_json();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["v"], 1);
    assert_eq!(v["type"], "state_frame");
    assert_eq!(ServerMessage::from_json(&text).unwrap(), f);
    let ack = send(&mut s, ClientMessage::CaptureKeyframe { label: None }).remove(0);
    assert_eq!(ServerMessage::from_json(&ack.to_json()).unwrap(), ack);
}

/// Authors a three-keyframe skill by moving sliders like a person at the
/// mixing board, using the bundled spin postures as targets.
fn author_three_keyframes(s: &mut Session) {
    let spin = skill("spin").unwrap();
    for k in &spin.keyframes[..3] {
        set_all(s, k.airmass.values());
        run(s, 800);
        let r = send(s, ClientMessage::CaptureKeyframe { label: None });
        assert!(matches!(&r[..], [ServerMessage::KeyframeAck { .. }]), "{r:?}");
    }
}

#[test]
fn session_playback_matches_batch_play() {
    let mut s = session();
    author_three_keyframes(&mut s);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("draft.json");
    send(
        &mut s,
        ClientMessage::SaveSkill {
            path: path.to_string_lossy().into(),
        },
    );
    let saved = load_skill(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(saved.keyframes.len(), 3);

    let start = s.world().clone();
    assert!(send(
        &mut s,
        ClientMessage::PlaySkill {
            name: "draft".into(),
            time_scale: 1.0
        }
    )
    .is_empty());
    while s.is_playing() {
        s.tick();
    }
    let session_log = s.last_log().expect("playback logged").clone();

    let mut world = start;
    let batch_log = play(&saved, s.simulator(), &mut world, &PlayOptions::scaled(1.0)).unwrap();
    assert_eq!(session_log, batch_log);
    assert_eq!(&world, s.world());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn arbitrary_text_never_changes_state(text in ".{0,80}") {
        let mut s = session();
        let before = s.state();
        let r = s.handle_text(&text);
        let is_error = matches!(&r[..], [ServerMessage::Error { .. }]);
        prop_assert!(is_error);
        prop_assert_eq!(s.state(), before);
    }

    #[test]
    fn out_of_range_sliders_are_refused(index in 0usize..20, value in prop_oneof![-10.0..-1e-9f64, (1.0 + 1e-9)..10.0f64]) {
        let mut s = session();
        let before = s.state();
        let r = s.handle(ClientMessage::SetSlider { index, value });
        prop_assert_eq!(only_error(&r), "slider out of range");
        prop_assert_eq!(s.state(), before);
    }
}

#[test]
fn idle_start_is_exactly_stationary() {
    let mut s = session();
    let w0 = s.world().clone();
    run(&mut s, 500);
    let w = s.world();
    assert_eq!(w.joint_angles, w0.joint_angles);
    assert_eq!(w.object_poses, w0.object_poses);
}
