mod common;

use std::io::Cursor;
use std::sync::Arc;
use std::time::Duration;

use dual_aeb::arbiter::{render_prompt_text, AebPrompt};
use dual_aeb::simulator::suite::bundled_named;
use dual_aeb::simulator::{camera_view, ego_summary, GroundTruthConfig, World};
use dual_aeb::slow::*;
use dual_aeb::{MetaAction, Mode, Pose2D, SimConfig, VehicleState};
use proptest::prelude::*;

use common::{random_request, random_response, rng};

/// Request for `tick` with the ego where the nominal 10 m/s cruise puts it.
fn nominal_request(scenario: &str, tick: u64) -> (SlowRequest, OracleKnowledge) {
    let sc = bundled_named(scenario).unwrap();
    let oracle = OracleKnowledge::new(&sc, GroundTruthConfig::default());
    let speed = sc.ego.speed;
    let world = World::new(sc);
    let t = world.time(tick);
    let ego = VehicleState::new(Pose2D::new(speed * t, 0.0, 0.0), speed);
    let req = SlowRequest {
        request_id: tick,
        tick,
        prompt: AebPrompt {
            text: render_prompt_text(MetaAction::Normal, None, None),
            initial_action: MetaAction::Normal,
            agent_id: None,
            predicted_collision_time: None,
            ego_speed: ego.speed,
            tick,
        },
        ego: ego_summary(&ego),
        scene_summary: camera_view(&world, &ego, t),
        history: vec![],
    };
    (req, oracle)
}

#[test]
fn billboard_reply_filters_the_advertisement() {
    for tick in [0, 10, 16, 20, 25, 30] {
        let (req, oracle) = nominal_request("billboard_ghost", tick);
        let r = mock_respond(&req, &oracle);
        assert_eq!(r.meta_action, MetaAction::Normal, "tick {tick}");
        assert!((r.brake_signal - 0.1).abs() < 1e-4);
        assert!(!r.rationale.contains(AEB_TOKEN));
        if req.scene_summary.iter().any(|o| o.id == "billboard_figure") {
            assert!(r.rationale.contains("advertisement"), "{}", r.rationale);
        }
    }
}

#[test]
fn occluded_pedestrian_warned_before_onset() {
    let (_, oracle) = nominal_request("occluded_pedestrian", 0);
    // onset: first tick the no-brake rollout labels an emergency
    let onset = oracle.labels().iter().find(|l| l.required_action == MetaAction::EmergencyBraking).unwrap().tick;
    let (req, oracle) = nominal_request("occluded_pedestrian", onset - 1);
    assert!(req.scene_summary.iter().all(|o| o.id != "pedestrian"));
    let r = mock_respond(&req, &oracle);
    assert_eq!(r.meta_action, MetaAction::EarlyWarning, "{}", r.rationale);
    assert_eq!(r.brake_signal, 0.5);
    assert!(r.rationale.ends_with(AEB_TOKEN));
    assert!(r.rationale.starts_with("The ego vehicle navigates"));
}

#[test]
fn empty_road_is_normal() {
    let (req, oracle) = nominal_request("empty_road", 5);
    let r = mock_respond(&req, &oracle);
    assert_eq!(r.meta_action, MetaAction::Normal);
    assert!((r.brake_signal - 0.1).abs() < 1e-4);
}

#[test]
fn out_of_range_tick_gets_error_reply() {
    let (mut req, oracle) = nominal_request("empty_road", 0);
    req.tick = 10_000;
    let r = mock_respond(&req, &oracle);
    assert_eq!((r.meta_action, r.brake_signal), (MetaAction::Normal, 0.0));
    assert!(r.rationale.starts_with("Protocol error"));
}

#[test]
fn sigmoid_projection() {
    assert_eq!(project_brake_signal(0.0), 0.5);
    assert!(project_brake_signal(10.0) > 0.9999);
    assert!((project_brake_signal(-2.1972) - 0.1).abs() < 1e-4);
}

#[test]
fn missing_field_is_named() {
    let mut v = serde_json::to_value(random_response(&mut rng(1))).unwrap();
    v.as_object_mut().unwrap().remove("brake_signal");
    let err = decode_response(v.to_string().as_bytes()).unwrap_err();
    assert_eq!(err.field, "brake_signal");
}

#[test]
fn malformed_fields_are_named() {
    let req = serde_json::to_value(random_request(&mut rng(2))).unwrap();
    let cases: [(&str, serde_json::Value); 4] = [
        ("prompt.initial_action", serde_json::json!("Panic")),
        ("ego.speed", serde_json::json!("fast")),
        ("request_id", serde_json::json!(-1)),
        ("prompt.text", serde_json::json!("")),
    ];
    for (path, bad) in cases {
        let mut v = req.clone();
        let mut slot = &mut v;
        for key in path.split('.') {
            slot = slot.get_mut(key).unwrap();
        }
        *slot = bad;
        let err = decode_request(v.to_string().as_bytes()).unwrap_err();
        assert_eq!(err.field, path, "{err}");
    }
    let mut v = req.clone();
    v["scene_summary"] = serde_json::json!([{"id": "a", "description": "x", "image_box": {"x_min": 5, "y_min": 0, "x_max": 1, "y_max": 3}, "distance": 1.0, "signal": null}]);
    assert_eq!(decode_request(v.to_string().as_bytes()).unwrap_err().field, "scene_summary[0].image_box");
    assert_eq!(decode_request(b"\xff\xfe").unwrap_err().field, "$");
}

#[test]
fn token_rule_enforced_on_replies() {
    let mut r = random_response(&mut rng(3));
    r.meta_action = MetaAction::EmergencyBraking;
    r.rationale = "brake now".into();
    assert_eq!(decode_response(&encode_response(&r)).unwrap_err().field, "rationale");
    r.rationale = "brake now <AEB>".into();
    r.brake_signal = 1.5;
    assert_eq!(decode_response(&encode_response(&r)).unwrap_err().field, "brake_signal");
}

#[test]
fn unknown_fields_are_dropped() {
    let r = random_response(&mut rng(4));
    let mut v = serde_json::to_value(&r).unwrap();
    v["debug"] = serde_json::json!({"trace": [1, 2, 3]});
    assert_eq!(decode_response(v.to_string().as_bytes()).unwrap(), r);
}

#[test]
fn framing_round_trip_and_truncation() {
    let mut buf = Vec::new();
    write_frame(&mut buf, b"hello").unwrap();
    write_frame(&mut buf, b"").unwrap();
    let mut cur = Cursor::new(buf.clone());
    assert_eq!(read_frame(&mut cur).unwrap().unwrap(), b"hello");
    assert_eq!(read_frame(&mut cur).unwrap().unwrap(), b"");
    assert!(read_frame(&mut cur).unwrap().is_none());
    let mut cut = Cursor::new(buf[..6].to_vec());
    assert!(read_frame(&mut cut).is_err());
}

#[test]
fn socket_session_matches_in_process() {
    let sc = bundled_named("occluded_pedestrian").unwrap();
    let cfg = SimConfig::default().with_mode(Mode::Dual);
    let oracle = Arc::new(OracleKnowledge::new(&sc, cfg.ground_truth));
    let addr = spawn_server("127.0.0.1:0", Arc::clone(&oracle)).unwrap();
    let mut tcp = TcpTransport::connect(&addr.to_string(), Duration::from_secs(2)).unwrap();
    let remote = dual_aeb::run(&sc, &cfg, &mut tcp).unwrap();
    let local = dual_aeb::run(&sc, &cfg, &mut InProcessMock::from_oracle(oracle)).unwrap();
    assert_eq!(remote.to_jsonl_string(), local.to_jsonl_string());
}

#[test]
fn server_answers_garbage_with_error_reply() {
    let oracle = OracleKnowledge::new(&bundled_named("empty_road").unwrap(), GroundTruthConfig::default());
    let mut input = Vec::new();
    write_frame(&mut input, br#"{"request_id": 42, "tick": "soon"}"#).unwrap();
    let mut stream = Cursor::new(input);
    let mut out = Vec::new();
    {
        struct Duplex<'a>(&'a mut Cursor<Vec<u8>>, &'a mut Vec<u8>);
        impl std::io::Read for Duplex<'_> {
            fn read(&mut self, b: &mut [u8]) -> std::io::Result<usize> {
                self.0.read(b)
            }
        }
        impl std::io::Write for Duplex<'_> {
            fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
                self.1.write(b)
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        serve_session(Duplex(&mut stream, &mut out), &oracle).unwrap();
    }
    let reply = decode_response(&read_frame(&mut Cursor::new(out)).unwrap().unwrap()).unwrap();
    assert_eq!(reply.request_id, 42);
    assert!(reply.rationale.contains("tick"), "{}", reply.rationale);
}

#[test]
fn unreachable_endpoint_is_reported() {
    assert!(matches!(TcpTransport::connect("127.0.0.1:1", Duration::from_millis(200)), Err(TransportError::Unreachable(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn request_round_trip(seed in any::<u64>()) {
        let req = random_request(&mut rng(seed));
        prop_assert_eq!(decode_request(&encode_request(&req)).unwrap(), req);
    }

    #[test]
    fn response_round_trip(seed in any::<u64>()) {
        let resp = random_response(&mut rng(seed));
        prop_assert_eq!(decode_response(&encode_response(&resp)).unwrap(), resp);
    }

    #[test]
    fn frame_round_trip(payload in proptest::collection::vec(any::<u8>(), 0..2048)) {
        let mut buf = Vec::new();
        write_frame(&mut buf, &payload).unwrap();
        prop_assert_eq!(read_frame(&mut Cursor::new(buf)).unwrap().unwrap(), payload);
    }
}

fn schema_keys(def: &str) -> Vec<String> {
    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../../../schema/slow-protocol.schema.json")).unwrap();
    let mut keys: Vec<String> = schema["$defs"][def]["required"]
        .as_array()
        .unwrap()
        .iter()
        .map(|k| k.as_str().unwrap().to_owned())
        .collect();
    keys.sort();
    keys
}

fn encoded_keys(v: &serde_json::Value) -> Vec<String> {
    let mut keys: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    keys
}

#[test]
fn schema_file_matches_encoded_fields() {
    let mut r = rng(5);
    let mut req = random_request(&mut r);
    while req.scene_summary.is_empty() || req.history.is_empty() {
        req = random_request(&mut r);
    }
    let req = serde_json::to_value(&req).unwrap();
    assert_eq!(encoded_keys(&req), schema_keys("request"));
    assert_eq!(encoded_keys(&req["prompt"]), schema_keys("prompt"));
    assert_eq!(encoded_keys(&req["ego"]), schema_keys("ego"));
    assert_eq!(encoded_keys(&req["scene_summary"][0]), schema_keys("scene_object"));
    assert_eq!(encoded_keys(&req["scene_summary"][0]["image_box"]), schema_keys("image_box"));
    assert_eq!(encoded_keys(&req["history"][0]), schema_keys("exchange"));
    let resp = serde_json::to_value(random_response(&mut r)).unwrap();
    assert_eq!(encoded_keys(&resp), schema_keys("response"));
}
