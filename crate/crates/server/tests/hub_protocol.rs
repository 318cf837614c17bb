mod common;

use std::time::Duration;

use common::*;
use serde_json::json;
use veld::client::{Client, ClientError};
use veld::memory::NetModel;
use veld::protocol::{ClientMessage, PresenceKind, ServerMessage};
use veld_core::replica::Replica;
use veld_core::{digest, DisplayBinding, Role, Vec3};

#[tokio::test]
async fn token_decides_role() {
    let hub = hub(10);
    let mut a = Client::memory(&hub, NetModel::default(), 0);
    let mut b = Client::memory(&hub, NetModel::default(), 1);
    let mut c = Client::memory(&hub, NetModel::default(), 2);
    assert_eq!(a.hello("a", Some(TOKEN)).await.unwrap().1, Role::Instructor);
    assert_eq!(b.hello("b", None).await.unwrap().1, Role::Student);
    assert_eq!(c.hello("c", Some("guess")).await.unwrap().1, Role::Student);
    assert_eq!(hub.occupancy(), 3);
}

#[tokio::test]
async fn first_message_must_be_hello() {
    let hub = hub(10);
    for first in [r#"{"t":"JOIN","room":"hall","binding":"slides"}"#, "garbage", r#"{"t":"HELLO"}"#] {
        let mut c = Client::memory(&hub, NetModel::default(), 0);
        c.send_raw(first).unwrap();
        match c.recv_timeout(Duration::from_secs(2)).await.unwrap() {
            ServerMessage::Error { code, re, .. } => {
                assert_eq!(code, "MalformedHello");
                assert_eq!(re.as_deref(), Some("HELLO"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(c.recv_timeout(Duration::from_secs(2)).await, Err(ClientError::Closed)));
    }
    assert_eq!(hub.occupancy(), 0);
}

#[tokio::test]
async fn capacity_is_enforced_and_released() {
    let hub = hub(150);
    let mut clients = Vec::new();
    for i in 0..150 {
        clients.push(connect(&hub, &format!("s{i}"), false).await);
    }
    let mut extra = Client::memory(&hub, NetModel::default(), 0);
    match extra.hello("late", None).await {
        Err(ClientError::Refused { code, .. }) => assert_eq!(code, "ServerFull"),
        other => panic!("{other:?}"),
    }
    let (mut gone, _) = clients.pop().unwrap();
    gone.close();
    drop(gone);
    tokio::time::timeout(Duration::from_secs(5), async {
        while hub.occupancy() > 149 {
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
    })
    .await
    .unwrap();
    let mut again = Client::memory(&hub, NetModel::default(), 0);
    again.hello("again", None).await.unwrap();
}

#[tokio::test]
async fn second_hello_is_an_error() {
    let hub = hub(10);
    let (mut c, _) = connect(&hub, "a", false).await;
    c.send(&ClientMessage::Hello { token: None, name: "a".into() }).unwrap();
    assert_eq!(expect_error(&mut c).await, ("DuplicateHello".into(), Some("HELLO".into())));
}

#[tokio::test]
async fn join_errors() {
    let hub = hub(10);
    let (mut c, _) = connect(&hub, "a", false).await;
    for (room, binding, code) in [
        ("nowhere", "slides", "UnknownRoom"),
        ("hall", "pods", "InvalidBinding"),
        ("annex", "slides", "InvalidBinding"),
    ] {
        match c.join(room, binding).await {
            Err(ClientError::Refused { code: got, .. }) => assert_eq!(got, code),
            other => panic!("{other:?}"),
        }
    }
    c.join("hall", "slides").await.unwrap();
    match c.join("annex", "faceoff").await {
        Err(ClientError::Refused { code, .. }) => assert_eq!(code, "AlreadyJoined"),
        other => panic!("{other:?}"),
    }
    c.send(&ClientMessage::Leave).unwrap();
    c.join("annex", "faceoff").await.unwrap();
}

#[tokio::test]
async fn not_in_room_errors() {
    let hub = hub(10);
    let (mut c, _) = connect(&hub, "a", true).await;
    c.send(&ClientMessage::Leave).unwrap();
    assert_eq!(expect_error(&mut c).await.0, "NotInRoom");
    c.send(&select_deck(5)).unwrap();
    assert_eq!(expect_error(&mut c).await.0, "NotInRoom");
    c.join("annex", "faceoff").await.unwrap();
    c.send(&select_deck(5)).unwrap();
    assert_eq!(expect_error(&mut c).await, ("NotInRoom".into(), Some("ACTION".into())));
}

#[tokio::test]
async fn snapshot_matches_room_and_lists_members() {
    let hub = hub(10);
    let (mut a, a_id) = joined(&hub, "Ada", true).await;
    a.send(&select_deck(8)).unwrap();
    expect_ack(&mut a).await;
    let (mut b, b_id) = connect(&hub, "Bo", false).await;
    let snap = b.join("hall", "slides").await.unwrap();
    assert_eq!(snap.last_seq, 1);
    assert_eq!(digest(&snap.state), hub.room_digest("hall").unwrap());
    assert!(snap.state.occupants.contains(&a_id) && snap.state.occupants.contains(&b_id));

    let roster = drain(&mut b).await;
    let named: Vec<(String, Option<String>, Option<Role>)> = roster
        .iter()
        .filter_map(|m| match m {
            ServerMessage::Presence { kind: PresenceKind::Pos, client_id, name, role, .. } => {
                Some((client_id.clone(), name.clone(), *role))
            }
            _ => None,
        })
        .collect();
    assert!(named.contains(&(a_id.clone(), Some("Ada".into()), Some(Role::Instructor))));
    assert!(named.contains(&(b_id.clone(), Some("Bo".into()), Some(Role::Student))));

    let seen = drain(&mut a).await;
    assert!(seen.iter().any(|m| matches!(m,
        ServerMessage::Presence { kind: PresenceKind::Join, client_id, name: Some(n), .. } if *client_id == b_id && n == "Bo")));
}

#[tokio::test]
async fn fan_out_is_one_ack_and_n_minus_one_events() {
    let hub = hub(10);
    let (mut a, a_id) = joined(&hub, "a", true).await;
    let (mut b, _) = joined(&hub, "b", false).await;
    let (mut c, _) = joined(&hub, "c", false).await;
    for x in [&mut a, &mut b, &mut c] {
        drain(x).await;
    }
    a.send(&select_deck(4)).unwrap();
    let mine = drain(&mut a).await;
    assert_eq!(mine, vec![ServerMessage::Ack { seq: 1 }]);
    for x in [&mut b, &mut c] {
        let got = drain(x).await;
        assert_eq!(got.len(), 1);
        match &got[0] {
            ServerMessage::Event { seq, actor, kind, .. } => {
                assert_eq!((*seq, actor.as_str(), kind.as_str()), (1, a_id.as_str(), "SELECT_DECK"));
            }
            other => panic!("{other:?}"),
        }
    }
}

#[tokio::test]
async fn students_cannot_mutate() {
    let hub = hub(10);
    let (mut a, _) = joined(&hub, "a", true).await;
    let (mut s, _) = joined(&hub, "s", false).await;
    a.send(&select_deck(4)).unwrap();
    expect_ack(&mut a).await;
    drain(&mut a).await;
    drain(&mut s).await;
    let before = hub.room_digest("hall").unwrap();
    for m in [
        action("hall", "slides", "NEXT_SLIDE", json!({})),
        action("hall", "pods", "LOCK", json!({})),
        action("hall", "groups", "CLEAR", json!({})),
        action("hall", "faceoff", "NEXT_PROMPT", json!({"prompt_id": "q"})),
    ] {
        s.send(&m).unwrap();
        assert_eq!(expect_error(&mut s).await, ("Unauthorized".into(), Some("ACTION".into())));
    }
    assert!(events(&drain(&mut a).await).is_empty());
    assert_eq!(hub.room_digest("hall").unwrap(), before);
    assert_eq!(hub.room_log("hall").unwrap().last_seq(), 1);
    // Rejections consume no seq.
    a.send(&action("hall", "slides", "NEXT_SLIDE", json!({}))).unwrap();
    assert_eq!(expect_ack(&mut a).await, 2);
}

#[tokio::test]
async fn invalid_actions_consume_no_seq() {
    let hub = hub(10);
    let (mut a, _) = joined(&hub, "a", true).await;
    let (mut b, _) = joined(&hub, "b", false).await;
    for (m, code) in [
        (action("hall", "slides", "NEXT_SLIDE", json!({})), "IllegalTransition"),
        (action("hall", "slides", "WARP", json!({})), "UnknownKind"),
        (action("hall", "jukebox", "PLAY", json!({})), "UnknownApp"),
        (action("hall", "pods", "ASSIGN", json!({"map": {"ghost": "p1"}})), "UnknownStudent"),
    ] {
        a.send(&m).unwrap();
        let (got, re) = expect_error(&mut a).await;
        assert_eq!((got.as_str(), re.as_deref()), (code, Some("ACTION")), "{m:?}");
    }
    a.send(&select_deck(3)).unwrap();
    assert_eq!(expect_ack(&mut a).await, 1);
    a.send(&action("hall", "slides", "GOTO_SLIDE", json!({"index": "two"}))).unwrap();
    assert_eq!(expect_error(&mut a).await.0, "InvalidPayload");
    // Out-of-range targets clamp rather than fail.
    a.send(&action("hall", "slides", "GOTO_SLIDE", json!({"index": 30}))).unwrap();
    assert_eq!(expect_ack(&mut a).await, 2);
    assert_eq!(hub.room_snapshot("hall").unwrap().state.slides().unwrap().slide_index, 2);
    let seqs: Vec<u64> = events(&drain(&mut b).await)
        .iter()
        .map(|m| match m {
            ServerMessage::Event { seq, .. } => *seq,
            _ => unreachable!(),
        })
        .collect();
    assert_eq!(seqs, vec![1, 2]);
}

#[tokio::test]
async fn undecodable_lines_do_not_drop_the_connection() {
    let hub = hub(10);
    let (mut a, _) = joined(&hub, "a", true).await;
    a.send_raw("{nope").unwrap();
    a.send_raw(r#"{"t":"POS","x":"far","y":0,"z":0}"#).unwrap();
    for _ in 0..2 {
        match a.recv_until(Duration::from_secs(2), |m| matches!(m, ServerMessage::Error { .. })).await.unwrap() {
            ServerMessage::Error { code, re, .. } => assert_eq!((code.as_str(), re), ("BadMessage", None)),
            _ => unreachable!(),
        }
    }
    a.send(&select_deck(2)).unwrap();
    assert_eq!(expect_ack(&mut a).await, 1);
}

#[tokio::test]
async fn late_joiner_converges_with_early_joiner() {
    let hub = hub(10);
    let (a, _) = joined(&hub, "a", true).await;
    let (mut early, _) = connect(&hub, "early", false).await;
    let early_snap = early.join("hall", "slides").await.unwrap();
    let mut early_replica = Replica::from_snapshot(&early_snap, DisplayBinding::new("slides"));
    a.send(&select_deck(12)).unwrap();
    for i in 0..40u32 {
        let m = match i % 3 {
            0 => action("hall", "slides", "NEXT_SLIDE", json!({})),
            1 => action("hall", "slides", "GOTO_SLIDE", json!({"index": (i * 7) % 12})),
            _ => action("hall", "groups", "ASSIGN", json!({"map": {"x": "red"}})),
        };
        if i % 3 == 2 {
            continue;
        }
        a.send(&m).unwrap();
    }
    let (mut late, _) = connect(&hub, "late", false).await;
    let late_snap = late.join("hall", "slides").await.unwrap();
    let mut late_replica = Replica::from_snapshot(&late_snap, DisplayBinding::new("slides"));
    for i in 0..10 {
        a.send(&action("hall", "slides", "GOTO_SLIDE", json!({"index": i}))).unwrap();
    }
    for (c, r) in [(&mut early, &mut early_replica), (&mut late, &mut late_replica)] {
        for m in drain(c).await {
            match &m {
                ServerMessage::Event { .. } => {
                    r.on_event(&m.as_action().unwrap()).unwrap();
                }
                ServerMessage::Presence { kind: PresenceKind::Join, client_id, .. } => r.on_join(client_id),
                _ => {}
            }
        }
        assert_eq!(r.max_gap(), 0);
    }
    let server = hub.room_digest("hall").unwrap();
    assert_eq!(early_replica.digest(), server);
    assert_eq!(late_replica.digest(), server);
    assert_eq!(late_replica.last_seq(), hub.room_log("hall").unwrap().last_seq());
}

#[tokio::test]
async fn concurrent_instructors_converge() {
    let hub = hub(20);
    let (mut i1, i1_id) = joined(&hub, "i1", true).await;
    let (i2, i2_id) = joined(&hub, "i2", true).await;
    let mut watchers = Vec::new();
    for k in 0..5 {
        let (mut c, _) = connect(&hub, &format!("w{k}"), false).await;
        let snap = c.join("hall", "slides").await.unwrap();
        watchers.push((c, Replica::from_snapshot(&snap, DisplayBinding::new("slides"))));
    }
    i1.send(&select_deck(6)).unwrap();
    expect_ack(&mut i1).await;
    let a = tokio::spawn(async move {
        for k in 0..50 {
            let m = if k % 2 == 0 {
                action("hall", "groups", "ASSIGN", json!({"map": {i2_id.clone(): "red"}}))
            } else {
                action("hall", "slides", "GOTO_SLIDE", json!({"index": k % 6}))
            };
            i1.send(&m).unwrap();
            tokio::task::yield_now().await;
        }
        i1
    });
    let b = tokio::spawn(async move {
        for k in 0..50 {
            let m = if k % 2 == 0 {
                action("hall", "groups", "ASSIGN", json!({"map": {i1_id.clone(): "blue"}}))
            } else {
                action("hall", "pods", "LOCK", json!({}))
            };
            i2.send(&m).unwrap();
            tokio::task::yield_now().await;
        }
        i2
    });
    let (_i1, _i2) = (a.await.unwrap(), b.await.unwrap());
    tokio::time::sleep(Duration::from_millis(50)).await;
    let server = hub.room_digest("hall").unwrap();
    assert_eq!(hub.room_log("hall").unwrap().last_seq(), 101);
    for (c, r) in &mut watchers {
        for m in drain(c).await {
            match &m {
                ServerMessage::Event { .. } => {
                    r.on_event(&m.as_action().unwrap()).unwrap();
                }
                ServerMessage::Presence { kind: PresenceKind::Join, client_id, .. } => r.on_join(client_id),
                _ => {}
            }
        }
        assert_eq!(r.digest(), server);
    }
}

fn pos_of(messages: &[ServerMessage], id: &str) -> Option<Vec3> {
    messages
        .iter()
        .rev()
        .find(|m| matches!(m, ServerMessage::Presence { client_id, .. } if client_id == id))
        .and_then(ServerMessage::position)
}

#[tokio::test]
async fn locked_pods_clamp_students_only() {
    let hub = hub(10);
    let (mut t, t_id) = joined(&hub, "t", true).await;
    let (mut s, s_id) = joined(&hub, "s", false).await;
    let (mut w, _) = joined(&hub, "w", false).await;
    t.send(&action("hall", "pods", "ASSIGN", json!({"map": {s_id.clone(): "p1", t_id.clone(): "p1"}}))).unwrap();
    expect_ack(&mut t).await;
    t.send(&action("hall", "pods", "LOCK", json!({}))).unwrap();
    expect_ack(&mut t).await;
    drain(&mut s).await;
    drain(&mut w).await;

    s.send(&ClientMessage::pos(Vec3::new(5.0, 0.0, 0.0))).unwrap();
    let corrected = drain(&mut s).await;
    let stored = hub.position_of("hall", &s_id).unwrap();
    assert!((stored.distance(Vec3::ZERO) - 1.0).abs() < 1e-9, "{stored:?}");
    assert!((stored.x - 1.0).abs() < 1e-9);
    assert_eq!(pos_of(&corrected, &s_id), Some(stored));
    assert_eq!(pos_of(&drain(&mut w).await, &s_id), Some(stored));

    // Inside the pod nothing changes.
    s.send(&ClientMessage::pos(Vec3::new(0.3, 0.0, -0.4))).unwrap();
    drain(&mut s).await;
    assert_eq!(hub.position_of("hall", &s_id), Some(Vec3::new(0.3, 0.0, -0.4)));

    // Instructors are never clamped, even when assigned.
    t.send(&ClientMessage::pos(Vec3::new(9.0, 0.0, 9.0))).unwrap();
    drain(&mut t).await;
    assert_eq!(hub.position_of("hall", &t_id), Some(Vec3::new(9.0, 0.0, 9.0)));

    t.send(&action("hall", "pods", "UNLOCK", json!({}))).unwrap();
    expect_ack(&mut t).await;
    s.send(&ClientMessage::pos(Vec3::new(5.0, 0.0, 0.0))).unwrap();
    drain(&mut s).await;
    assert_eq!(hub.position_of("hall", &s_id), Some(Vec3::new(5.0, 0.0, 0.0)));
}

#[tokio::test]
async fn locking_pulls_students_into_their_pods() {
    let hub = hub(10);
    let (mut t, _) = joined(&hub, "t", true).await;
    let mut students = Vec::new();
    for (k, start) in
        [Vec3::new(7.0, 0.0, 0.0), Vec3::new(-12.0, 0.0, 3.0), Vec3::new(0.0, 4.0, 0.0)].into_iter().enumerate()
    {
        let (mut c, id) = joined(&hub, &format!("s{k}"), false).await;
        c.send(&ClientMessage::pos(start)).unwrap();
        drain(&mut c).await;
        students.push((c, id));
    }
    let plan = [("p1", Vec3::ZERO, 1.0), ("p2", Vec3::new(-5.0, 0.0, 3.0), 2.0), ("p1", Vec3::ZERO, 1.0)];
    let map: serde_json::Map<String, serde_json::Value> =
        students.iter().zip(plan).map(|((_, id), (pod, _, _))| (id.clone(), json!(pod))).collect();
    t.send(&action("hall", "pods", "ASSIGN", json!({ "map": map }))).unwrap();
    expect_ack(&mut t).await;
    t.send(&action("hall", "pods", "LOCK", json!({}))).unwrap();
    expect_ack(&mut t).await;
    for ((c, id), (_, center, radius)) in students.iter_mut().zip(plan) {
        let stored = hub.position_of("hall", id).unwrap();
        assert!((stored.distance(center) - radius).abs() < 1e-9, "{id}: {stored:?}");
        assert_eq!(pos_of(&drain(c).await, id), Some(stored));
    }
}

#[tokio::test]
async fn positions_do_not_touch_the_digest() {
    let hub = hub(10);
    let (a, a_id) = joined(&hub, "a", false).await;
    let (mut b, _) = joined(&hub, "b", false).await;
    drain(&mut b).await;
    let before = hub.room_digest("hall").unwrap();
    for k in 0..20 {
        a.send(&ClientMessage::pos(Vec3::new(k as f64 * 0.1, 0.0, 0.0))).unwrap();
    }
    let seen = drain(&mut b).await;
    assert_eq!(pos_of(&seen, &a_id), Some(Vec3::new(19.0 * 0.1, 0.0, 0.0)));
    assert_eq!(seen.len(), 20);
    assert_eq!(hub.room_digest("hall").unwrap(), before);
}

#[tokio::test]
async fn leaving_and_rejoining() {
    let hub = hub(10);
    let (mut a, _) = joined(&hub, "a", true).await;
    let (mut b, b_id) = joined(&hub, "b", false).await;
    a.send(&select_deck(9)).unwrap();
    a.send(&action("hall", "slides", "GOTO_SLIDE", json!({"index": 5}))).unwrap();
    expect_ack(&mut a).await;
    expect_ack(&mut a).await;
    b.close();
    drop(b);
    let left = a
        .recv_until(Duration::from_secs(2), |m| matches!(m, ServerMessage::Presence { kind: PresenceKind::Leave, .. }))
        .await
        .unwrap();
    assert!(matches!(left, ServerMessage::Presence { client_id, .. } if client_id == b_id));

    // The room keeps its state after everyone has gone.
    a.close();
    drop(a);
    tokio::time::sleep(Duration::from_millis(50)).await;
    assert_eq!(hub.occupancy(), 0);
    let (mut back, _) = connect(&hub, "back", false).await;
    let snap = back.join("hall", "slides").await.unwrap();
    assert_eq!(snap.last_seq, 2);
    assert_eq!(snap.state.slides().unwrap().slide_index, 5);
    assert_eq!(snap.state.occupants.len(), 1);
    assert_eq!(digest(&snap.state), hub.room_digest("hall").unwrap());
}

#[tokio::test]
async fn teleport_and_portals() {
    let hub = hub(10);
    let (mut a, a_id) = joined(&hub, "a", false).await;
    let (mut w, _) = joined(&hub, "w", false).await;
    drain(&mut w).await;

    a.send(&ClientMessage::Teleport { room: "mars".into() }).unwrap();
    assert_eq!(expect_error(&mut a).await, ("UnknownRoom".into(), Some("TELEPORT".into())));
    a.send(&ClientMessage::Portal { portal: 3 }).unwrap();
    assert_eq!(expect_error(&mut a).await.0, "UnknownPortal");
    a.send(&ClientMessage::Portal { portal: 0 }).unwrap();
    assert_eq!(expect_error(&mut a).await, ("TooFar".into(), Some("PORTAL".into())));

    a.send(&ClientMessage::pos(Vec3::new(9.0, 0.0, 0.5))).unwrap();
    a.send(&ClientMessage::Portal { portal: 0 }).unwrap();
    let snap = a.recv_until(Duration::from_secs(2), |m| matches!(m, ServerMessage::Snapshot { .. })).await.unwrap();
    assert!(matches!(&snap, ServerMessage::Snapshot { room, .. } if room == "annex"));
    assert_eq!(hub.position_of("annex", &a_id), Some(Vec3::new(1.0, 0.0, 1.0)));
    assert!(hub.position_of("hall", &a_id).is_none());
    assert!(drain(&mut w).await.iter().any(|m| matches!(m,
        ServerMessage::Presence { kind: PresenceKind::Leave, client_id, .. } if *client_id == a_id)));

    a.send(&ClientMessage::Teleport { room: "hall".into() }).unwrap();
    let snap = a.recv_until(Duration::from_secs(2), |m| matches!(m, ServerMessage::Snapshot { .. })).await.unwrap();
    assert!(matches!(&snap, ServerMessage::Snapshot { room, .. } if room == "hall"));
    assert_eq!(hub.position_of("hall", &a_id), Some(Vec3::ZERO));
}
