use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sensorlab_core::event::payload::InquiryText;
use sensorlab_core::{
    Capture, DiscoverQuery, DomainError, InquiryId, InquiryStatus, LineageKind, MemoryRepository, Repository, Role,
    UserId, Workflow, MAX_SLOTS,
};
use sensorlab_protocol::{Centi, Measurement, SensorType};

#[derive(Debug, Clone)]
enum Op {
    Create { user: usize, titled: bool },
    Edit { user: usize, target: usize, titled: bool },
    Capture { user: usize, target: usize },
    Publish { user: usize, target: usize },
    Comment { user: usize, target: usize },
    Derive { user: usize, target: usize, remix: bool },
    View { user: usize, target: usize },
}

fn op() -> impl Strategy<Value = Op> {
    let user = 0usize..3;
    let target = 0usize..8;
    prop_oneof![
        (user.clone(), any::<bool>()).prop_map(|(user, titled)| Op::Create { user, titled }),
        (user.clone(), target.clone(), any::<bool>()).prop_map(|(user, target, titled)| Op::Edit { user, target, titled }),
        (user.clone(), target.clone()).prop_map(|(user, target)| Op::Capture { user, target }),
        (user.clone(), target.clone()).prop_map(|(user, target)| Op::Capture { user, target }),
        (user.clone(), target.clone()).prop_map(|(user, target)| Op::Publish { user, target }),
        (user.clone(), target.clone()).prop_map(|(user, target)| Op::Comment { user, target }),
        (user.clone(), target.clone(), any::<bool>()).prop_map(|(user, target, remix)| Op::Derive { user, target, remix }),
        (user, target).prop_map(|(user, target)| Op::View { user, target }),
    ]
}

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 6, 1, 9, 0, 0).unwrap()
}

fn reading() -> Measurement {
    Measurement { sensor_type: SensorType::HeartRate, timestamp_ms: 0, values: vec![Centi(7200)] }
}

struct World {
    wf: Workflow,
    repo: MemoryRepository,
    students: Vec<UserId>,
}

fn world() -> World {
    let wf = Workflow::default();
    let mut repo = MemoryRepository::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let teacher = wf.register(&mut repo, "teach", Role::Teacher, t0()).unwrap();
    let class = wf.create_class(&mut repo, teacher.id, "7B", &mut rng, t0()).unwrap();
    let students = (0..3)
        .map(|n| {
            let s = wf.register(&mut repo, &format!("s{n}"), Role::Student, t0()).unwrap();
            wf.join_class(&mut repo, s.id, class.join_code.as_str(), t0()).unwrap();
            s.id
        })
        .collect();
    World { wf, repo, students }
}

fn text(titled: bool) -> InquiryText {
    InquiryText {
        title: if titled { "Pulse".into() } else { String::new() },
        description: String::new(),
        notes: String::new(),
    }
}

fn check_invariants(w: &World) {
    let all = w.repo.inquiries().unwrap();
    for inquiry in &all {
        assert!(inquiry.slots.len() <= MAX_SLOTS, "{inquiry:?}");
        if inquiry.status == InquiryStatus::Published {
            assert!(!inquiry.title.trim().is_empty() && !inquiry.slots.is_empty(), "{inquiry:?}");
        }
        // Ancestry terminates: no cycles.
        let chain = w.wf.ancestry(&w.repo, inquiry.id).unwrap();
        assert!(chain.len() <= all.len());
        for &viewer in &w.students {
            let seen = w.wf.view_inquiry(&w.repo, viewer, inquiry.id);
            if inquiry.status == InquiryStatus::Draft && inquiry.author_id != viewer {
                assert!(matches!(seen, Err(DomainError::NotFound(_))), "draft leaked to {viewer}");
            } else {
                assert!(seen.is_ok());
            }
        }
    }
    let feed = w.wf.discover(&w.repo, &DiscoverQuery::default()).unwrap();
    assert!(feed.iter().all(|i| i.status == InquiryStatus::Published));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn no_sequence_breaks_the_rules(ops in prop::collection::vec(op(), 1..60)) {
        let mut w = world();
        let mut clock = t0();
        for op in ops {
            clock += Duration::seconds(30);
            let ids: Vec<InquiryId> = w.repo.inquiries().unwrap().iter().map(|i| i.id).collect();
            let pick = |target: usize| ids.get(target % ids.len().max(1)).copied().unwrap_or(InquiryId(999));
            let events_before = w.repo.event_log().len();
            let result = match op {
                Op::Create { user, titled } => w
                    .wf
                    .create_inquiry(&mut w.repo, w.students[user], None, SensorType::HeartRate, text(titled), clock)
                    .map(drop),
                Op::Edit { user, target, titled } => {
                    w.wf.edit_inquiry(&mut w.repo, w.students[user], pick(target), text(titled), clock).map(drop)
                }
                Op::Capture { user, target } => {
                    let before = w.repo.inquiry(pick(target)).unwrap();
                    let r = w.wf.capture(
                        &mut w.repo,
                        w.students[user],
                        pick(target),
                        Capture { measurement: reading(), label: "rest".into(), photo_ref: None },
                        clock,
                    );
                    if let Some(b) = before {
                        if b.author_id == w.students[user] && b.status == InquiryStatus::Draft && b.slots.len() == MAX_SLOTS {
                            prop_assert_eq!(r.clone().map(drop), Err(DomainError::SlotLimit));
                        }
                    }
                    r.map(drop)
                }
                Op::Publish { user, target } => w.wf.publish(&mut w.repo, w.students[user], pick(target), clock).map(drop),
                Op::Comment { user, target } => {
                    w.wf.comment(&mut w.repo, w.students[user], pick(target), "nice", clock).map(drop)
                }
                Op::Derive { user, target, remix } => {
                    let kind = if remix { LineageKind::Remix } else { LineageKind::Replication };
                    w.wf.derive(&mut w.repo, w.students[user], pick(target), kind, None, clock).map(drop)
                }
                Op::View { user, target } => w.wf.view_inquiry(&w.repo, w.students[user], pick(target)).map(drop),
            };
            // A rejected write leaves no trace in the log.
            if result.is_err() {
                prop_assert_eq!(w.repo.event_log().len(), events_before);
            }
            check_invariants(&w);
        }
        // The log alone rebuilds the same inquiries.
        let mut fresh = MemoryRepository::new();
        w.wf.replay(&mut fresh, w.repo.event_log()).unwrap();
        prop_assert_eq!(fresh.inquiries().unwrap(), w.repo.inquiries().unwrap());
    }
}

#[test]
fn fourth_capture_is_rejected() {
    let mut w = world();
    let s = w.students[0];
    let inquiry = w.wf.create_inquiry(&mut w.repo, s, None, SensorType::HeartRate, text(true), t0()).unwrap();
    for n in 0..3 {
        let c = Capture { measurement: reading(), label: format!("p{n}"), photo_ref: None };
        w.wf.capture(&mut w.repo, s, inquiry.id, c, t0()).unwrap();
    }
    let c = Capture { measurement: reading(), label: "p4".into(), photo_ref: None };
    assert_eq!(w.wf.capture(&mut w.repo, s, inquiry.id, c, t0()), Err(DomainError::SlotLimit));
    assert_eq!(w.repo.inquiry(inquiry.id).unwrap().unwrap().slots.len(), 3);
}

#[test]
fn publish_rules() {
    let mut w = world();
    let s = w.students[0];
    let untitled = w.wf.create_inquiry(&mut w.repo, s, None, SensorType::HeartRate, text(false), t0()).unwrap();
    assert_eq!(
        w.wf.publish(&mut w.repo, s, untitled.id, t0()),
        Err(DomainError::Validation(vec!["title".into(), "slots".into()]))
    );
    let c = Capture { measurement: reading(), label: "rest".into(), photo_ref: None };
    w.wf.capture(&mut w.repo, s, untitled.id, c.clone(), t0()).unwrap();
    w.wf.edit_inquiry(&mut w.repo, s, untitled.id, text(true), t0()).unwrap();
    assert_eq!(w.wf.publish(&mut w.repo, w.students[1], untitled.id, t0()).map(drop), Err(DomainError::Forbidden("only the author can change an inquiry".into())));
    w.wf.publish(&mut w.repo, s, untitled.id, t0()).unwrap();
    assert!(matches!(w.wf.publish(&mut w.repo, s, untitled.id, t0()), Err(DomainError::State(_))));
    assert!(matches!(w.wf.capture(&mut w.repo, s, untitled.id, c, t0()), Err(DomainError::State(_))));
}

#[test]
fn measurement_must_match_sensor_and_range() {
    let mut w = world();
    let s = w.students[0];
    let inquiry = w.wf.create_inquiry(&mut w.repo, s, None, SensorType::HeartRate, text(true), t0()).unwrap();
    let wrong = Measurement { sensor_type: SensorType::Voc, timestamp_ms: 0, values: vec![Centi(100)] };
    let out_of_range = Measurement { sensor_type: SensorType::HeartRate, timestamp_ms: 0, values: vec![Centi(99_900)] };
    for m in [wrong, out_of_range] {
        let c = Capture { measurement: m, label: "x".into(), photo_ref: None };
        assert_eq!(w.wf.capture(&mut w.repo, s, inquiry.id, c, t0()), Err(DomainError::validation("measurement")));
    }
    let long = Capture { measurement: reading(), label: "x".repeat(81), photo_ref: None };
    assert_eq!(w.wf.capture(&mut w.repo, s, inquiry.id, long, t0()), Err(DomainError::validation("label")));
}

#[test]
fn join_codes() {
    let wf = Workflow::default();
    let mut repo = MemoryRepository::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let teacher = wf.register(&mut repo, "t", Role::Teacher, t0()).unwrap();
    let student = wf.register(&mut repo, "s", Role::Student, t0()).unwrap();
    let class = wf.create_class(&mut repo, teacher.id, "8C", &mut rng, t0()).unwrap();
    let old = class.join_code.clone();
    assert!(matches!(wf.join_class(&mut repo, student.id, "ZZZZZZ", t0()), Err(DomainError::NotFound(_))));
    let fresh = wf.regenerate_code(&mut repo, teacher.id, class.id, &mut rng, t0()).unwrap();
    assert_eq!(wf.join_class(&mut repo, student.id, old.as_str(), t0()), Err(DomainError::ExpiredCode));
    wf.join_class(&mut repo, student.id, &fresh.join_code.as_str().to_lowercase(), t0()).unwrap();
    let logged = repo.event_log().len();
    wf.join_class(&mut repo, student.id, fresh.join_code.as_str(), t0()).unwrap();
    assert_eq!(repo.event_log().len(), logged, "repeat join is a no-op");
    assert!(matches!(wf.create_class(&mut repo, student.id, "x", &mut rng, t0()), Err(DomainError::Forbidden(_))));
    assert!(matches!(wf.regenerate_code(&mut repo, student.id, class.id, &mut rng, t0()), Err(DomainError::Forbidden(_))));
}

#[test]
fn lineage_classification_and_drafts() {
    let mut w = world();
    let (a, b) = (w.students[0], w.students[1]);
    let src = w.wf.create_inquiry(&mut w.repo, a, None, SensorType::HeartRate, text(true), t0()).unwrap();
    // Drafts cannot be derived from, and look absent to others.
    assert!(matches!(w.wf.derive(&mut w.repo, b, src.id, LineageKind::Replication, None, t0()), Err(DomainError::NotFound(_))));
    let c = Capture { measurement: reading(), label: "rest".into(), photo_ref: None };
    w.wf.capture(&mut w.repo, a, src.id, c, t0()).unwrap();
    w.wf.publish(&mut w.repo, a, src.id, t0()).unwrap();
    let theirs = w.wf.derive(&mut w.repo, b, src.id, LineageKind::Replication, None, t0()).unwrap();
    let mine = w.wf.derive(&mut w.repo, a, src.id, LineageKind::Remix, None, t0()).unwrap();
    assert_eq!(theirs.lineage.unwrap().source_class, sensorlab_core::SourceClass::OtherStudent);
    assert_eq!(mine.lineage.unwrap().source_class, sensorlab_core::SourceClass::Own);
    assert_eq!(mine.title, "Pulse (remix)");
    assert!(theirs.slots.is_empty() && theirs.status == InquiryStatus::Draft);
    assert_eq!(w.wf.ancestry(&w.repo, theirs.id).unwrap(), vec![theirs.id, src.id]);
}

#[test]
fn replay_rejects_tampered_logs() {
    let mut w = world();
    let s = w.students[0];
    w.wf.create_inquiry(&mut w.repo, s, None, SensorType::HeartRate, text(true), t0()).unwrap();
    let mut events = w.repo.event_log().to_vec();
    // Drop the registration of the inquiry author: replay must refuse.
    let author_reg = events.iter().position(|e| e.actor_id == s).unwrap();
    events.remove(author_reg);
    let err = w.wf.replay(&mut MemoryRepository::new(), &events).unwrap_err();
    assert_eq!(err.index, author_reg);
}
