use chrono::{DateTime, TimeZone, Utc};
use sensorlab_core::analytics::{
    compute_report, lineage_breakdown, render_table, weekly_activity, Percent, ReportError,
};
use sensorlab_core::{
    ClassId, EventKind, EventRecord, Inquiry, InquiryId, InquiryStatus, LineageKind, LineageLink, ScoreCategory,
    ScoringEngine, SourceClass, UserId,
};
use sensorlab_protocol::SensorType;

fn at(day: u32, hour: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 6, day, hour, 0, 0).unwrap()
}

fn bare(id: u64, author: u64, lineage: Option<LineageLink>) -> Inquiry {
    Inquiry {
        id: InquiryId(id),
        author_id: UserId(author),
        class_id: ClassId(1),
        sensor_type: SensorType::Voc,
        title: String::new(),
        description: String::new(),
        notes: String::new(),
        slots: vec![],
        status: InquiryStatus::Draft,
        lineage,
        created_at: at(1, 9),
        published_at: None,
        manual_score_override: None,
        exemplar: false,
    }
}

#[test]
fn empty_log_gives_zero_report() {
    let r = compute_report(&[], &[], &ScoringEngine::default()).unwrap();
    assert_eq!((r.total_inquiries, r.active_users, r.published, r.drafts), (0, 0, 0, 0));
    assert!(r.weekly_activity.is_empty());
    assert!(r.lineage.by_source.is_empty());
    assert_eq!(r.sensor_usage.len(), 6);
    assert!(r.sensor_usage.iter().all(|s| s.inquiries == 0));
    assert!(r.score_distribution.iter().all(|s| s.inquiries == 0));
    assert!(render_table(&r).contains("total inquiries"));
}

#[test]
fn single_event_single_bucket() {
    let events = [EventRecord::new(at(3, 10), UserId(1), EventKind::SessionStart, 1)];
    let weeks = weekly_activity(&events).unwrap();
    assert_eq!(weeks.len(), 1);
    assert_eq!((weeks[0].events, weeks[0].sessions), (1, 1));
    assert_eq!(weeks[0].week_start, at(3, 0).date_naive());
}

#[test]
fn weeks_start_on_first_event_day_and_keep_gaps() {
    let events = [
        EventRecord::new(at(2, 9), UserId(1), EventKind::SessionStart, 1),
        EventRecord::new(at(8, 23), UserId(1), EventKind::InquiryCreated, 1),
        EventRecord::new(at(9, 0), UserId(1), EventKind::SessionStart, 1),
        EventRecord::new(at(30, 9), UserId(1), EventKind::SessionStart, 1),
    ];
    let weeks = weekly_activity(&events).unwrap();
    let counts: Vec<(usize, usize)> = weeks.iter().map(|w| (w.events, w.inquiries)).collect();
    assert_eq!(counts, vec![(2, 1), (1, 0), (0, 0), (0, 0), (1, 0)]);
}

#[test]
fn out_of_order_names_the_record() {
    let events = [
        EventRecord::new(at(2, 9), UserId(1), EventKind::SessionStart, 1),
        EventRecord::new(at(2, 10), UserId(1), EventKind::SessionStart, 1),
        EventRecord::new(at(1, 9), UserId(2), EventKind::SessionStart, 2),
    ];
    match compute_report(&events, &[], &ScoringEngine::default()) {
        Err(ReportError::Order(e)) => {
            assert_eq!(e.index, 2);
            assert!(e.to_string().starts_with("record 3"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn lineage_single_and_dangling() {
    let link = |source| LineageLink { kind: LineageKind::Replication, source_inquiry_id: InquiryId(source), source_class: SourceClass::OtherStudent };
    let one = [bare(1, 1, None), bare(2, 2, Some(link(1)))];
    let b = lineage_breakdown(&one).unwrap();
    let share = b.by_source.iter().find(|s| s.source == SourceClass::OtherStudent).unwrap();
    assert_eq!((share.total, share.percent), (1, Percent(10_000)));
    assert_eq!(share.percent.to_string(), "100.00%");

    let dangling = [bare(2, 2, Some(link(77)))];
    assert_eq!(
        lineage_breakdown(&dangling),
        Err(ReportError::DanglingLineage { inquiry: InquiryId(2), source_id: InquiryId(77) })
    );
}

#[test]
fn active_users_count_original_authors_only() {
    let events = [
        EventRecord::new(at(1, 9), UserId(1), EventKind::InquiryCreated, 1),
        EventRecord::new(at(1, 9), UserId(1), EventKind::InquiryCreated, 2),
        EventRecord::new(at(1, 10), UserId(2), EventKind::Replication, 3),
        EventRecord::new(at(1, 11), UserId(3), EventKind::Comment, 1),
    ];
    let r = compute_report(&events, &[], &ScoringEngine::default()).unwrap();
    assert_eq!(r.active_users, 1);
}

#[test]
fn exemplars_are_not_student_work() {
    let mut exemplar = bare(1, 9, None);
    exemplar.exemplar = true;
    let r = compute_report(&[], &[exemplar, bare(2, 1, None)], &ScoringEngine::default()).unwrap();
    assert_eq!(r.total_inquiries, 1);
    assert_eq!(r.category_count(ScoreCategory::Null), 1);
    assert_eq!(r.sensor_count(SensorType::Voc), 1);
}

#[test]
fn report_is_a_pure_function_of_its_input() {
    let events = [EventRecord::new(at(1, 9), UserId(1), EventKind::InquiryCreated, 1)];
    let inquiries = [bare(1, 1, None)];
    let engine = ScoringEngine::default();
    assert_eq!(compute_report(&events, &inquiries, &engine), compute_report(&events, &inquiries, &engine));
    let json = serde_json::to_string(&compute_report(&events, &inquiries, &engine).unwrap()).unwrap();
    assert!(json.contains("\"total_inquiries\":1"));
}
