//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//!
//! Budgets and tolerances are pinned below. Expected values come from
//! oracles written here (bitwise CRC, hand-assembled frames, integer
//! percentages) rather than from the code under test.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sensorlab_core::analytics::report_from_log;
use sensorlab_core::event::payload::InquiryText;
use sensorlab_core::fixture::{parse_labels, source_tree_dir, CORPUS_FILE, LABELS_FILE};
use sensorlab_core::{
    read_log, Capture, CaptureSlot, ClassId, DiscoverQuery, DomainError, EventKind, Inquiry, InquiryId,
    InquiryStatus, LineageKind, MemoryRepository, Repository, Role, ScoreCategory, ScoringEngine, UserId, Workflow,
    MAX_SLOTS,
};
use sensorlab_device::{spawn_class_kit, spawn_device, DeviceConfig, KitOptions};
use sensorlab_protocol::frame::MAX_PAYLOAD;
use sensorlab_protocol::payload::{encode_data, encode_descriptor, nack_frame, start_frame};
use sensorlab_protocol::{
    crc16, decode_frame, encode_frame, host_handshake, Centi, DataPayload, Frame,
    FrameType, HostError, Measurement, SensorDescriptor, SensorType, DEFAULT_HANDSHAKE_TIMEOUT,
};
use sensorlab_service::{AppState, Gateway, ServiceConfig};
use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_sensorlab");

const FIXTURE_BUDGET: Duration = Duration::from_secs(10);
const PROTOCOL_BUDGET: Duration = Duration::from_secs(5);
const HANDSHAKE_BUDGET: Duration = Duration::from_millis(500);
/// Reported percentages may differ from the exact ratio by at most half a hundredth.
const PERCENT_TOLERANCE: f64 = 0.005;
const ROUND_TRIP_FRAMES: usize = 10_000;
const REFERENCE_FRAMES: usize = 50;
const KIT_PER_TYPE: usize = 20;
const FARM_SIMULATED_MS: u32 = 10_000;
const FARM_TIME_SCALE: f64 = 20.0;
const FARM_PERIOD_MS: u16 = 100;
const WORKFLOW_SEQUENCES: usize = 200;
const WORKFLOW_OPS: usize = 60;
const MONOTONICITY_CASES: usize = 1_000;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn corpus_text() -> String {
    fs::read_to_string(source_tree_dir().join(CORPUS_FILE)).expect("bundled corpus")
}

// ---------------------------------------------------------------- fixture

/// `100 * part / whole` to two decimals, rounded half up, in integers only.
fn percent_oracle(part: u64, whole: u64) -> String {
    let hundredths = (20_000 * part + whole) / (2 * whole);
    format!("{}.{:02}%", hundredths / 100, hundredths % 100)
}

fn fixture_report() -> Check {
    let started = Instant::now();
    let out = Command::new(BIN).args(["report", "--format", "json"]).output().map_err(fail)?;
    let elapsed = started.elapsed();
    ensure!(out.status.success(), "report exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).map_err(fail)?;

    for (key, want) in [
        ("total_inquiries", 1336),
        ("active_users", 409),
        ("published", 988),
        ("drafts", 348),
        ("replications", 74),
        ("remixes", 7),
    ] {
        ensure!(r[key] == want, "{key} = {}, want {want}", r[key]);
    }
    let denominator = r["lineage"]["total"].as_u64().unwrap_or(0);
    ensure!(denominator == 81, "lineage denominator {denominator}, want 81");
    for (source, total, want) in [("other-student", 49, "60.49%"), ("exemplar", 24, "29.63%"), ("own", 8, "9.88%")] {
        let share = r["lineage"]["by_source"]
            .as_array()
            .and_then(|a| a.iter().find(|s| s["source"] == source))
            .ok_or_else(|| format!("no {source} share"))?;
        ensure!(share["total"] == total, "{source} total {}, want {total}", share["total"]);
        ensure!(percent_oracle(total, denominator) == want, "oracle disagrees with the expected {want}");
        let hundredths = share["percent"].as_u64().unwrap_or(u64::MAX);
        let shown = format!("{}.{:02}%", hundredths / 100, hundredths % 100);
        ensure!(shown == want, "{source} shown as {shown}, want {want}");
        let exact = 100.0 * total as f64 / denominator as f64;
        ensure!((exact - hundredths as f64 / 100.0).abs() <= PERCENT_TOLERANCE, "{source} off by more than 0.005");
    }
    let sensor = |name: &str| {
        r["sensor_usage"].as_array().and_then(|a| a.iter().find(|s| s["sensor"] == name)).map(|s| s["inquiries"].clone())
    };
    ensure!(sensor("heart_rate") == Some(json!(336)), "heart rate {:?}", sensor("heart_rate"));
    ensure!(sensor("temp_humidity") == Some(json!(275)), "ambient temperature {:?}", sensor("temp_humidity"));
    let categories: HashMap<String, u64> = r["score_distribution"]
        .as_array()
        .map(|a| a.iter().map(|c| (c["category"].as_str().unwrap_or("").to_string(), c["inquiries"].as_u64().unwrap_or(0))).collect())
        .unwrap_or_default();
    ensure!(categories.get("informed") == Some(&13), "informed {:?}", categories.get("informed"));
    let naive = categories.get("naive").copied().unwrap_or(0);
    ensure!(categories.iter().all(|(c, n)| c == "naive" || *n < naive), "naive is not modal: {categories:?}");

    // The plain table carries the same headline numbers.
    let table = Command::new(BIN).arg("report").output().map_err(fail)?;
    let text = String::from_utf8_lossy(&table.stdout);
    for (label, n) in [("total inquiries", 1336), ("active users", 409), ("published", 988), ("drafts", 348)] {
        ensure!(
            text.lines().any(|l| l.trim_start().starts_with(label) && l.trim_end().ends_with(&format!(" {n}"))),
            "table lacks {label} {n}"
        );
    }
    ensure!(elapsed < FIXTURE_BUDGET, "report took {elapsed:?}, budget {FIXTURE_BUDGET:?}");
    Ok(format!(
        "1336/409/988/348, 74 replications + 7 remixes, 60.49/29.63/9.88% of 81, HR 336, temp 275, Informed 13, \
         Naive modal; {elapsed:.2?} (budget {FIXTURE_BUDGET:?}, percent tolerance {PERCENT_TOLERANCE})"
    ))
}

// ---------------------------------------------------------------- protocol

/// Bit-at-a-time CRC-16/CCITT-FALSE, from the definition.
fn crc16_bitwise(bytes: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &byte in bytes {
        for bit in (0..8).rev() {
            let input = (byte >> bit) & 1 == 1;
            let top = crc & 0x8000 != 0;
            crc <<= 1;
            if input != top {
                crc ^= 0x1021;
            }
        }
    }
    crc
}

/// Sync, version 1, type, length, payload, big-endian CRC over version..payload.
fn oracle_encoding(type_code: u8, payload: &[u8]) -> Vec<u8> {
    let mut body = vec![0x01, type_code, payload.len() as u8];
    body.extend_from_slice(payload);
    let crc = crc16_bitwise(&body);
    let mut out = vec![0xAA, 0x55];
    out.extend(body);
    out.extend(crc.to_be_bytes());
    out
}

fn reference_frames() -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut frames = vec![Frame::empty(FrameType::IdentReq), Frame::empty(FrameType::Stop), start_frame(500), nack_frame(1)];
    for (n, t) in SensorType::ALL.into_iter().enumerate() {
        let cal = (t == SensorType::BodyTemp).then(sensorlab_device::default_calibration);
        frames.push(Frame::new(FrameType::IdentResp, encode_descriptor(&SensorDescriptor::factory(t, 0x5E00_0000 + n as u32, cal))));
    }
    while frames.len() < REFERENCE_FRAMES {
        let t = SensorType::ALL[rng.random_range(0..SensorType::ALL.len())];
        let values = t.default_channels().iter().map(|c| Centi(rng.random_range(c.range_min.0..=c.range_max.0))).collect();
        let data = DataPayload { timestamp_ms: rng.random(), serial_number: rng.random(), values };
        frames.push(Frame::new(FrameType::Data, encode_data(&data)));
    }
    frames
}

fn protocol_suite() -> Check {
    let started = Instant::now();
    let check = crc16_bitwise(b"123456789");
    ensure!(check == 0x29B1, "oracle check value {check:#06x}");
    ensure!(crc16(b"123456789") == 0x29B1, "codec check value {:#06x}", crc16(b"123456789"));

    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    for n in 0..ROUND_TRIP_FRAMES {
        let frame_type = FrameType::ALL[rng.random_range(0..FrameType::ALL.len())];
        let len = rng.random_range(0..=MAX_PAYLOAD);
        let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let frame = Frame::new(frame_type, payload);
        let bytes = encode_frame(&frame).map_err(fail)?;
        ensure!(bytes == oracle_encoding(frame_type.code(), &frame.payload), "frame {n}: encoding differs from oracle");
        let (decoded, used) = decode_frame(&bytes).map_err(|e| format!("frame {n}: {e}"))?;
        ensure!(used == bytes.len() && decoded == frame, "frame {n}: decode mismatch");
        ensure!(encode_frame(&decoded).map_err(fail)? == bytes, "frame {n}: re-encoding differs");
    }

    let references = reference_frames();
    let mut corruptions = 0usize;
    for (n, frame) in references.iter().enumerate() {
        let bytes = encode_frame(frame).map_err(fail)?;
        ensure!(decode_frame(&bytes).map_err(fail)?.0 == *frame, "reference {n} does not decode");
        for pos in 0..bytes.len() {
            for value in 0..=255u8 {
                if value == bytes[pos] {
                    continue;
                }
                let mut corrupted = bytes.clone();
                corrupted[pos] = value;
                corruptions += 1;
                if let Ok((decoded, _)) = decode_frame(&corrupted) {
                    return Err(format!("reference {n}: byte {pos} -> {value:#04x} went undetected as {decoded:?}"));
                }
            }
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < PROTOCOL_BUDGET, "suite took {elapsed:?}, budget {PROTOCOL_BUDGET:?}");
    Ok(format!(
        "CRC(\"123456789\") = 0x29B1, {ROUND_TRIP_FRAMES} round trips byte-identical, {corruptions} single-byte \
         corruptions of {} reference frames all detected; {elapsed:.2?} (budget {PROTOCOL_BUDGET:?})",
        references.len()
    ))
}

// ---------------------------------------------------------------- plug and play

/// Channel counts per sensor type, as the device documentation states them.
fn expected_channels(t: SensorType) -> usize {
    match t {
        SensorType::TempHumidity | SensorType::LightUv => 2,
        SensorType::HeartRate | SensorType::BodyTemp | SensorType::Voc | SensorType::Conductance => 1,
    }
}

fn plug_and_play() -> Check {
    let mut slowest = Duration::ZERO;
    for (n, t) in SensorType::ALL.into_iter().enumerate() {
        let device = spawn_device(DeviceConfig::factory(t, 0x0100 + n as u32, n as u64)).map_err(fail)?;
        let started = Instant::now();
        let stream = TcpStream::connect(device.addr()).map_err(fail)?;
        let session = host_handshake(stream, DEFAULT_HANDSHAKE_TIMEOUT).map_err(|e| format!("{t}: {e}"))?;
        let elapsed = started.elapsed();
        slowest = slowest.max(elapsed);
        ensure!(elapsed < HANDSHAKE_BUDGET, "{t}: handshake took {elapsed:?}");
        let d = session.descriptor();
        ensure!(d.sensor_type == t, "{t}: descriptor says {}", d.sensor_type);
        ensure!(d.channels.len() == expected_channels(t), "{t}: {} channels", d.channels.len());
    }

    let started = Instant::now();
    let options = KitOptions { count_per_type: KIT_PER_TYPE, seed: 2021, time_scale: FARM_TIME_SCALE };
    let farm = Arc::new(spawn_class_kit(&options).map_err(fail)?);
    ensure!(farm.len() == 6 * KIT_PER_TYPE, "farm has {} devices", farm.len());
    let serials: HashSet<u32> = farm.devices().iter().map(|d| d.serial_number()).collect();
    ensure!(serials.len() == farm.len(), "duplicate serials in the kit");
    let workers: Vec<_> = farm
        .devices()
        .iter()
        .map(|d| {
            let (addr, serial, t) = (d.addr(), d.serial_number(), d.sensor_type());
            thread::spawn(move || stream_device(addr, serial, t))
        })
        .collect();
    let mut mismatches = 0usize;
    let mut frames = 0usize;
    let mut errors = Vec::new();
    for w in workers {
        match w.join().map_err(|_| "device worker panicked".to_string())? {
            Ok(run) => {
                mismatches += run.mismatches;
                frames += run.frames;
            }
            Err(e) => errors.push(e),
        }
    }
    ensure!(errors.is_empty(), "{} devices failed, first: {}", errors.len(), errors[0]);
    ensure!(mismatches == 0, "{mismatches} cross-device serial mismatches");
    let per_device = (FARM_SIMULATED_MS / u32::from(FARM_PERIOD_MS)) as usize;
    ensure!(frames >= farm.len() * per_device, "only {frames} measurements");
    Ok(format!(
        "6 types handshaken, slowest {slowest:.1?} (budget {HANDSHAKE_BUDGET:?}), channel counts match; \
         {}-device kit streamed {FARM_SIMULATED_MS} simulated ms, {frames} measurements, 0 serial mismatches in {:.2?}",
        farm.len(),
        started.elapsed()
    ))
}

struct FarmRun {
    frames: usize,
    mismatches: usize,
}

fn stream_device(addr: SocketAddr, serial: u32, sensor: SensorType) -> Result<FarmRun, String> {
    let stream = TcpStream::connect(addr).map_err(fail)?;
    let mut session = host_handshake(stream, DEFAULT_HANDSHAKE_TIMEOUT).map_err(|e| format!("{addr}: {e}"))?;
    let mut run = FarmRun { frames: 0, mismatches: 0 };
    if session.descriptor().serial_number != serial || session.descriptor().sensor_type != sensor {
        run.mismatches += 1;
    }
    session.start(FARM_PERIOD_MS).map_err(fail)?;
    let mut first = None;
    loop {
        match session.next_measurement(Duration::from_secs(2)) {
            Ok(m) => {
                if m.sensor_type != sensor {
                    run.mismatches += 1;
                }
                run.frames += 1;
                let start = *first.get_or_insert(m.timestamp_ms);
                if m.timestamp_ms - start >= FARM_SIMULATED_MS {
                    break;
                }
            }
            Err(HostError::SerialMismatch { .. }) => run.mismatches += 1,
            Err(e) => return Err(format!("{addr}: {e}")),
        }
    }
    Ok(run)
}

// ---------------------------------------------------------------- workflow

fn t0() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 6, 1, 9, 0, 0).unwrap()
}

fn text(title: &str, description: &str) -> InquiryText {
    InquiryText { title: title.into(), description: description.into(), notes: String::new() }
}

fn heart_rate_capture(label: &str) -> Capture {
    Capture {
        measurement: Measurement { sensor_type: SensorType::HeartRate, timestamp_ms: 0, values: vec![Centi(7200)] },
        label: label.into(),
        photo_ref: None,
    }
}

struct World {
    wf: Workflow,
    repo: MemoryRepository,
    teacher: UserId,
    students: Vec<UserId>,
}

fn world(students: usize) -> World {
    let wf = Workflow::default();
    let mut repo = MemoryRepository::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let teacher = wf.register(&mut repo, "teacher", Role::Teacher, t0()).unwrap();
    let class = wf.create_class(&mut repo, teacher.id, "Year 8", &mut rng, t0()).unwrap();
    let students = (0..students)
        .map(|n| {
            let s = wf.register(&mut repo, &format!("student{n}"), Role::Student, t0()).unwrap();
            wf.join_class(&mut repo, s.id, class.join_code.as_str(), t0()).unwrap();
            s.id
        })
        .collect();
    World { wf, repo, teacher: teacher.id, students }
}

/// Violations of the workflow rules visible in the current state.
fn violations(w: &World) -> Vec<String> {
    let all = w.repo.inquiries().unwrap();
    let by_id: HashMap<InquiryId, &Inquiry> = all.iter().map(|i| (i.id, i)).collect();
    let mut found = Vec::new();
    for i in &all {
        if i.slots.len() > 3 {
            found.push(format!("inquiry {} has {} slots", i.id, i.slots.len()));
        }
        if i.status == InquiryStatus::Published && (i.title.trim().is_empty() || i.slots.is_empty()) {
            found.push(format!("inquiry {} published untitled or empty", i.id));
        }
        // Walk the lineage by hand; revisiting an id is a cycle.
        let mut seen = HashSet::from([i.id]);
        let mut at = i;
        while let Some(link) = at.lineage {
            if !seen.insert(link.source_inquiry_id) {
                found.push(format!("lineage cycle through {}", i.id));
                break;
            }
            match by_id.get(&link.source_inquiry_id) {
                Some(next) => at = next,
                None => break,
            }
        }
        if i.status == InquiryStatus::Draft {
            for &viewer in w.students.iter().filter(|&&s| s != i.author_id) {
                if w.wf.view_inquiry(&w.repo, viewer, i.id).is_ok() {
                    found.push(format!("draft {} visible to {viewer}", i.id));
                }
            }
        }
    }
    let feed = w.wf.discover(&w.repo, &DiscoverQuery::default()).unwrap();
    if let Some(draft) = feed.iter().find(|i| i.status != InquiryStatus::Published) {
        found.push(format!("draft {} in the discover feed", draft.id));
    }
    found
}

fn random_sequence(seed: u64) -> Result<(usize, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = world(3);
    let mut clock = t0();
    let mut rejected = 0;
    for step in 0..WORKFLOW_OPS {
        clock += chrono::Duration::seconds(30);
        let ids: Vec<InquiryId> = w.repo.inquiries().unwrap().iter().map(|i| i.id).collect();
        let target = if ids.is_empty() || rng.random_bool(0.05) {
            InquiryId(999)
        } else {
            ids[rng.random_range(0..ids.len())]
        };
        let op = rng.random_range(0..7);
        // Edits, captures and publishes mostly come from the author, so that
        // accepted paths get exercised as often as refusals.
        let author = w.repo.inquiry(target).unwrap().map(|i| i.author_id);
        let user = match author {
            Some(a) if (1..=4).contains(&op) && rng.random_bool(0.7) => a,
            _ => w.students[rng.random_range(0..w.students.len())],
        };
        let title = if rng.random_bool(0.7) { "Pulse" } else { "" };
        let result = match op {
            0 => w.wf.create_inquiry(&mut w.repo, user, None, SensorType::HeartRate, text(title, ""), clock).map(drop),
            1 => w.wf.edit_inquiry(&mut w.repo, user, target, text(title, ""), clock).map(drop),
            2 | 3 => w.wf.capture(&mut w.repo, user, target, heart_rate_capture("rest"), clock).map(drop),
            4 => w.wf.publish(&mut w.repo, user, target, clock).map(drop),
            5 => {
                let kind = if rng.random_bool(0.5) { LineageKind::Remix } else { LineageKind::Replication };
                w.wf.derive(&mut w.repo, user, target, kind, None, clock).map(drop)
            }
            _ => w.wf.comment(&mut w.repo, user, target, "nice", clock).map(drop),
        };
        if result.is_err() {
            rejected += 1;
        }
        if let Some(v) = violations(&w).first() {
            return Err(format!("seed {seed} step {step}: {v}"));
        }
    }
    Ok((WORKFLOW_OPS, rejected))
}

/// Minimal HTTP/1.1 JSON exchange against the running service.
fn http(addr: SocketAddr, method: &str, path: &str, token: Option<&str>, body: Value) -> Result<(u16, Value), String> {
    let mut stream = TcpStream::connect(addr).map_err(fail)?;
    stream.set_read_timeout(Some(Duration::from_secs(30))).map_err(fail)?;
    let body = body.to_string();
    let auth = token.map(|t| format!("Authorization: Bearer {t}\r\n")).unwrap_or_default();
    let req = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n{auth}Content-Type: application/json\r\n\
         Content-Length: {}\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(req.as_bytes()).map_err(fail)?;
    let mut raw = String::new();
    stream.read_to_string(&mut raw).map_err(fail)?;
    let (head, rest) = raw.split_once("\r\n\r\n").ok_or("no response head")?;
    let status = head.split_whitespace().nth(1).and_then(|s| s.parse().ok()).ok_or("no status")?;
    Ok((status, serde_json::from_str(rest).unwrap_or(Value::Null)))
}

fn fourth_capture_over_http() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(fail)?;
    let state = AppState::open(ServiceConfig::new(None, dir.path().join("photos")), Gateway::default()).map_err(fail)?;
    let runtime = tokio::runtime::Runtime::new().map_err(fail)?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).map_err(fail)?;
    let addr = listener.local_addr().map_err(fail)?;
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    runtime.spawn(sensorlab_service::serve(listener, state, async {
        let _ = stopped.await;
    }));

    let result = (|| {
        let register = |name: &str, role: &str, code: Option<&str>| -> Result<String, String> {
            let body = json!({"username": name, "password": "hunter22", "role": role, "class_code": code});
            let (status, body) = http(addr, "POST", "/auth/register", None, body)?;
            ensure!(status == 201, "register {name}: {status} {body}");
            Ok(body["token"].as_str().unwrap_or_default().to_string())
        };
        let teacher = register("teacher", "teacher", None)?;
        let (_, class) = http(addr, "POST", "/classes", Some(&teacher), json!({"name": "Year 8"}))?;
        let student = register("student", "student", class["join_code"].as_str())?;
        let (status, inquiry) =
            http(addr, "POST", "/inquiries", Some(&student), json!({"sensor_type": "heart_rate", "title": "Pulse"}))?;
        ensure!(status == 201, "create: {status} {inquiry}");
        let path = format!("/inquiries/{}/datapoints", inquiry["id"]);
        let point = |label: &str| {
            json!({"measurement": {"sensor_type": "heart_rate", "timestamp_ms": 0, "values": [7200]}, "label": label})
        };
        for label in ["rest", "walk", "run"] {
            let (status, body) = http(addr, "POST", &path, Some(&student), point(label))?;
            ensure!(status == 201, "capture {label}: {status} {body}");
        }
        let (status, body) = http(addr, "POST", &path, Some(&student), point("sprint"))?;
        ensure!(status == 409, "fourth capture returned {status} {body}");
        ensure!(body["error"] == "slot_limit", "fourth capture error {body}");
        Ok(())
    })();
    let _ = stop.send(());
    result
}

fn workflow_rules() -> Check {
    let mut ops = 0;
    let mut rejected = 0;
    for seed in 0..WORKFLOW_SEQUENCES as u64 {
        let (n, r) = random_sequence(seed)?;
        ops += n;
        rejected += r;
    }
    // Direct probe of the slot limit in the core, then over HTTP.
    let mut w = world(1);
    let s = w.students[0];
    let inquiry = w.wf.create_inquiry(&mut w.repo, s, None, SensorType::HeartRate, text("Pulse", ""), t0()).unwrap();
    for label in ["a", "b", "c"] {
        w.wf.capture(&mut w.repo, s, inquiry.id, heart_rate_capture(label), t0()).map_err(fail)?;
    }
    let fourth = w.wf.capture(&mut w.repo, s, inquiry.id, heart_rate_capture("d"), t0());
    ensure!(fourth == Err(DomainError::SlotLimit), "fourth capture in core: {fourth:?}");
    ensure!(MAX_SLOTS == 3, "slot limit constant is {MAX_SLOTS}");
    fourth_capture_over_http()?;
    Ok(format!(
        "{WORKFLOW_SEQUENCES} random sequences, {ops} operations ({rejected} rejected): no >3 slots, no untitled or \
         empty publish, no foreign draft visible, no lineage cycle; 4th capture -> HTTP 409 slot_limit"
    ))
}

// ---------------------------------------------------------------- scoring

const WORDS: &[&str] = &[
    "we", "measured", "the", "water", "because", "glass", "breath", "outside", "hot", "cold", "then", "my", "hand",
    "sun", "record", "it", "was", "humid", "air", "window",
];
const LINES: &[&str] = &["1. Pour the water", "- hold the sensor", "Measure again", "Step 3 wait", "nothing here", ""];
const LABELS: &[&str] = &["", "glass water", "outside", "breath", "in the sun"];
const HYPOTHESIS: &[&str] = &["I think it will be warmer.", "I predict the humidity rises.", "My hypothesis is breath is wet."];

fn sample_inquiry(rng: &mut ChaCha8Rng) -> Inquiry {
    let mut phrase = |n: usize| -> String {
        (0..rng.random_range(0..=n)).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
    };
    let title = phrase(4);
    let description = phrase(12);
    let mut notes = String::new();
    for _ in 0..rng.random_range(0..4) {
        notes += LINES[rng.random_range(0..LINES.len())];
        notes.push('\n');
    }
    let slots = (0..rng.random_range(0..=3))
        .map(|i| CaptureSlot {
            index: i as u8,
            measurement: Measurement {
                sensor_type: SensorType::TempHumidity,
                timestamp_ms: 0,
                values: vec![Centi(2000), Centi(5000)],
            },
            label: LABELS[rng.random_range(0..LABELS.len())].to_string(),
            photo_ref: None,
        })
        .collect();
    Inquiry {
        id: InquiryId(1),
        author_id: UserId(1),
        class_id: ClassId(1),
        sensor_type: SensorType::TempHumidity,
        title,
        description,
        notes,
        slots,
        status: InquiryStatus::Published,
        lineage: None,
        created_at: t0(),
        published_at: Some(t0()),
        manual_score_override: None,
        exemplar: false,
    }
}

fn scoring() -> Check {
    let engine = ScoringEngine::default();

    // The "Water molecules" inquiry: a title and three labelled readings, no text.
    let mut w = world(1);
    let s = w.students[0];
    let id = w
        .wf
        .create_inquiry(&mut w.repo, s, None, SensorType::TempHumidity, text("Water molecules", ""), t0())
        .map_err(fail)?
        .id;
    for (label, t, h) in [("glass water", 2150, 5500), ("outside", 1800, 7000), ("breath", 3100, 8900)] {
        let measurement =
            Measurement { sensor_type: SensorType::TempHumidity, timestamp_ms: 0, values: vec![Centi(t), Centi(h)] };
        let capture = Capture { measurement, label: label.into(), photo_ref: None };
        w.wf.capture(&mut w.repo, s, id, capture, t0()).map_err(fail)?;
    }
    w.wf.publish(&mut w.repo, s, id, t0()).map_err(fail)?;
    let original = w.repo.inquiry(id).map_err(fail)?.ok_or("inquiry vanished")?;
    let verdict = engine.score(&original).category;
    ensure!(verdict == ScoreCategory::Naive, "Water molecules scored {verdict}");

    let reason = "Interview: the student expected breath to be wetter than outside air";
    let when = Utc.with_ymd_and_hms(2021, 12, 1, 10, 0, 0).unwrap();
    let recoded = w.wf.override_score(&mut w.repo, w.teacher, id, ScoreCategory::Emerging, reason, when).map_err(fail)?;
    let score = engine.score(&recoded);
    ensure!(score.category == ScoreCategory::Emerging && score.overridden, "after override: {score:?}");
    let audit = recoded.manual_score_override.as_ref().ok_or("no audit record")?;
    ensure!(audit.by == w.teacher && audit.at == when && audit.reason == reason, "audit record {audit:?}");
    let logged = w.repo.event_log().last().ok_or("empty log")?;
    ensure!(logged.kind == EventKind::ScoreOverridden && logged.actor_id == w.teacher, "override not logged: {logged:?}");
    ensure!(engine.engine_score(&recoded).category == ScoreCategory::Naive, "engine verdict changed by override");

    // Adding a hypothesis never lowers the category.
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut raised = 0;
    for n in 0..MONOTONICITY_CASES {
        let base = sample_inquiry(&mut rng);
        let mut with_cue = base.clone();
        let cue = HYPOTHESIS[rng.random_range(0..HYPOTHESIS.len())];
        with_cue.description = if rng.random_bool(0.5) {
            format!("{cue} {}", base.description)
        } else {
            format!("{} {cue}", base.description)
        };
        let (before, after) = (engine.score(&base).category, engine.score(&with_cue).category);
        ensure!(after >= before, "case {n}: {before} -> {after} after adding `{cue}`");
        if after > before {
            raised += 1;
        }
    }

    // Every authored label in the corpus.
    let events = read_log(corpus_text().as_bytes()).map_err(fail)?;
    let labels = parse_labels(&fs::read_to_string(source_tree_dir().join(LABELS_FILE)).map_err(fail)?)?;
    let mut repo = MemoryRepository::new();
    Workflow::default().replay(&mut repo, &events).map_err(fail)?;
    let mut agree = 0;
    for (id, label) in &labels {
        let inquiry = repo.inquiry(*id).map_err(fail)?.ok_or_else(|| format!("label for unknown inquiry {id}"))?;
        if engine.score(&inquiry).category == *label {
            agree += 1;
        }
    }
    ensure!(!labels.is_empty() && agree == labels.len(), "{agree}/{} labels agree", labels.len());
    Ok(format!(
        "Water molecules -> Naive, override -> Emerging with audit (by, at, reason, logged); monotone over \
         {MONOTONICITY_CASES} cases ({raised} raised); labels {agree}/{} (100%)",
        labels.len()
    ))
}

// ---------------------------------------------------------------- replay

fn replay() -> Check {
    let dir = tempfile::tempdir().map_err(fail)?;
    let open = |name: &str| {
        let config = ServiceConfig::new(Some(dir.path().join(name)), dir.path().join("photos"));
        AppState::open(config, Gateway::default()).map_err(fail)
    };
    let events = read_log(corpus_text().as_bytes()).map_err(fail)?;
    let first = open("first.db")?;
    first.load_log(&events).map_err(fail)?;
    let exported = first.export_log().map_err(fail)?;
    ensure!(exported == events, "export differs from the loaded log");

    let fresh = open("fresh.db")?;
    ensure!(fresh.is_empty().map_err(fail)?, "fresh database is not empty");
    fresh.load_log(&exported).map_err(fail)?;
    let (a, b) = (first.report().map_err(fail)?, fresh.report().map_err(fail)?);
    ensure!(a == b, "replayed report differs");
    let offline = report_from_log(&exported, &ScoringEngine::default()).map_err(fail)?;
    ensure!(a == offline, "stored report differs from the offline fold");
    ensure!(fresh.export_log().map_err(fail)? == exported, "second export differs");
    Ok(format!(
        "{} events exported and replayed into a fresh SQLite database; EngagementReport identical ({} inquiries)",
        exported.len(),
        b.total_inquiries
    ))
}

// ---------------------------------------------------------------- runner

fn main() -> ExitCode {
    let criteria: [Criterion; 6] = [
        ("fixture-report", fixture_report),
        ("protocol", protocol_suite),
        ("plug-and-play", plug_and_play),
        ("workflow", workflow_rules),
        ("scoring", scoring),
        ("log-replay", replay),
    ];
    // Keep panic messages out of the report lines; they become FAIL details.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    let _ = std::io::stdout().flush();
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
