//! Acceptance suite. Runs with its own harness and prints one PASS/FAIL line
//! per criterion; exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};

use chrono::TimeZone;
use common::*;
use pitchcoach::dsp::{estimate_f0, frame_stream, smooth_pitch, track_pitch, DspConfig, PitchFrame};
use pitchcoach::feedback::{
    Channel, FeedbackEvent, FeedbackMode, Trial, TRIGGER_SEGMENT_END, TRIGGER_TRIAL_START,
};
use pitchcoach::haptics::{
    decode_haptic_frame, encode_haptic_frame, run_simulator, ActuatorLayout, DeviceSimulator, HapticFrame,
    FRAME_LEN,
};
use pitchcoach::melody::MelodyTrack;
use pitchcoach::scoring::{score_trial, ScoreReport};
use pitchcoach::service::cli::{run_samples, run_trial, score_log, RunArgs};
use pitchcoach::service::config::EngineConfig;
use pitchcoach::session::replay;
use pitchcoach::stats::{f_survival, one_way_anova, GroupedData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------- F0

fn f0_accuracy() -> Outcome {
    let cfg = DspConfig::default();
    let sr = cfg.sample_rate_hz as f64;
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0xF0);
    let mut all_errors = Vec::new();
    let mut worst_tone_median: f64 = 0.0;
    let mut worst_smoothed: f64 = 0.0;
    let mut min_voiced: f64 = 1.0;
    let mut worst_oracle: f64 = 0.0;
    let mut tones = 0;
    for k in 0..9 {
        let f = 100.0 + 50.0 * k as f64;
        // clean, two noise seeds at 20 dB, amplitude 0.1, amplitude 0.1 at 20 dB
        for variant in 0..5 {
            let amp = if variant >= 3 { 0.1 } else { 0.5 };
            let mut x = sawtooth(f, amp, n, sr);
            if matches!(variant, 1 | 2 | 4) {
                add_noise(&mut x, 20.0, &mut rng);
            }
            let frames = track_pitch(&x, &cfg).map_err(|e| e.to_string())?;
            let voiced: Vec<f64> = frames.iter().filter_map(|p| p.f0_hz).collect();
            let vf = voiced.len() as f64 / frames.len() as f64;
            min_voiced = min_voiced.min(vf);
            check(vf >= 0.9, || format!("{f} Hz variant {variant}: voiced fraction {vf:.3}"))?;
            let errs: Vec<f64> = voiced.iter().map(|v| (v - f).abs() / f).collect();
            worst_tone_median = worst_tone_median.max(median(errs.clone()));
            all_errors.extend(errs);
            for p in smooth_pitch(&frames) {
                if let Some(v) = p.f0_hz {
                    worst_smoothed = worst_smoothed.max((v - f).abs() / f);
                }
            }
            if variant == 0 {
                let min_lag = (sr / cfg.f0_max_hz).ceil() as usize;
                let max_lag = (sr / cfg.f0_min_hz).floor() as usize;
                for frame in frame_stream(&x, &cfg).iter().skip(2).take(60) {
                    let Some((cep, _)) = estimate_f0(frame, &cfg).map_err(|e| e.to_string())? else {
                        return Err(format!("{f} Hz clean frame unvoiced"));
                    };
                    let acf = acf_f0(frame, sr, min_lag, max_lag).ok_or("acf found no peak")?;
                    worst_oracle = worst_oracle.max((cep - acf).abs() / acf);
                }
            }
            tones += 1;
        }
    }
    let overall = median(all_errors);
    check(overall < 0.01, || format!("median relative error {:.4}%", overall * 100.0))?;
    check(worst_smoothed <= 0.30, || format!("octave error after smoothing: {:.1}%", worst_smoothed * 100.0))?;
    check(worst_oracle <= 0.02, || format!("ACF oracle disagreement {:.2}%", worst_oracle * 100.0))?;
    Ok(format!(
        "{tones} tones; median rel err {:.3}% (worst tone {:.3}%); max post-smoothing err {:.2}%; \
         min voiced fraction {:.3}; max ACF disagreement {:.3}%",
        overall * 100.0,
        worst_tone_median * 100.0,
        worst_smoothed * 100.0,
        min_voiced,
        worst_oracle * 100.0
    ))
}

// ---------------------------------------------------------------- end to end

fn run_args(input: &std::path::Path, out: &std::path::Path, melody: &std::path::Path) -> RunArgs {
    RunArgs {
        melody: melody.to_path_buf(),
        mode: FeedbackMode::Synchronous,
        input: input.to_path_buf(),
        haptic_addr: None,
        trigger_addr: None,
        out: out.to_path_buf(),
        session_id: Some("fixture".into()),
        created_utc: Some(chrono::Utc.with_ymd_and_hms(2024, 3, 1, 9, 30, 0).unwrap()),
    }
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let melody_path = dir.path().join("twelve.json");
    std::fs::write(&melody_path, FIXTURE_MELODY).map_err(|e| e.to_string())?;
    let wav = dir.path().join("take.wav");
    let mut audio = render_melody(&fixture_melody(), 20_000.0, 0.4);
    add_noise(&mut audio, 30.0, &mut ChaCha8Rng::seed_from_u64(7));
    write_wav(&wav, &audio, 20_000);

    let cfg = EngineConfig::default();
    let mut logs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("lib{i}"));
        let summary = run_trial(&run_args(&wav, &out, &melody_path), &cfg).map_err(|e| e.to_string())?;
        logs.push(std::fs::read(&summary.log_path).map_err(|e| e.to_string())?);
    }
    let exe = env!("CARGO_BIN_EXE_pitchcoach");
    for i in 0..2 {
        let out = dir.path().join(format!("bin{i}"));
        let status = std::process::Command::new(exe)
            .args(["run", "--mode", "sync", "--session-id", "fixture", "--created-utc", "2024-03-01T09:30:00Z"])
            .arg("--melody")
            .arg(&melody_path)
            .arg("--input")
            .arg(&wav)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        check(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
        logs.push(std::fs::read(out.join("fixture.jsonl")).map_err(|e| e.to_string())?);
    }
    check(logs.iter().all(|l| *l == logs[0]), || "session logs differ between runs".into())?;

    let log = replay(std::str::from_utf8(&logs[0]).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let stored = log.stored_score().ok_or("no stored score")?.clone();
    check(log.rescore() == stored, || format!("rescore {:?} != stored {:?}", log.rescore(), stored))?;
    let via_cmd = score_log(&dir.path().join("lib0/fixture.jsonl")).map_err(|e| e.to_string())?;
    check(via_cmd == stored, || "score command disagrees".into())?;
    check(stored.scored_note_count == 12, || format!("{stored:?}"))?;
    Ok(format!(
        "4 runs (2 library, 2 binary) byte-identical, {} bytes, {} records; rescore == stored \
         (dev {:.2} c, contour {:.2}, rhythm {:.1} ms)",
        logs[0].len(),
        log.records.len(),
        stored.pitch_deviation_cents,
        stored.contour_accuracy,
        stored.rhythm_error_ms
    ))
}

// ---------------------------------------------------------------- feedback

fn scripted_frames(melody: &MelodyTrack) -> Vec<PitchFrame> {
    let cfg = DspConfig::default();
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let t = cfg.frame_time_ms(k);
        if t > melody.last_offset_ms() + 100.0 {
            break;
        }
        // a voice break every 17th frame
        out.push(match melody.pitch_at(t) {
            Some(m) if k % 17 != 5 => PitchFrame::voiced(t, pitchcoach::melody::midi_to_hz(m)),
            _ => PitchFrame::unvoiced(t),
        });
        k += 1;
    }
    out
}

fn scripted_trial(mode: FeedbackMode, frames: &[PitchFrame]) -> Result<(Vec<(PitchFrame, Vec<FeedbackEvent>)>, Vec<FeedbackEvent>, f64), String> {
    let melody = fixture_melody();
    let mut trial = Trial::new(melody.clone(), mode, ActuatorLayout::default());
    let mut all = trial.start().map_err(|e| e.to_string())?;
    let mut per_frame = Vec::new();
    for f in frames {
        let ev = trial.on_pitch_frame(f).map_err(|e| e.to_string())?;
        all.extend(ev.clone());
        per_frame.push((*f, ev));
    }
    let end = frames.last().map_or(0.0, |f| f.t_ms);
    let score = score_trial(frames, &melody);
    all.extend(trial.end_segment(end, &score).map_err(|e| e.to_string())?);
    Ok((per_frame, all, end))
}

fn trigger_sequence(events: &[FeedbackEvent]) -> Vec<u8> {
    events.iter().filter_map(FeedbackEvent::trigger_code).collect()
}

fn feedback_contract() -> Outcome {
    let melody = fixture_melody();
    let frames = scripted_frames(&melody);
    let voiced = frames.iter().filter(|f| f.is_voiced()).count();

    let (_, terminal, end) = scripted_trial(FeedbackMode::Terminal, &frames)?;
    let inside = terminal.iter().filter(|e| e.is_feedback() && e.t_ms >= 0.0 && e.t_ms < end).count();
    check(inside == 0, || format!("terminal: {inside} feedback events during phonation"))?;
    check(terminal.iter().any(|e| e.is_feedback() && e.t_ms >= end), || "terminal: no end-of-trial feedback".into())?;
    check(trigger_sequence(&terminal) == [TRIGGER_TRIAL_START, TRIGGER_SEGMENT_END], || {
        format!("terminal triggers {:?}", trigger_sequence(&terminal))
    })?;

    let (per_frame, sync, _) = scripted_trial(FeedbackMode::Synchronous, &frames)?;
    let mut max_skew: f64 = 0.0;
    for (frame, events) in per_frame.iter().filter(|(f, _)| f.is_voiced()) {
        let visual: Vec<&FeedbackEvent> = events.iter().filter(|e| e.channel() == Channel::Visual).collect();
        check(!visual.is_empty(), || format!("sync: no visual event for frame at {} ms", frame.t_ms))?;
        for e in events {
            max_skew = max_skew.max((e.t_ms - frame.t_ms).abs());
        }
    }
    check(max_skew <= 10.0, || format!("sync: skew {max_skew} ms"))?;
    check(trigger_sequence(&sync) == [TRIGGER_TRIAL_START, TRIGGER_SEGMENT_END], || {
        format!("sync triggers {:?}", trigger_sequence(&sync))
    })?;

    // the same contract through audio, DSP and the session log
    let audio = render_melody(&melody, 10_000.0, 0.4);
    let mut counts = BTreeMap::new();
    for mode in [FeedbackMode::Synchronous, FeedbackMode::Terminal] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut args = run_args(std::path::Path::new("unused.wav"), dir.path(), std::path::Path::new("unused.json"));
        args.mode = mode;
        let summary = run_samples(&args, &EngineConfig::default(), melody.clone(), &audio).map_err(|e| e.to_string())?;
        let log = replay(&std::fs::read_to_string(&summary.log_path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let events = log.events();
        check(trigger_sequence(&events) == [TRIGGER_TRIAL_START, TRIGGER_SEGMENT_END], || {
            format!("{mode} log triggers {:?}", trigger_sequence(&events))
        })?;
        let end = events
            .iter()
            .find(|e| e.trigger_code() == Some(TRIGGER_SEGMENT_END))
            .map(|e| e.t_ms)
            .ok_or("no end trigger")?;
        let voiced_frames: Vec<f64> = log.pitch_frames().iter().filter(|f| f.is_voiced()).map(|f| f.t_ms).collect();
        let visual: Vec<f64> = events.iter().filter(|e| e.channel() == Channel::Visual).map(|e| e.t_ms).collect();
        match mode {
            FeedbackMode::Terminal => {
                let inside = events.iter().filter(|e| e.is_feedback() && e.t_ms < end).count();
                check(inside == 0, || format!("terminal log: {inside} feedback events during phonation"))?;
            }
            FeedbackMode::Synchronous => {
                for t in &voiced_frames {
                    check(visual.iter().any(|v| (v - t).abs() <= 10.0), || format!("sync log: frame {t} unmatched"))?;
                }
            }
        }
        counts.insert(mode.to_string(), (voiced_frames.len(), visual.len()));
    }
    Ok(format!(
        "scripted: {voiced} voiced frames, terminal 0 in-window events, sync max skew {max_skew} ms, triggers [01, 02]; \
         pipeline (voiced, visual): {counts:?}"
    ))
}

// ---------------------------------------------------------------- haptics

fn haptic_protocol() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA7);
    for i in 0..10_000 {
        let frame = HapticFrame {
            t_ms: 0.0,
            actuator: rng.gen_range(0..=255),
            intensity: rng.gen_range(0..=255u32) as f64 / 255.0,
            duration_ms: rng.gen_range(0..=u16::MAX as u32),
        };
        let bytes = encode_haptic_frame(&frame).map_err(|e| e.to_string())?;
        let back = decode_haptic_frame(&bytes).map_err(|e| format!("frame {i}: {e}"))?;
        check(back == frame, || format!("frame {i}: {frame:?} -> {back:?}"))?;
    }

    let fixed = encode_haptic_frame(&HapticFrame {
        t_ms: 0.0,
        actuator: 7,
        intensity: 0.8,
        duration_ms: 250,
    })
    .map_err(|e| e.to_string())?;
    let mut rejected = 0;
    for pos in 1..FRAME_LEN {
        for flip in 1..=255u8 {
            let mut b = fixed;
            b[pos] ^= flip;
            if decode_haptic_frame(&b).is_err() {
                rejected += 1;
            }
        }
    }
    check(rejected == 5 * 255, || format!("{rejected}/1275 corruptions rejected"))?;
    let magic_rejected = (1..=255u8).filter(|&f| decode_haptic_frame(&[fixed[0] ^ f, fixed[1], fixed[2], fixed[3], fixed[4], fixed[5]]).is_err()).count();
    check(magic_rejected == 255, || "bad start byte accepted".into())?;

    // in-process: dump after every command against a plain model
    let layout = ActuatorLayout::default();
    let mut sim = DeviceSimulator::new(&layout);
    let mut model: BTreeMap<usize, (u8, u64)> = BTreeMap::new();
    let mut now = 0u64;
    for _ in 0..2000 {
        now += rng.gen_range(0..80);
        let frame = HapticFrame {
            t_ms: now as f64,
            actuator: rng.gen_range(0..layout.n_actuators),
            intensity: rng.gen_range(0..=255u32) as f64 / 255.0,
            duration_ms: if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..600) },
        };
        let wire = decode_haptic_frame(&encode_haptic_frame(&frame).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        sim.apply(now, &wire).map_err(|e| e.to_string())?;
        if frame.duration_ms == 0 {
            model.remove(&frame.actuator);
        } else {
            model.insert(frame.actuator, (frame.level(), now + frame.duration_ms as u64));
        }
        let expected: String = model
            .iter()
            .filter(|(_, (_, until))| *until > now)
            .map(|(a, (lvl, until))| format!("{now} {a} {:.3} {}\n", *lvl as f64 / 255.0, until - now))
            .collect();
        let got = sim.dump(now);
        check(got == expected, || format!("dump at {now}:\n{got}\nexpected:\n{expected}"))?;
    }

    // over TCP: long commands, so every dump lists each actuator commanded so far
    let listener = std::net::TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    let server = std::thread::spawn(move || {
        let mut out = Vec::new();
        let mut err = Vec::new();
        run_simulator(listener, &ActuatorLayout::default(), Some(1), &mut out, &mut err).map(|_| (out, err))
    });
    let sent: Vec<HapticFrame> = (0..200)
        .map(|_| HapticFrame {
            t_ms: 0.0,
            actuator: rng.gen_range(0..18),
            intensity: rng.gen_range(1..=255u32) as f64 / 255.0,
            duration_ms: 60_000,
        })
        .collect();
    {
        use std::io::Write;
        let mut s = std::net::TcpStream::connect(addr).map_err(|e| e.to_string())?;
        for f in &sent {
            s.write_all(&encode_haptic_frame(f).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        }
        s.write_all(&[0xA7, 99, 0, 0, 0, 0xA7 ^ 99]).map_err(|e| e.to_string())?;
    }
    let (out, err) = server.join().map_err(|_| "simulator panicked")?.map_err(|e| e.to_string())?;
    let lines: Vec<String> = String::from_utf8_lossy(&out).lines().map(str::to_owned).collect();
    let mut expected_lines = 0;
    let mut seen = std::collections::BTreeSet::new();
    let mut latest: BTreeMap<usize, u8> = BTreeMap::new();
    for f in &sent {
        seen.insert(f.actuator);
        latest.insert(f.actuator, f.level());
        expected_lines += seen.len();
    }
    check(lines.len() == expected_lines, || format!("{} dump lines, expected {expected_lines}", lines.len()))?;
    let tail = &lines[lines.len() - latest.len()..];
    for (line, (a, lvl)) in tail.iter().zip(&latest) {
        let fields: Vec<&str> = line.split(' ').collect();
        check(fields[1] == a.to_string() && fields[2] == format!("{:.3}", *lvl as f64 / 255.0), || {
            format!("final dump line {line:?}, expected actuator {a} level {lvl}")
        })?;
    }
    check(String::from_utf8_lossy(&err).contains("rejected"), || "out-of-layout frame not reported".into())?;
    Ok(format!(
        "10000 roundtrips exact; {rejected}/1275 corruptions rejected (+255/255 start-byte); \
         2000-command dump matches model; TCP dump {} lines match stream",
        lines.len()
    ))
}

// ---------------------------------------------------------------- scoring

fn constructed_stream(melody: &MelodyTrack, cents: f64, shift_ms: f64) -> Vec<PitchFrame> {
    (0..=((melody.last_offset_ms() + 200.0) / 10.0) as usize)
        .map(|k| {
            let t = k as f64 * 10.0;
            match melody.pitch_at(t - shift_ms) {
                Some(m) => PitchFrame::voiced(t, pitchcoach::melody::midi_to_hz(m + cents / 100.0)),
                None => PitchFrame::unvoiced(t),
            }
        })
        .collect()
}

fn scoring() -> Outcome {
    let melody = fixture_melody();
    check(melody.notes.len() == 12, || "fixture is not 12 notes".into())?;
    let perfect = score_trial(&constructed_stream(&melody, 0.0, 0.0), &melody);
    let exact = |r: &ScoreReport| {
        r.pitch_deviation_cents.abs() < 1e-9
            && r.pitch_deviation_transposed_cents.abs() < 1e-9
            && r.contour_accuracy == 1.0
            && r.rhythm_error_ms.abs() < 1e-9
    };
    check(exact(&perfect), || format!("perfect: {perfect:?}"))?;

    let sharp = score_trial(&constructed_stream(&melody, 100.0, 0.0), &melody);
    check((sharp.pitch_deviation_cents - 100.0).abs() <= 0.5, || format!("+100c raw {}", sharp.pitch_deviation_cents))?;
    check(sharp.pitch_deviation_transposed_cents.abs() <= 0.5, || {
        format!("+100c transposed {}", sharp.pitch_deviation_transposed_cents)
    })?;
    check(sharp.contour_accuracy == 1.0, || format!("+100c contour {}", sharp.contour_accuracy))?;

    let late = score_trial(&constructed_stream(&melody, 0.0, 50.0), &melody);
    check((late.rhythm_error_ms - 50.0).abs() <= 1.0, || format!("+50ms rhythm {}", late.rhythm_error_ms))?;
    Ok(format!(
        "perfect ({:.3}, {:.3}, {:.3}, {:.3}); +100c raw {:.3} transposed {:.3} contour {:.3}; +50ms rhythm {:.3}",
        perfect.pitch_deviation_cents,
        perfect.pitch_deviation_transposed_cents,
        perfect.contour_accuracy,
        perfect.rhythm_error_ms,
        sharp.pitch_deviation_cents,
        sharp.pitch_deviation_transposed_cents,
        sharp.contour_accuracy,
        late.rhythm_error_ms
    ))
}

// ---------------------------------------------------------------- statistics

/// Neumaier compensated sum.
fn csum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// (F, ss_between, ss_within) from the definitions.
fn anova_oracle(groups: &[Vec<f64>]) -> (f64, f64, f64) {
    let n: usize = groups.iter().map(Vec::len).sum();
    let k = groups.len();
    let grand = csum(groups.iter().flatten().copied()) / n as f64;
    let means: Vec<f64> = groups.iter().map(|g| csum(g.iter().copied()) / g.len() as f64).collect();
    let ssb = csum(groups.iter().zip(&means).map(|(g, m)| g.len() as f64 * (m - grand).powi(2)));
    let ssw = csum(groups.iter().zip(&means).flat_map(|(g, m)| g.iter().map(move |x| (x - m).powi(2))));
    ((ssb / (k - 1) as f64) / (ssw / (n - k) as f64), ssb, ssw)
}

fn grouped(groups: &[Vec<f64>]) -> GroupedData {
    GroupedData::from_rows(
        groups
            .iter()
            .enumerate()
            .flat_map(|(i, g)| g.iter().map(move |&v| (format!("g{i}"), v))),
    )
    .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn statistics() -> Outcome {
    let fixed = one_way_anova(&grouped(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0]]));
    check((fixed.f_stat - 3.0).abs() <= 1e-9, || format!("F = {}", fixed.f_stat))?;
    check((fixed.p_value - 0.125).abs() <= 1e-9, || format!("p = {}", fixed.p_value))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut worst_f: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    let mut worst_inv: f64 = 0.0;
    for i in 0..1000 {
        let k = rng.gen_range(2..=6);
        let spread = rng.gen_range(0.1..3.0);
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let mu = rng.gen_range(-2.0..2.0);
                let normal = Normal::new(mu, spread).unwrap();
                (0..rng.gen_range(2..=15)).map(|_| normal.sample(&mut rng)).collect()
            })
            .collect();
        let res = one_way_anova(&grouped(&groups));
        let (f, ssb, ssw) = anova_oracle(&groups);
        let ef = rel(res.f_stat, f).max(rel(res.ss_between, ssb)).max(rel(res.ss_within, ssw));
        worst_f = worst_f.max(ef);
        check(ef <= 1e-9, || format!("instance {i}: F {} vs {f}", res.f_stat))?;

        let dist = FisherSnedecor::new(res.df_between as f64, res.df_within as f64).map_err(|e| e.to_string())?;
        let p = dist.sf(f);
        let ep = if p > 1e-300 { rel(res.p_value, p) } else { (res.p_value - p).abs() };
        worst_p = worst_p.max(ep);
        check(ep <= 1e-9, || format!("instance {i}: p {} vs {p}", res.p_value))?;

        let (a, b) = (rng.gen_range(0.1..100.0), rng.gen_range(-1000.0..1000.0));
        let moved: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|x| a * x + b).collect()).collect();
        let ei = rel(one_way_anova(&grouped(&moved)).f_stat, res.f_stat);
        worst_inv = worst_inv.max(ei);
        check(ei <= 1e-9, || format!("instance {i}: shift/scale changed F by {ei:e}"))?;
    }

    let mut grid_points = 0;
    for (d1, d2) in [(1.0, 1.0), (2.0, 6.0), (3.0, 30.0), (10.0, 200.0)] {
        let mut prev = f64::INFINITY;
        for j in 0..1000 {
            let f = j as f64 * 0.02;
            let p = f_survival(f, d1, d2).map_err(|e| e.to_string())?;
            check((0.0..=1.0).contains(&p) && p <= prev, || format!("f_survival({f}, {d1}, {d2}) = {p} after {prev}"))?;
            prev = p;
            grid_points += 1;
        }
    }
    Ok(format!(
        "F = {:.12}, p = {:.12}; 1000 instances max rel err F/SS {worst_f:.2e}, p {worst_p:.2e}; \
         shift/scale max rel change {worst_inv:.2e}; f_survival non-increasing on {grid_points} grid points",
        fixed.f_stat, fixed.p_value
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("f0-accuracy", f0_accuracy),
        ("end-to-end-determinism", end_to_end),
        ("feedback-mode-contract", feedback_contract),
        ("haptic-protocol", haptic_protocol),
        ("scoring", scoring),
        ("statistics", statistics),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = std::time::Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
