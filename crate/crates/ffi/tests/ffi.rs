use std::ffi::CStr;
use std::ptr;

use exwalk::exceptional::{run_exceptional, StopRule};
use exwalk::stream::{LetterStream, StreamSeed};
use exwalk_ffi::*;

fn last_error() -> String {
    let p = exwalk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn letter_stream_matches_core() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { exwalk_letter_stream_new(9, 4, 2, &mut h) }, ExwalkStatus::Ok);
    let mut buf = [0u8; 100];
    assert_eq!(unsafe { exwalk_letter_stream_fill(h, buf.as_mut_ptr(), buf.len()) }, ExwalkStatus::Ok);
    assert_eq!(unsafe { exwalk_letter_stream_position(h) }, 100);
    let mut core = LetterStream::new(StreamSeed::new(9, 4), 2);
    let expect: Vec<u8> = (0..100).map(|_| core.next_code()).collect();
    assert_eq!(buf.to_vec(), expect);
    unsafe { exwalk_letter_stream_free(h) };
}

#[test]
fn bad_dimension_sets_message() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { exwalk_letter_stream_new(0, 0, 7, &mut h) }, ExwalkStatus::InvalidArgument);
    assert!(h.is_null());
    assert!(last_error().contains("dimension"));
}

#[test]
fn null_pointers_are_rejected() {
    assert_eq!(unsafe { exwalk_letter_stream_new(0, 0, 2, ptr::null_mut()) }, ExwalkStatus::NullPointer);
    assert_eq!(unsafe { exwalk_letter_stream_fill(ptr::null_mut(), ptr::null_mut(), 1) }, ExwalkStatus::NullPointer);
    assert_eq!(unsafe { exwalk_gambler_exact(3, ptr::null_mut()) }, ExwalkStatus::NullPointer);
    unsafe {
        exwalk_letter_stream_free(ptr::null_mut());
        exwalk_exceptional_free(ptr::null_mut());
        exwalk_string_free(ptr::null_mut());
    }
}

#[test]
fn exceptional_run_matches_core() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { exwalk_exceptional_new(3, 0, &mut h) }, ExwalkStatus::Ok);
    let mut st = ExwalkWalkState::default();
    assert_eq!(unsafe { exwalk_exceptional_run(h, 1_000_000, 3, &mut st) }, ExwalkStatus::Ok);
    let (tr, env) = run_exceptional(StreamSeed::new(3, 0), StopRule::stage_capped(3, 1_000_000)).unwrap();
    let end = tr.final_state();
    assert_eq!((st.x, st.y, st.letters, st.stage), (end.pos.x(), end.pos.y(), end.letters_consumed, env.stage()));

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { exwalk_exceptional_snapshot(h, &mut s) }, ExwalkStatus::Ok);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    assert_eq!(text, env.snapshot().unwrap());
    unsafe {
        exwalk_string_free(s);
        exwalk_exceptional_free(h);
    }
}

#[test]
fn estimate_en_round_trip_and_guard() {
    let mut e = ExwalkEnEstimate::default();
    assert_eq!(unsafe { exwalk_estimate_en(1, 200, 5, 0, 1_000_000, &mut e) }, ExwalkStatus::Ok);
    assert_eq!(e.trials, 200);
    assert_eq!(e.hits + e.completions + e.censored, 200);
    assert!(e.ci_lo <= e.p_hat && e.p_hat <= e.ci_hi);
    assert_eq!(unsafe { exwalk_estimate_en(50, 1, 5, 0, 10, &mut e) }, ExwalkStatus::LineOutOfRange);
    assert!(last_error().contains("out of range"));
}

#[test]
fn exact_values() {
    let mut v = 0.0;
    assert_eq!(unsafe { exwalk_gambler_exact(4, &mut v) }, ExwalkStatus::Ok);
    assert_eq!(v, 0.25);
    assert_eq!(unsafe { exwalk_gambler_exact(0, &mut v) }, ExwalkStatus::InvalidArgument);
    assert_eq!(exwalk_local_time_exact(2), 0.5);
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/exwalk.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in ["exwalk_estimate_en", "exwalk_letter_stream_new", "exwalk_exceptional_snapshot", "EXWALK_STATUS_OK"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let out = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c", header]).output();
    match out {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(_) => eprintln!("no C compiler; skipped syntax check"),
    }
}
