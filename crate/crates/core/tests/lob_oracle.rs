//! The book against a brute-force matcher on long random order streams.

mod support;

use std::time::Instant;

use support::naive_book::{book_levels, random_stream};

#[test]
fn ten_thousand_events_match_reference() {
    let started = Instant::now();
    let (tape, naive_tape, book, naive) = random_stream(42, 10_000);
    assert!(!tape.is_empty());
    assert_eq!(tape, naive_tape);
    assert_eq!(book_levels(&book), naive.levels());
    assert!(started.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn several_seeds_match_reference() {
    for seed in 0..5 {
        let (tape, naive_tape, book, naive) = random_stream(seed, 3_000);
        assert_eq!(tape, naive_tape);
        assert_eq!(book_levels(&book), naive.levels());
    }
}

#[test]
fn trade_tape_csv_is_byte_stable() {
    let (tape, _, _, _) = random_stream(3, 2_000);
    let mut a = Vec::new();
    let mut b = Vec::new();
    cdasim::lob::write_trade_tape(&tape, &mut a).unwrap();
    cdasim::lob::write_trade_tape(&tape, &mut b).unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with(b"step,"));
}
