#![no_main]

use delibench::scores::wire::{parse_batch_response, parse_response};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(body) = std::str::from_utf8(data) else { return };
    if let Ok(resp) = parse_response(body) {
        if let Ok(score) = resp.to_score() {
            assert!(score.to_array().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
    for expected in [0, 1, 3] {
        if let Ok(items) = parse_batch_response(body, expected) {
            assert_eq!(items.len(), expected);
        }
    }
});
