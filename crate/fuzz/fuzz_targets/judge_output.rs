#![no_main]

use delibench::scores::parse_judge_output;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(raw) = std::str::from_utf8(data) else { return };
    if let Ok(score) = parse_judge_output(raw) {
        assert!(score.to_array().iter().all(|v| (0.25..=0.75).contains(v)));
    }
});
