#![no_main]

use delibench::chat::parse_completion;
use delibench::summarizer::prompt_comments;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(body) = std::str::from_utf8(data) else { return };
    if let Ok(text) = parse_completion(body) {
        assert!(!text.trim().is_empty());
    }
    let _ = prompt_comments(body);
});
