#![no_main]

use delibench_cli::config::{interpolate, parse_config};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let lookup = |name: &str| name.len().is_multiple_of(2).then(|| format!("<{name}>"));
    if let Ok(expanded) = interpolate(text, lookup) {
        if let Ok(config) = parse_config(&expanded) {
            let _ = config.judge.parse_kind();
            let _ = config.pairing.spec(config.seed).rounds(10);
        }
    }
});
