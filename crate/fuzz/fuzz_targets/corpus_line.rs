#![no_main]

use delibench::corpus::{parse_line, Record, RecordKind};
use libfuzzer_sys::fuzz_target;

// First byte picks the record kind; the rest is the line.
fuzz_target!(|data: &[u8]| {
    let Some((&selector, rest)) = data.split_first() else { return };
    let Ok(line) = std::str::from_utf8(rest) else { return };
    let kind = RecordKind::ALL[usize::from(selector) % RecordKind::ALL.len()];
    if let Ok(record) = parse_line(kind, line) {
        // Accepted records must survive a serialize/parse round trip.
        let again = match &record {
            Record::Question(r) => serde_json::to_string(r),
            Record::Opinion(r) => serde_json::to_string(r),
            Record::Summary(r) => serde_json::to_string(r),
            Record::Annotation(r) => serde_json::to_string(r),
        }
        .expect("accepted record serializes");
        assert!(parse_line(kind, &again).is_ok());
    }
});
