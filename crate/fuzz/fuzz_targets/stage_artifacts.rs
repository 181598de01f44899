#![no_main]

use delibench::aggregate::TripleScore;
use delibench::ringmatch::{ComparisonPair, PairingSpec};
use delibench::sampler::OpinionSubset;
use libfuzzer_sys::fuzz_target;

// Line formats read back between pipeline stages.
fuzz_target!(|data: &[u8]| {
    if let Ok(s) = serde_json::from_slice::<OpinionSubset>(data) {
        let _ = s.check();
    }
    if let Ok(t) = serde_json::from_slice::<TripleScore>(data) {
        let _ = t.score.validate();
    }
    let _ = serde_json::from_slice::<ComparisonPair>(data);
    if let Ok(spec) = serde_json::from_slice::<PairingSpec>(data) {
        for n in [0, 1, 2, 5, 50] {
            let _ = spec.rounds(n);
        }
    }
});
