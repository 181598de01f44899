#![no_main]

use delibench::corpus::CorpusManifest;
use delibench_cli::manifest::StageManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = serde_json::from_slice::<CorpusManifest>(data) {
        let again = serde_json::to_vec(&m).unwrap();
        assert_eq!(serde_json::from_slice::<CorpusManifest>(&again).unwrap(), m);
    }
    let _ = serde_json::from_slice::<StageManifest>(data);
});
