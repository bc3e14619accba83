#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use odcs_core::data::DatasetManifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let base = Path::new("base");
    if let Ok(manifest) = DatasetManifest::parse(text, base) {
        let _ = DatasetManifest::parse(&manifest.to_text(base), base);
    }
});
