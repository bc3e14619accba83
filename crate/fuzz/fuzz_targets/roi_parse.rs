#![no_main]

use libfuzzer_sys::fuzz_target;
use odcs_core::data::RoiBox;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(roi) = RoiBox::parse(text) {
        assert_eq!(RoiBox::parse(&roi.to_string()).unwrap(), roi);
    }
});
