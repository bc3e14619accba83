#![no_main]

use libfuzzer_sys::fuzz_target;
use odcs_core::data::netpbm::{decode, Raster};
use odcs_core::data::{decode_mask, encode_mask};

fuzz_target!(|data: &[u8]| {
    if let Ok(Raster::Gray(gray)) = decode(data) {
        let (mask, _) = decode_mask(&gray);
        let codes = encode_mask(&mask);
        assert_eq!(decode_mask(&codes), (mask, 0));
    }
});
