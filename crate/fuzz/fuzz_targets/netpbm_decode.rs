#![no_main]

use libfuzzer_sys::fuzz_target;
use odcs_core::data::netpbm::{decode, encode_raster};

fuzz_target!(|data: &[u8]| {
    if let Ok(raster) = decode(data) {
        // Whatever decodes must survive a canonical re-encode.
        let again = decode(&encode_raster(&raster)).expect("canonical bytes decode");
        assert_eq!(again, raster);
    }
});
