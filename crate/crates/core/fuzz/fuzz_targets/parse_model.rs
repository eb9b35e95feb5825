#![no_main]

use libfuzzer_sys::fuzz_target;
use whisker_core::sensor_model::{model_to_string, parse_model};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = parse_model(text) {
        // anything accepted must survive a round trip
        let again = parse_model(&model_to_string(&m)).expect("reparse");
        assert_eq!(model_to_string(&m), model_to_string(&again));
    }
});
