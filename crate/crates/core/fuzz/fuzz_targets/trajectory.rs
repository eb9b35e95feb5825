#![no_main]

use libfuzzer_sys::fuzz_target;
use whisker_core::experiments::parse_trajectory;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(wps) = parse_trajectory(text) {
        assert!(!wps.is_empty());
        assert!(wps.windows(2).all(|w| w[1].t > w[0].t));
    }
});
