#![no_main]

use libfuzzer_sys::fuzz_target;
use whisker_core::sensor_model::read_calibration_csv;

fuzz_target!(|data: &[u8]| {
    let _ = read_calibration_csv(data);
});
