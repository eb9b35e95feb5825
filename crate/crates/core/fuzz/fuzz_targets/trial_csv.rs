#![no_main]

use libfuzzer_sys::fuzz_target;
use whisker_core::experiments::TrialRecord;

fuzz_target!(|data: &[u8]| {
    let _ = TrialRecord::read_csv(data);
});
