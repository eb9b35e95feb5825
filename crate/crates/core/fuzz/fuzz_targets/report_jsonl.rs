#![no_main]

use libfuzzer_sys::fuzz_target;
use whisker_core::experiments::report::read_jsonl_report;

fuzz_target!(|data: &[u8]| {
    let _ = read_jsonl_report(data);
});
