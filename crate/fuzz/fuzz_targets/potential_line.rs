#![no_main]

use libfuzzer_sys::fuzz_target;
use wannier_core::config::parse_potential_line;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_potential_line(text, 1);
    }
});
