#![no_main]

use libfuzzer_sys::fuzz_target;
use wannier_core::io::{gauge_table, read_gauge_csv};

fuzz_target!(|data: &[u8]| {
    // Anything the reader accepts must survive a write and re-read unchanged.
    if let Ok(u) = read_gauge_csv(data) {
        let again = read_gauge_csv(gauge_table(&u).to_csv().as_bytes()).expect("own output parses");
        assert_eq!(again, u);
    }
});
