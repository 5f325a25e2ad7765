#![no_main]

use libfuzzer_sys::fuzz_target;
use waveguide::forward::ScatterRecord;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(rec) = ScatterRecord::from_text(text) {
            // anything that parses must serialize and reparse identically
            let round = ScatterRecord::from_text(&rec.to_text()).expect("round trip");
            assert_eq!(round, rec);
        }
    }
});
