#![no_main]

use libfuzzer_sys::fuzz_target;
use waveguide::scenario::Scenario;

fuzz_target!(|data: &[u8]| {
    // the config parser must reject garbage with an error, never a panic
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Scenario::from_text(text);
    }
});
