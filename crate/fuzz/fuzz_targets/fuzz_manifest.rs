#![no_main]

use libfuzzer_sys::fuzz_target;
use waveguide::scenario::Scenario;

fuzz_target!(|data: &[u8]| {
    // manifests are scenario configs plus run metadata; a manifest that
    // parses must survive the canonical-serialization round trip
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(sc) = Scenario::from_text(text) {
            let canon = sc.to_text();
            let back = Scenario::from_text(&canon).expect("canonical form must parse");
            assert_eq!(back.to_text(), canon);
        }
    }
});
