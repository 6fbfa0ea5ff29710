#![no_main]

use libfuzzer_sys::fuzz_target;
use projcons::experiment::parse_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_config(s) {
            // whatever parses must survive a round trip
            let again = parse_config(&cfg.to_json()).expect("round trip");
            assert_eq!(again, cfg);
        }
    }
});
