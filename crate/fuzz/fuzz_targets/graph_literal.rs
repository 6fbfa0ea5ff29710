#![no_main]

use libfuzzer_sys::fuzz_target;
use projcons::experiment::parse_graph_literal;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(g) = parse_graph_literal(s) {
            let _ = g.is_strongly_connected();
        }
    }
});
