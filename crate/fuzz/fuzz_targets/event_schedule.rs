#![no_main]

use libfuzzer_sys::fuzz_target;
use projcons::async_engine::Timeline;
use projcons::experiment::parse_event_schedule;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(sched) = parse_event_schedule(s) {
            let tl = Timeline::merge(&sched);
            for w in tl.times().windows(2) {
                assert!(w[0] < w[1]);
            }
        }
    }
});
