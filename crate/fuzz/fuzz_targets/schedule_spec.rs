#![no_main]

use libfuzzer_sys::fuzz_target;
use projcons::experiment::parse_schedule_spec;

fuzz_target!(|data: &[u8]| {
    let Some((&m, rest)) = data.split_first() else { return };
    if let Ok(s) = std::str::from_utf8(rest) {
        if let Ok(sched) = parse_schedule_spec(s, (m % 8) as usize + 1) {
            let _ = sched.take(4);
        }
    }
});
