use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;

use projcons::experiment::{parse_config, parse_event_schedule, parse_graph_literal, parse_schedule_spec};

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn config_seeds_parse_and_round_trip() {
    for (name, data) in corpus("config") {
        let cfg = parse_config(text(&data)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parse_config(&cfg.to_json()).unwrap(), cfg, "{name}");
    }
}

#[test]
fn graph_seeds_parse() {
    for (name, data) in corpus("graph_literal") {
        parse_graph_literal(text(&data)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn schedule_seeds_parse() {
    for (name, data) in corpus("schedule_spec") {
        let m = (data[0] % 8) as usize + 1;
        let s = parse_schedule_spec(text(&data[1..]), m).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(s.take(6).unwrap().len(), 6);
    }
}

#[test]
fn event_seeds_parse() {
    for (name, data) in corpus("event_schedule") {
        parse_event_schedule(text(&data)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn errors_name_the_offending_field() {
    let e = parse_config(r#"{"seed": 1}"#).unwrap_err().to_string();
    assert!(e.contains("mode"), "{e}");
    let e = parse_config(r#"{"mode": "sync", "engine": {"tol": "x"}}"#).unwrap_err().to_string();
    assert!(e.contains("engine.tol"), "{e}");
    let e = parse_config(r#"{"mode": "sync", "bogus": 1}"#).unwrap_err().to_string();
    assert!(e.contains("bogus"), "{e}");
    let e = parse_graph_literal(r#"{"m": 2, "arcs": [[0, 5]]}"#).unwrap_err().to_string();
    assert!(e.contains("arcs"), "{e}");
    let e = parse_event_schedule(r#"{"lower": [1.0], "upper": [0.5], "times": [[0.0]]}"#).unwrap_err();
    assert!(!e.to_string().is_empty());
    assert!(parse_graph_literal(r#"{"m": 100000, "arcs": []}"#).is_err());
}

fn mutate(seed: &[u8], cuts: &[(usize, u8)]) -> Vec<u8> {
    let mut v = seed.to_vec();
    for &(pos, byte) in cuts {
        if v.is_empty() {
            break;
        }
        let p = pos % v.len();
        match byte % 3 {
            0 => v[p] = byte,
            1 => {
                v.remove(p);
            }
            _ => v.insert(p, byte),
        }
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn arbitrary_text_never_panics(s in "\\PC{0,200}") {
        let _ = parse_config(&s);
        let _ = parse_graph_literal(&s);
        let _ = parse_schedule_spec(&s, 3);
        let _ = parse_event_schedule(&s);
    }

    #[test]
    fn mutated_seeds_never_panic(which in 0usize..64, cuts in proptest::collection::vec((any::<usize>(), any::<u8>()), 1..6)) {
        for target in ["config", "graph_literal", "schedule_spec", "event_schedule"] {
            let seeds = corpus(target);
            let (_, data) = &seeds[which % seeds.len()];
            let bytes = mutate(data, &cuts);
            let Ok(s) = std::str::from_utf8(&bytes) else { continue };
            match target {
                "config" => { let _ = parse_config(s); }
                "graph_literal" => { let _ = parse_graph_literal(s); }
                "schedule_spec" => if let Some(rest) = s.get(1..) {
                    if let Ok(sched) = parse_schedule_spec(rest, 3) { let _ = sched.take(3); }
                },
                _ => { let _ = parse_event_schedule(s); }
            }
        }
    }
}
