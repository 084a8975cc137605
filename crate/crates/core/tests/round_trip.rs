use pathgen_core::corpus;
use pathgen_core::minilang::{parse, pretty_unit, Role};
use pathgen_core::paths::approximate;
use pathgen_core::synth::{program, SynthConfig};

fn check(name: &str, text: &str) {
    let unit = parse(name, text, Role::Source).unwrap();
    let printed = pretty_unit(&unit);
    let reparsed = parse(name, &printed, Role::Source).unwrap_or_else(|e| panic!("{name}: {e}\n{printed}"));
    assert_eq!(pretty_unit(&reparsed), printed, "{name}: printing is not idempotent");
    let shape = |u| {
        approximate(u).unwrap().iter().map(|m| (m.method.clone(), m.cyc, m.paths.len())).collect::<Vec<_>>()
    };
    assert_eq!(shape(&unit), shape(&reparsed), "{name}: structure changed");
}

#[test]
fn corpus_round_trips() {
    for (name, text) in corpus::FILES {
        check(name, text);
    }
}

#[test]
fn random_programs_round_trip() {
    for seed in 0..200 {
        check(&format!("seed{seed}"), &program(seed, SynthConfig::default()));
    }
}
