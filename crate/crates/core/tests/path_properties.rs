use std::collections::HashSet;
use std::time::Instant;

use pathgen_core::cfg::{build_file_cfg, cyclomatic_complexity};
use pathgen_core::minilang::{parse, Role};
use pathgen_core::paths::{explore_paths, is_well_formed};
use pathgen_core::synth::{program, SynthConfig};

const PROGRAMS: u64 = 250;

#[test]
fn random_programs_satisfy_path_laws() {
    let started = Instant::now();
    let mut methods = 0;
    for seed in 0..PROGRAMS {
        let text = program(seed, SynthConfig::default());
        let unit = parse("p.ml0", &text, Role::Source).unwrap();
        for cfg in build_file_cfg(&unit).methods {
            cfg.validate().unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            let paths = explore_paths(&cfg).unwrap();
            let again = explore_paths(&cfg).unwrap();
            assert_eq!(paths, again, "seed {seed}: nondeterministic");

            let cyc = cyclomatic_complexity(&cfg);
            assert!(paths.len() <= cyc, "seed {seed} {}: {} paths > CYC {cyc}", cfg.method, paths.len());

            let mut seen = HashSet::new();
            for p in &paths {
                assert!(is_well_formed(&cfg, p), "seed {seed}: malformed path {}", p.key);
                let fresh = p.edge_ids.iter().filter(|e| !seen.contains(*e)).count();
                assert!(fresh > 0, "seed {seed}: path {} adds no edge", p.key);
                seen.extend(p.edge_ids.iter().copied());
            }
            assert_eq!(seen.len(), cfg.edges.len(), "seed {seed} {}: edges left uncovered", cfg.method);
            methods += 1;
        }
    }
    assert!(methods >= 2 * PROGRAMS as usize);
    assert!(started.elapsed().as_secs() < 30);
}
