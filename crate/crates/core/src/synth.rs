//! Seeded random structured MiniLang programs, for property tests and
//! benchmarks. Every generated program parses, checks and terminates.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub functions: usize,
    pub max_depth: usize,
    pub max_block: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { functions: 2, max_depth: 3, max_block: 3 }
    }
}

struct Gen {
    rng: StdRng,
    cfg: SynthConfig,
    out: String,
    counters: usize,
}

impl Gen {
    fn line(&mut self, indent: usize, text: &str) {
        for _ in 0..indent {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn operand(&mut self) -> String {
        match self.rng.gen_range(0..4) {
            0 => "a".into(),
            1 => "b".into(),
            2 => "r".into(),
            _ => self.rng.gen_range(-5..20).to_string(),
        }
    }

    fn int_expr(&mut self) -> String {
        let x = self.operand();
        let y = self.operand();
        let op = ["+", "-", "*"][self.rng.gen_range(0..3)];
        format!("{x} {op} {y}")
    }

    fn cond(&mut self) -> String {
        let x = self.operand();
        let y = self.operand();
        let op = ["<", "<=", ">", ">=", "==", "!="][self.rng.gen_range(0..6)];
        let c = format!("{x} {op} {y}");
        match self.rng.gen_range(0..6) {
            0 => format!("{c} && {} > 0", self.operand()),
            1 => format!("{c} || {} < 3", self.operand()),
            _ => c,
        }
    }

    /// Emits a block that may end in `return` only when `may_return`.
    fn block(&mut self, indent: usize, depth: usize, may_return: bool) {
        let n = self.rng.gen_range(1..=self.cfg.max_block);
        for i in 0..n {
            let last = i + 1 == n;
            let pick = if depth >= self.cfg.max_depth { self.rng.gen_range(0..3) } else { self.rng.gen_range(0..8) };
            match pick {
                0 | 1 => {
                    let e = self.int_expr();
                    self.line(indent, &format!("r = ({e}) % 1000;"));
                }
                2 if last && may_return && self.rng.gen_bool(0.3) => {
                    let e = self.operand();
                    self.line(indent, &format!("return {e};"));
                }
                2 => {
                    let e = self.operand();
                    self.line(indent, &format!("r = r + {e};"));
                }
                3 | 4 => {
                    let c = self.cond();
                    let has_else = self.rng.gen_bool(0.5);
                    self.line(indent, &format!("if ({c}) {{"));
                    self.block(indent + 1, depth + 1, !has_else);
                    if has_else {
                        self.line(indent, "} else {");
                        self.block(indent + 1, depth + 1, false);
                    }
                    self.line(indent, "}");
                }
                5 => {
                    let c = self.cond();
                    self.line(indent, &format!("if ({c}) {{"));
                    self.block(indent + 1, depth + 1, true);
                    let c = self.cond();
                    self.line(indent, &format!("}} else if ({c}) {{"));
                    self.block(indent + 1, depth + 1, true);
                    self.line(indent, "}");
                }
                6 => {
                    self.counters += 1;
                    let k = format!("k{}", self.counters);
                    let bound = self.rng.gen_range(0..4);
                    self.line(indent, &format!("var {k}: int = 0;"));
                    self.line(indent, &format!("while ({k} < {bound}) {{"));
                    self.line(indent + 1, &format!("{k} = {k} + 1;"));
                    self.block(indent + 1, depth + 1, true);
                    self.line(indent, "}");
                }
                _ => {
                    self.counters += 1;
                    let k = format!("j{}", self.counters);
                    let bound = self.rng.gen_range(0..4);
                    self.line(indent, &format!("for (var {k}: int = 0; {k} < {bound}; {k} = {k} + 1) {{"));
                    self.block(indent + 1, depth + 1, true);
                    self.line(indent, "}");
                }
            }
        }
    }
}

/// Program text for `seed`. Functions are `pub func f<i>(a: int, b: int) -> int`.
pub fn program(seed: u64, cfg: SynthConfig) -> String {
    let mut g = Gen { rng: StdRng::seed_from_u64(seed), cfg, out: String::new(), counters: 0 };
    for i in 0..cfg.functions {
        if i > 0 {
            g.out.push('\n');
        }
        g.line(0, &format!("pub func f{i}(a: int, b: int) -> int {{"));
        g.line(1, "var r: int = 0;");
        g.block(1, 0, false);
        g.line(1, "return r;");
        g.line(0, "}");
    }
    g.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minilang::{parse, Role};

    #[test]
    fn generated_programs_check() {
        for seed in 0..300 {
            let text = program(seed, SynthConfig::default());
            if let Err(e) = parse("p.ml0", &text, Role::Source) {
                panic!("seed {seed}: {e}\n{text}");
            }
        }
    }

    #[test]
    fn same_seed_same_program() {
        assert_eq!(program(7, SynthConfig::default()), program(7, SynthConfig::default()));
        assert_ne!(program(7, SynthConfig::default()), program(8, SynthConfig::default()));
    }
}
