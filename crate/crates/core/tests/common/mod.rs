//! Helpers shared by the integration tests: segment builders, a random
//! program generator and an independent brute-force evidence-fusion oracle.
#![allow(dead_code)]

pub mod dsl_cases;
pub mod reward_cases;

use prefclm::envs::{EnvSpec, RandomPolicy};
use prefclm::model::{ActionRec, Segment};
use rand::Rng;

/// GridWalker segment through `cells`, with the given actions and velocities.
pub fn walker_segment(cells: &[(usize, usize)], actions: &[usize], velocity: &[f64]) -> Segment {
    let env = EnvSpec::grid_walker();
    Segment {
        steps: cells
            .iter()
            .zip(actions)
            .zip(velocity)
            .map(|((&c, &a), &v)| (env.make_state(c, false, v), ActionRec::new(a)))
            .collect(),
        env_id: env.name.clone(),
        segment_id: 0,
        policy_version: 0,
    }
}

pub fn random_segment(env: &EnvSpec, len: usize, seed: u64) -> Segment {
    let policy = RandomPolicy {
        action_count: env.action_count,
    };
    env.rollout_segment(&policy, len, seed).unwrap()
}

// ---- brute-force Dempster oracle ----

const S0: u8 = 0b01;
const S1: u8 = 0b10;
const BOTH: u8 = 0b11;

#[derive(Clone, Copy, Debug)]
pub struct OracleFusion {
    pub m: [f64; 3],
    /// Conflict of the final pairwise combination (0 for a single agent).
    pub last_conflict: f64,
    /// 0, 0.5 or 1.
    pub label: f64,
}

/// Ratio normalization with the positive shift for non-positive scores.
pub fn oracle_normalize(rho0: f64, rho1: f64) -> (f64, f64) {
    let lo = rho0.min(rho1);
    let (a, b) = if lo <= 0.0 {
        let shift = -lo.min(0.0) + 1e-6;
        (rho0 + shift, rho1 + shift)
    } else {
        (rho0, rho1)
    };
    if a + b < 1e-12 {
        (0.5, 0.5)
    } else {
        (a / (a + b), b / (a + b))
    }
}

pub fn oracle_masses(rho0: f64, rho1: f64, phi: f64) -> [(u8, f64); 3] {
    let (r0, r1) = oracle_normalize(rho0, rho1);
    let both = phi * (1.0 - (r0 - r1).abs());
    [(S0, r0 * (1.0 - both)), (S1, r1 * (1.0 - both)), (BOTH, both)]
}

/// Enumerates all 3^n choices of focal element, one per agent, intersects
/// them and renormalizes away the mass that lands on the empty set.
/// Returns `None` under total conflict.
fn enumerate(agents: &[[(u8, f64); 3]]) -> Option<[f64; 3]> {
    let n = agents.len();
    let mut acc = [0.0f64; 4];
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let mut set = BOTH;
        let mut mass = 1.0;
        for agent in agents {
            let (s, m) = agent[c % 3];
            c /= 3;
            set &= s;
            mass *= m;
        }
        acc[set as usize] += mass;
    }
    let norm = 1.0 - acc[0];
    if norm < 1e-12 {
        return None;
    }
    Some([acc[S0 as usize] / norm, acc[S1 as usize] / norm, acc[BOTH as usize] / norm])
}

fn argmax_label(m: [f64; 3]) -> f64 {
    let top = m[0].max(m[1]).max(m[2]);
    let at = |x: f64| top - x <= 1e-12;
    match (at(m[0]), at(m[1]), at(m[2])) {
        (true, false, false) => 0.0,
        (false, true, false) => 1.0,
        _ => 0.5,
    }
}

pub fn oracle_fuse(scores: &[(f64, f64)], phi: f64) -> OracleFusion {
    let agents: Vec<_> = scores.iter().map(|&(a, b)| oracle_masses(a, b, phi)).collect();
    let vacuous = OracleFusion {
        m: [0.0, 0.0, 1.0],
        last_conflict: 1.0,
        label: 0.5,
    };
    let Some(m) = enumerate(&agents) else {
        return vacuous;
    };
    let last_conflict = if agents.len() < 2 {
        0.0
    } else {
        let Some(prev) = enumerate(&agents[..agents.len() - 1]) else {
            return vacuous;
        };
        let last = agents[agents.len() - 1];
        prev[0] * last[1].1 + prev[1] * last[0].1
    };
    OracleFusion {
        m,
        last_conflict,
        label: argmax_label(m),
    }
}

// ---- random well-typed programs ----

/// Generates well-typed source text over `schema`.
pub struct ProgramGen<'a, R: Rng> {
    pub rng: &'a mut R,
    pub schema: &'a [String],
    lets: Vec<String>,
}

impl<'a, R: Rng> ProgramGen<'a, R> {
    pub fn new(rng: &'a mut R, schema: &'a [String]) -> Self {
        Self {
            rng,
            schema,
            lets: Vec::new(),
        }
    }

    pub fn program(&mut self) -> String {
        let mut out = String::new();
        for i in 0..self.rng.gen_range(0..3) {
            let name = format!("v{i}");
            let value = self.scalar(3);
            out.push_str(&format!("let {name} = {value} in\n"));
            self.lets.push(name);
        }
        out.push_str("return ");
        out.push_str(&self.scalar(4));
        out
    }

    fn number(&mut self) -> String {
        match self.rng.gen_range(0..4) {
            0 => format!("{}", self.rng.gen_range(0..20)),
            1 => format!("{}", self.rng.gen_range(0.0..10.0f64)),
            2 => format!("{:e}", self.rng.gen_range(1e-8..1e3f64)),
            _ => "0.5".into(),
        }
    }

    fn feature(&mut self) -> String {
        self.schema[self.rng.gen_range(0..self.schema.len())].clone()
    }

    pub fn scalar(&mut self, depth: u32) -> String {
        let leaf = depth == 0 || self.rng.gen_bool(0.25);
        if leaf {
            return match self.rng.gen_range(0..5) {
                0 => self.number(),
                1 => format!("{}_first", self.feature()),
                2 => format!("{}_last", self.feature()),
                3 if !self.lets.is_empty() => self.lets[self.rng.gen_range(0..self.lets.len())].clone(),
                _ => "len()".into(),
            };
        }
        let d = depth - 1;
        match self.rng.gen_range(0..12) {
            0 => {
                let r = ["mean", "sum", "min", "max", "std", "var", "first", "last", "count_if", "progress"]
                    [self.rng.gen_range(0..10)];
                format!("{r}({})", self.series(d))
            }
            1 | 2 => {
                let op = self.op();
                format!("({} {op} {})", self.scalar(d), self.scalar(d))
            }
            3 => format!("-{}", self.scalar(d)),
            4 => format!("(not {})", self.scalar(d)),
            5 => format!("gauss({}, {}, {})", self.scalar(d), self.scalar(d), self.scalar(d)),
            6 => format!("sigmoid({}, {})", self.scalar(d), self.scalar(d)),
            7 => format!("clamp({}, {}, {})", self.scalar(d), self.scalar(d), self.scalar(d)),
            8 => format!("abs({})", self.scalar(d)),
            9 => format!("exp({})", self.scalar(d)),
            10 => format!("min({}, {})", self.scalar(d), self.scalar(d)),
            _ => format!("mean({})", self.series(d)),
        }
    }

    pub fn series(&mut self, depth: u32) -> String {
        let leaf = depth == 0 || self.rng.gen_bool(0.3);
        if leaf {
            return match self.rng.gen_range(0..4) {
                0 => "action_id".into(),
                1 => "t".into(),
                2 => "is_last".into(),
                _ => self.feature(),
            };
        }
        let d = depth - 1;
        match self.rng.gen_range(0..7) {
            0 => {
                let op = self.op();
                format!("({} {op} {})", self.series(d), self.scalar(d))
            }
            1 => {
                let op = self.op();
                format!("({} {op} {})", self.scalar(d), self.series(d))
            }
            2 => format!("delta({})", self.series(d)),
            3 => format!("over_steps({})", self.series(d)),
            4 => format!("gauss({}, {}, {})", self.series(d), self.scalar(d), self.scalar(d)),
            5 => format!("max({}, {})", self.series(d), self.scalar(d)),
            _ => format!("abs({})", self.series(d)),
        }
    }

    fn op(&mut self) -> &'static str {
        ["+", "-", "*", "/", "==", "!=", "<", "<=", ">", ">=", "and", "or"][self.rng.gen_range(0..12)]
    }
}
