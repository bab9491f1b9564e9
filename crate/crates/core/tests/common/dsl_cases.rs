//! Hand-evaluated programs and fuzz inputs for the evaluation language.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::walker_segment;
use prefclm::model::Segment;

/// Four steps: (0,0) (1,0) (2,0) (2,1); dist_goal 14 13 12 11;
/// velocity 0 1 1 1; actions noop right right up.
pub fn fixture() -> Segment {
    walker_segment(&[(0, 0), (1, 0), (2, 0), (2, 1)], &[0, 2, 2, 4], &[0.0, 1.0, 1.0, 1.0])
}

pub fn golden() -> Vec<(&'static str, f64)> {
    let g = |x: f64, mu: f64| (-((x - mu) * (x - mu)) / 2.0).exp();
    vec![
        ("return mean(dist_goal)", 12.5),
        ("return -sum(dist_goal)", -50.0),
        ("return dist_goal_first - dist_goal_last", 3.0),
        ("return progress(dist_goal)", 3.0 / 14.0),
        ("return len()", 4.0),
        ("return count_if(action_id == 2)", 2.0),
        ("return max(pos_x)", 2.0),
        ("return min(pos_y)", 0.0),
        ("return sum(max(pos_x, pos_y))", 5.0),
        ("return var(pos_x)", 0.6875),
        ("return std(velocity)", 0.1875f64.sqrt()),
        ("return first(dist_goal) + last(pos_y)", 15.0),
        ("return sum(delta(dist_goal))", -3.0),
        (
            "let d = dist_goal in return mean(gauss(d, 11, 1))",
            (g(14.0, 11.0) + g(13.0, 11.0) + g(12.0, 11.0) + g(11.0, 11.0)) / 4.0,
        ),
        ("return sigmoid(dist_goal_last - 11, 3)", 0.5),
        ("return clamp(dist_goal_first, 0, 10) / 5", 2.0),
        ("return 1 / 0", 0.0),
        ("return 2 + 3 * 4 - 6 / 3", 12.0),
        ("return (1 < 2) and not (3 == 4)", 1.0),
        ("return 0 or 0", 0.0),
        ("return sum(t * is_last)", 3.0),
        ("return sum(over_steps(1 + 0 * t))", 4.0),
        ("let a = 2 in let b = a * a in return b - a", 2.0),
        ("return exp(0) + abs(-3)", 4.0),
        ("return 0.5 * mean(velocity) - 0.01 * len()", 0.5 * 0.75 - 0.01 * 4.0),
        ("let x = 1 in let x = x + 1 in return x", 2.0),
        ("return - - 2", 2.0),
        ("return 1e-3 * 1000", 1.0),
        ("return count_if(pos_x >= 2 and pos_y < 1)", 1.0),
        ("return exp(1000)", 0.0),
        ("# comment line\nreturn mean(pos_x != pos_y) # trailing", 0.75),
        ("return -progress(dist_goal) * 2 + dist_goal_last / dist_goal_first", -6.0 / 14.0 + 11.0 / 14.0),
    ]
}

const TOKENS: &[&str] = &[
    "let", "in", "return", "and", "or", "not", "+", "-", "*", "/", "(", ")", ",", "=", "==", "!=", "<", "<=",
    ">", ">=", "0", "1.5", "1e308", "1e-308", ".5", "dist_goal", "pos_x", "velocity", "pressed", "t",
    "is_last", "action_id", "dist_goal_first", "pos_y_last", "mean", "sum", "min", "max", "std", "var",
    "first", "last", "count_if", "gauss", "sigmoid", "abs", "exp", "clamp", "delta", "progress", "len",
    "over_steps", "x", "#", "\n", "$", "é", "",
];

pub fn fuzz_input(rng: &mut ChaCha8Rng, seeds: &[String]) -> String {
    match rng.gen_range(0..4) {
        // Random bytes, lossily decoded.
        0 => {
            let n = rng.gen_range(0..64);
            let bytes: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        }
        // Token soup.
        1 => (0..rng.gen_range(0..40))
            .map(|_| TOKENS[rng.gen_range(0..TOKENS.len())])
            .collect::<Vec<_>>()
            .join(" "),
        // A valid program with a few characters changed.
        2 => {
            let mut chars: Vec<char> = seeds[rng.gen_range(0..seeds.len())].chars().collect();
            for _ in 0..rng.gen_range(1..4) {
                if chars.is_empty() {
                    break;
                }
                let i = rng.gen_range(0..chars.len());
                match rng.gen_range(0..3) {
                    0 => {
                        chars.remove(i);
                    }
                    1 => chars.insert(i, b"()+-*/,=<>#a1 .e"[rng.gen_range(0..16)] as char),
                    _ => {
                        let j = rng.gen_range(0..chars.len());
                        chars.swap(i, j);
                    }
                }
            }
            chars.into_iter().collect()
        }
        // Deep nesting.
        _ => {
            let d = rng.gen_range(1..400);
            format!("return {}1{}", "abs(".repeat(d), ")".repeat(d))
        }
    }
}

