//! Oracle-labelled GridWalker pairs and checks for the reward model.

use prefclm::envs::{segment_return, EnvSpec, Policy, DOWN, LEFT, RIGHT, UP};
use prefclm::model::{ActionRec, Preference, PreferenceQuery, Segment, State};
use prefclm::reward::{bt_loss, bt_loss_grad, RewardEnsemble, RewardNet};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random walk that heads toward the goal with probability `bias`.
pub struct Drift {
    pub bias: f64,
}

impl Policy for Drift {
    fn act(&self, _state: &State, rng: &mut dyn RngCore) -> ActionRec {
        let a = if rng.gen::<f64>() < self.bias {
            [RIGHT, UP][rng.gen_range(0..2)]
        } else {
            [LEFT, DOWN, RIGHT, UP, 0][rng.gen_range(0..5)]
        };
        ActionRec::new(a)
    }
}

pub fn labeled(seg0: Segment, seg1: Segment, id: u64, label: Preference) -> PreferenceQuery {
    let mut q = PreferenceQuery::pending(id, seg0, seg1).unwrap();
    q.label = Some(label);
    q
}

pub fn oracle_pairs(n: usize, seed: u64) -> Vec<PreferenceQuery> {
    let env = EnvSpec::grid_walker();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seg = |rng: &mut ChaCha8Rng| {
        let p = Drift {
            bias: rng.gen_range(0.0..1.0),
        };
        let len = 10;
        env.rollout_segment(&p, len, rng.gen()).unwrap()
    };
    (0..n as u64)
        .map(|id| {
            let (a, b) = (seg(&mut rng), seg(&mut rng));
            let (ga, gb) = (segment_return(&a).unwrap(), segment_return(&b).unwrap());
            let label = if ga > gb {
                Preference::First
            } else if gb > ga {
                Preference::Second
            } else {
                Preference::Equal
            };
            labeled(a, b, id, label)
        })
        .collect()
}

/// Network with every parameter, including the output layer, randomized.
pub fn scrambled_net(seed: u64) -> RewardNet {
    let env = EnvSpec::grid_walker();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = RewardNet::with_hidden(env.feature_scale.clone(), env.action_count, &[16, 16], &mut rng);
    for p in net.params_mut() {
        *p = rng.gen_range(-0.5..0.5);
    }
    net
}

/// Held-out accuracy on strict pairs: the model must put more than half the
/// probability on the segment with the higher true return.
pub fn held_out_accuracy(ens: &RewardEnsemble, test: &[PreferenceQuery]) -> f64 {
    let strict: Vec<_> = test.iter().filter(|q| q.label != Some(Preference::Equal)).collect();
    let correct = strict
        .iter()
        .filter(|q| {
            let p: f64 = ens.member_predictions(&q.seg0, &q.seg1).iter().sum::<f64>() / ens.len() as f64;
            (p > 0.5) == (q.label == Some(Preference::Second))
        })
        .count();
    correct as f64 / strict.len() as f64
}

/// Relative L2 error between the analytic gradient and central differences
/// with step `h`, over every parameter.
pub fn gradient_error(net: &mut RewardNet, batch: &[PreferenceQuery], h: f64) -> f64 {
    let (_, grad) = bt_loss_grad(net, batch).unwrap();
    let mut fd = vec![0.0; grad.len()];
    for i in 0..grad.len() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = bt_loss(net, batch).unwrap();
        net.params_mut()[i] = orig - h;
        let down = bt_loss(net, batch).unwrap();
        net.params_mut()[i] = orig;
        fd[i] = (up - down) / (2.0 * h);
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = grad.iter().zip(&fd).map(|(a, b)| a - b).collect();
    let scale = norm(&grad).max(norm(&fd));
    assert!(scale > 1e-6, "degenerate gradient");
    norm(&diff) / scale
}
