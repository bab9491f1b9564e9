//! Synthetic teachers and the few-shot alignment filter.

use std::sync::Arc;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{EvalError, EvalProgram};
use crate::dst::{self, FusionError, FusionResult, ScorePair};
use crate::envs::{segment_return, EnvError};
use crate::model::{FusionMode, LabelSource, Preference, PreferenceQuery, Segment};

/// Scores closer than this count as equal for pseudo-preferences.
pub const PSEUDO_TIE: f64 = 1e-12;
/// Resampling rounds attempted when the filter rejects the entire pool.
pub const FILTER_RESAMPLE_ROUNDS: usize = 3;

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error("ground-truth reward unavailable: {0}")]
    MissingReward(#[from] EnvError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("crowd teacher has an empty function pool")]
    EmptyPool,
    #[error("alignment needs at least one pilot pair")]
    EmptyPilot,
    #[error("pilot query {0} has no expert label")]
    MissingExpertLabel(u64),
    #[error("preference vectors differ in length or pair ids")]
    VectorMismatch,
    #[error("cosine similarity undefined for a zero vector")]
    ZeroNorm,
    #[error("human teacher cannot label synchronously")]
    NeedsHuman,
    #[error("resampling failed: {0}")]
    Resample(String),
}

/// Irrationality knobs of the scripted teacher.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StochasticLabelConfig {
    pub equal_threshold: f64,
    pub skip_threshold: f64,
    pub mistake_rate: f64,
}

/// Labels a pair by comparing ground-truth returns.
///
/// `None` means the query is skipped because the return gap is below
/// `skip_threshold`.
pub fn scripted_label<R: Rng + ?Sized>(
    seg0: &Segment,
    seg1: &Segment,
    cfg: &StochasticLabelConfig,
    rng: &mut R,
) -> Result<Option<Preference>, TeacherError> {
    let g0 = segment_return(seg0)?;
    let g1 = segment_return(seg1)?;
    Ok(label_from_returns(g0, g1, cfg, rng))
}

pub fn label_from_returns<R: Rng + ?Sized>(
    g0: f64,
    g1: f64,
    cfg: &StochasticLabelConfig,
    rng: &mut R,
) -> Option<Preference> {
    let gap = (g0 - g1).abs();
    if gap < cfg.skip_threshold {
        return None;
    }
    if gap < cfg.equal_threshold || g0 == g1 {
        return Some(Preference::Equal);
    }
    let label = if g0 > g1 {
        Preference::First
    } else {
        Preference::Second
    };
    if cfg.mistake_rate > 0.0 && rng.gen::<f64>() < cfg.mistake_rate {
        return Some(label.flip());
    }
    Some(label)
}

/// Score pairs from every program in the pool, in pool order.
pub fn crowd_scores(
    pool: &[EvalProgram],
    seg0: &Segment,
    seg1: &Segment,
) -> Result<Vec<ScorePair>, TeacherError> {
    pool.iter()
        .map(|p| Ok(ScorePair::new(p.score(seg0)?, p.score(seg1)?)))
        .collect()
}

/// Crowd label plus the fusion detail when DST was used.
#[derive(Clone, Debug, PartialEq)]
pub struct CrowdOutcome {
    pub label: Preference,
    pub fusion: Option<FusionResult>,
    pub scores: Vec<ScorePair>,
}

pub fn crowd_label_detailed(
    seg0: &Segment,
    seg1: &Segment,
    pool: &[EvalProgram],
    phi: f64,
    mode: FusionMode,
) -> Result<CrowdOutcome, TeacherError> {
    if pool.is_empty() {
        return Err(TeacherError::EmptyPool);
    }
    let scores = crowd_scores(pool, seg0, seg1)?;
    let (label, fusion) = match mode {
        FusionMode::Dst => {
            let r = dst::fuse_crowd(&scores, phi)?;
            (r.label, Some(r))
        }
        FusionMode::Majority => (dst::majority_vote(&scores)?, None),
        FusionMode::Single => (pseudo_from_scores(scores[0].rho0, scores[0].rho1), None),
    };
    Ok(CrowdOutcome {
        label,
        fusion,
        scores,
    })
}

pub fn crowd_label(
    seg0: &Segment,
    seg1: &Segment,
    pool: &[EvalProgram],
    phi: f64,
    mode: FusionMode,
) -> Result<Preference, TeacherError> {
    crowd_label_detailed(seg0, seg1, pool, phi, mode).map(|o| o.label)
}

fn pseudo_from_scores(s0: f64, s1: f64) -> Preference {
    if (s0 - s1).abs() <= PSEUDO_TIE {
        Preference::Equal
    } else if s0 > s1 {
        Preference::First
    } else {
        Preference::Second
    }
}

/// The label a single program implies for a pair.
pub fn pseudo_preference(
    program: &EvalProgram,
    seg0: &Segment,
    seg1: &Segment,
) -> Result<Preference, TeacherError> {
    Ok(pseudo_from_scores(program.score(seg0)?, program.score(seg1)?))
}

/// Signed preference encoding: `Second` is +1, `First` is −1, `Equal` is 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceVector {
    pub entries: Vec<f64>,
    pub pair_ids: Vec<u64>,
}

impl PreferenceVector {
    pub fn encode(p: Preference) -> f64 {
        match p {
            Preference::First => -1.0,
            Preference::Equal => 0.0,
            Preference::Second => 1.0,
        }
    }

    pub fn from_labels(labels: impl IntoIterator<Item = (u64, Preference)>) -> Self {
        let (pair_ids, entries) = labels.into_iter().map(|(id, p)| (id, Self::encode(p))).unzip();
        Self { entries, pair_ids }
    }
}

pub fn cosine_similarity(a: &PreferenceVector, b: &PreferenceVector) -> Result<f64, TeacherError> {
    if a.entries.len() != b.entries.len() || a.pair_ids != b.pair_ids {
        return Err(TeacherError::VectorMismatch);
    }
    let dot: f64 = a.entries.iter().zip(&b.entries).map(|(x, y)| x * y).sum();
    let na = a.entries.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.entries.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(TeacherError::ZeroNorm);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn expert_vector(pilot: &[PreferenceQuery]) -> Result<PreferenceVector, TeacherError> {
    if pilot.is_empty() {
        return Err(TeacherError::EmptyPilot);
    }
    let labels = pilot
        .iter()
        .map(|q| q.label.map(|l| (q.query_id, l)).ok_or(TeacherError::MissingExpertLabel(q.query_id)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PreferenceVector::from_labels(labels))
}

/// Similarity between one program's pseudo-preferences and the expert's.
/// `None` when the similarity is undefined (a zero vector).
pub fn program_similarity(
    program: &EvalProgram,
    pilot: &[PreferenceQuery],
) -> Result<Option<f64>, TeacherError> {
    let expert = expert_vector(pilot)?;
    let mine = PreferenceVector::from_labels(
        pilot
            .iter()
            .map(|q| pseudo_preference(program, &q.seg0, &q.seg1).map(|p| (q.query_id, p)))
            .collect::<Result<Vec<_>, _>>()?,
    );
    match cosine_similarity(&expert, &mine) {
        Ok(s) => Ok(Some(s)),
        Err(TeacherError::ZeroNorm) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Per-program similarity scores, in pool order.
pub fn similarities(
    pool: &[EvalProgram],
    pilot: &[PreferenceQuery],
) -> Result<Vec<Option<f64>>, TeacherError> {
    pool.iter().map(|p| program_similarity(p, pilot)).collect()
}

/// Keeps the programs whose similarity reaches `threshold`. No fallback.
pub fn filter_by_similarity(
    pool: &[EvalProgram],
    pilot: &[PreferenceQuery],
    threshold: f64,
) -> Result<Vec<EvalProgram>, TeacherError> {
    let sims = similarities(pool, pilot)?;
    Ok(pool
        .iter()
        .zip(sims)
        .filter(|(_, s)| s.is_some_and(|s| s >= threshold))
        .map(|(p, _)| p.clone())
        .collect())
}

#[derive(Clone, Debug)]
pub struct FilterOutcome {
    pub kept: Vec<EvalProgram>,
    /// Similarity of each kept program, aligned with `kept`.
    pub similarities: Vec<Option<f64>>,
    pub resample_rounds: usize,
    pub warning: Option<String>,
}

/// Few-shot alignment. Programs below `threshold` are dropped; if nothing
/// survives, `resample` is asked for a fresh pool up to
/// [`FILTER_RESAMPLE_ROUNDS`] times, after which the best ⌈n/2⌉ programs seen
/// are kept with a warning.
pub fn align_filter(
    pool: Vec<EvalProgram>,
    pilot: &[PreferenceQuery],
    threshold: f64,
    mut resample: impl FnMut(usize) -> Result<Vec<EvalProgram>, TeacherError>,
) -> Result<FilterOutcome, TeacherError> {
    let n = pool.len();
    let mut seen: Vec<(EvalProgram, Option<f64>)> = Vec::new();
    let mut current = pool;
    for round in 0..=FILTER_RESAMPLE_ROUNDS {
        let sims = similarities(&current, pilot)?;
        let (kept, kept_sims): (Vec<_>, Vec<_>) = current
            .iter()
            .cloned()
            .zip(sims.iter().copied())
            .filter(|(_, s)| s.is_some_and(|s| s >= threshold))
            .unzip();
        if !kept.is_empty() {
            return Ok(FilterOutcome {
                kept,
                similarities: kept_sims,
                resample_rounds: round,
                warning: None,
            });
        }
        seen.extend(current.into_iter().zip(sims));
        if round == FILTER_RESAMPLE_ROUNDS {
            break;
        }
        current = resample(round + 1)?;
    }

    let keep = n.div_ceil(2).max(1);
    // Stable sort: undefined similarities rank last, ties keep discovery order.
    seen.sort_by(|a, b| {
        let key = |s: Option<f64>| s.unwrap_or(f64::NEG_INFINITY);
        key(b.1).total_cmp(&key(a.1))
    });
    seen.truncate(keep);
    let message = format!(
        "no program reached similarity {threshold} after {FILTER_RESAMPLE_ROUNDS} resample rounds; keeping the best {keep}"
    );
    warn!("{message}");
    let (kept, similarities) = seen.into_iter().unzip();
    Ok(FilterOutcome {
        kept,
        similarities,
        resample_rounds: FILTER_RESAMPLE_ROUNDS,
        warning: Some(message),
    })
}

/// A configured labeller used by the training loop.
#[derive(Clone, Debug)]
pub enum Teacher {
    /// Noise-free comparison of ground-truth returns.
    Oracle,
    Scripted(StochasticLabelConfig),
    Crowd {
        pool: Arc<Vec<EvalProgram>>,
        phi: f64,
        mode: FusionMode,
    },
    Human,
}

impl Teacher {
    pub fn source(&self) -> LabelSource {
        match self {
            Teacher::Oracle => LabelSource::Oracle,
            Teacher::Scripted(_) => LabelSource::Scripted,
            Teacher::Crowd {
                mode: FusionMode::Majority,
                ..
            } => LabelSource::Majority,
            Teacher::Crowd { .. } => LabelSource::Crowd,
            Teacher::Human => LabelSource::Human,
        }
    }

    pub fn label<R: Rng + ?Sized>(
        &self,
        seg0: &Segment,
        seg1: &Segment,
        rng: &mut R,
    ) -> Result<Option<Preference>, TeacherError> {
        match self {
            Teacher::Oracle => scripted_label(seg0, seg1, &StochasticLabelConfig::default(), rng),
            Teacher::Scripted(cfg) => scripted_label(seg0, seg1, cfg, rng),
            Teacher::Crowd { pool, phi, mode } => crowd_label(seg0, seg1, pool, *phi, *mode).map(Some),
            Teacher::Human => Err(TeacherError::NeedsHuman),
        }
    }

    pub fn pool(&self) -> Option<&Arc<Vec<EvalProgram>>> {
        match self {
            Teacher::Crowd { pool, .. } => Some(pool),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{EnvSpec, RIGHT};
    use crate::model::ActionRec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    fn cfg(eq: f64, skip: f64, mistake: f64) -> StochasticLabelConfig {
        StochasticLabelConfig {
            equal_threshold: eq,
            skip_threshold: skip,
            mistake_rate: mistake,
        }
    }

    #[test]
    fn returns_decide_label() {
        let c = cfg(0.0, 0.0, 0.0);
        assert_eq!(label_from_returns(5.0, 3.0, &c, &mut rng()), Some(Preference::First));
        assert_eq!(label_from_returns(3.0, 5.0, &c, &mut rng()), Some(Preference::Second));
        assert_eq!(label_from_returns(4.0, 4.0, &c, &mut rng()), Some(Preference::Equal));
    }

    #[test]
    fn equal_and_skip_thresholds() {
        assert_eq!(
            label_from_returns(4.0, 4.05, &cfg(0.1, 0.0, 0.0), &mut rng()),
            Some(Preference::Equal)
        );
        assert_eq!(label_from_returns(4.0, 4.05, &cfg(0.0, 0.1, 0.0), &mut rng()), None);
    }

    #[test]
    fn mistakes_flip_only_strict_labels() {
        let c = cfg(0.0, 0.0, 1.0);
        assert_eq!(label_from_returns(5.0, 3.0, &c, &mut rng()), Some(Preference::Second));
        assert_eq!(label_from_returns(3.0, 3.0, &c, &mut rng()), Some(Preference::Equal));
    }

    fn walk(cells: &[(usize, usize)]) -> Segment {
        let env = EnvSpec::grid_walker();
        Segment {
            steps: cells
                .iter()
                .map(|&c| (env.make_state(c, false, 0.0), ActionRec::new(RIGHT)))
                .collect(),
            env_id: env.name.clone(),
            segment_id: 0,
            policy_version: 0,
        }
    }

    #[test]
    fn scripted_label_uses_ground_truth() {
        let toward = walk(&[(0, 0), (1, 0), (2, 0)]);
        let stuck = walk(&[(7, 0), (7, 0), (7, 0)]);
        let c = StochasticLabelConfig::default();
        assert_eq!(scripted_label(&toward, &stuck, &c, &mut rng()).unwrap(), Some(Preference::First));
        let mut bogus = toward.clone();
        bogus.env_id = "nowhere".into();
        assert!(matches!(
            scripted_label(&bogus, &stuck, &c, &mut rng()),
            Err(TeacherError::MissingReward(_))
        ));
    }

    #[test]
    fn pseudo_preference_rule() {
        let env = EnvSpec::grid_walker();
        let p = EvalProgram::parse_for(&env, "return 0 - dist_goal_last").unwrap();
        let near = walk(&[(6, 7), (7, 6)]);
        let far = walk(&[(0, 0), (0, 1)]);
        assert_eq!(pseudo_preference(&p, &near, &far).unwrap(), Preference::First);
        assert_eq!(pseudo_preference(&p, &far, &near).unwrap(), Preference::Second);
        assert_eq!(pseudo_preference(&p, &far, &far).unwrap(), Preference::Equal);
    }

    fn pv(entries: &[f64]) -> PreferenceVector {
        PreferenceVector {
            entries: entries.to_vec(),
            pair_ids: (0..entries.len() as u64).collect(),
        }
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&pv(&[1.0, 1.0, -1.0]), &pv(&[1.0, 1.0, -1.0])).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_similarity(&pv(&[1.0, 1.0]), &pv(&[-1.0, -1.0])).unwrap() + 1.0).abs() < 1e-15);
        // dot = 1, norms √3 · √3.
        let s = cosine_similarity(&pv(&[1.0, -1.0, 1.0]), &pv(&[1.0, 1.0, 1.0])).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            cosine_similarity(&pv(&[0.0, 0.0]), &pv(&[1.0, 1.0])),
            Err(TeacherError::ZeroNorm)
        ));
        assert!(matches!(
            cosine_similarity(&pv(&[1.0]), &pv(&[1.0, 1.0])),
            Err(TeacherError::VectorMismatch)
        ));
    }

    #[test]
    fn encoding_is_signed() {
        assert_eq!(PreferenceVector::encode(Preference::Second), 1.0);
        assert_eq!(PreferenceVector::encode(Preference::First), -1.0);
        assert_eq!(PreferenceVector::encode(Preference::Equal), 0.0);
    }

    #[test]
    fn crowd_on_identical_segments_is_equal() {
        let env = EnvSpec::grid_walker();
        let pool: Vec<_> = ["return mean(dist_goal)", "return progress(pos_x) + 3", "return 0 - sum(velocity)"]
            .iter()
            .map(|s| EvalProgram::parse_for(&env, s).unwrap())
            .collect();
        let seg = walk(&[(0, 0), (1, 0), (1, 1)]);
        for mode in [FusionMode::Dst, FusionMode::Majority, FusionMode::Single] {
            assert_eq!(crowd_label(&seg, &seg, &pool, 0.3, mode).unwrap(), Preference::Equal);
        }
        assert!(matches!(
            crowd_label(&seg, &seg, &[], 0.3, FusionMode::Dst),
            Err(TeacherError::EmptyPool)
        ));
    }

    #[test]
    fn teacher_sources() {
        assert_eq!(Teacher::Oracle.source(), LabelSource::Oracle);
        assert_eq!(Teacher::Human.source(), LabelSource::Human);
        let t = Teacher::Crowd {
            pool: Arc::new(vec![]),
            phi: 0.3,
            mode: FusionMode::Majority,
        };
        assert_eq!(t.source(), LabelSource::Majority);
        let seg = walk(&[(0, 0), (0, 0)]);
        assert!(matches!(Teacher::Human.label(&seg, &seg, &mut rng()), Err(TeacherError::NeedsHuman)));
    }

}
