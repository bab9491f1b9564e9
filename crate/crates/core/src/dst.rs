//! Evidence fusion over the two-segment frame.
//!
//! Each agent's score pair is normalized to a ratio, turned into masses on
//! `{σ⁰}`, `{σ¹}` and the indeterminate set `{σ⁰, σ¹}`, and the agents are
//! folded together with Dempster's rule. The fused argmax becomes the label.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Preference;

/// Offset added when a score pair has to be shifted into the positive range.
pub const SHIFT_EPSILON: f64 = 1e-6;
/// Below this, a normalizer or `1 - K` counts as zero.
pub const ZERO_GUARD: f64 = 1e-12;
/// Masses closer than this are treated as tied when picking the decision.
pub const TIE_TOLERANCE: f64 = 1e-12;
/// Allowed slack on `m_s0 + m_s1 + m_both = 1`.
pub const CLOSURE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub rho0: f64,
    pub rho1: f64,
}

impl ScorePair {
    pub fn new(rho0: f64, rho1: f64) -> Self {
        Self { rho0, rho1 }
    }

    pub fn swapped(self) -> Self {
        Self::new(self.rho1, self.rho0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassAssignment {
    pub m_s0: f64,
    pub m_s1: f64,
    pub m_both: f64,
}

impl MassAssignment {
    /// All belief on the indeterminate set; the identity of [`combine`].
    pub const VACUOUS: Self = Self {
        m_s0: 0.0,
        m_s1: 0.0,
        m_both: 1.0,
    };

    pub fn new(m_s0: f64, m_s1: f64, m_both: f64) -> Result<Self, FusionError> {
        let m = Self { m_s0, m_s1, m_both };
        m.check()?;
        Ok(m)
    }

    pub fn total(&self) -> f64 {
        self.m_s0 + self.m_s1 + self.m_both
    }

    fn check(&self) -> Result<(), FusionError> {
        let parts = [self.m_s0, self.m_s1, self.m_both];
        if parts.iter().any(|m| !(0.0..=1.0).contains(m))
            || (self.total() - 1.0).abs() > CLOSURE_TOLERANCE
        {
            return Err(FusionError::InvalidMass(*self));
        }
        Ok(())
    }

    pub fn swapped(self) -> Self {
        Self {
            m_s0: self.m_s1,
            m_s1: self.m_s0,
            m_both: self.m_both,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Prefer0,
    Prefer1,
    Indeterminate,
}

impl Decision {
    pub fn label(self) -> Preference {
        match self {
            Decision::Prefer0 => Preference::First,
            Decision::Prefer1 => Preference::Second,
            Decision::Indeterminate => Preference::Equal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionResult {
    pub fused: MassAssignment,
    /// Conflict of the last combination step that produced `fused`.
    pub conflict_total: f64,
    pub decision: Decision,
    pub label: Preference,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("no score pairs to fuse")]
    Empty,
    #[error("total conflict between belief assignments (1 - K = {0:e})")]
    TotalConflict(f64),
    #[error("normalized scores ({0}, {1}) must be non-negative and sum to 1")]
    NotNormalized(f64, f64),
    #[error("phi must lie in [0, 1], got {0}")]
    InvalidPhi(f64),
    #[error("invalid mass assignment {0:?}")]
    InvalidMass(MassAssignment),
    #[error("score pair ({0}, {1}) is not finite")]
    NonFinite(f64, f64),
}

/// Maps a raw score pair onto `(ρ̂⁰, ρ̂¹)` with `ρ̂⁰ + ρ̂¹ = 1`.
///
/// Pairs with a non-positive member are first shifted by `-min(ρ⁰, ρ¹, 0) + ε`.
pub fn normalize_scores(pair: ScorePair) -> (f64, f64) {
    let (mut a, mut b) = (pair.rho0, pair.rho1);
    if a.min(b) <= 0.0 {
        let shift = -a.min(b).min(0.0) + SHIFT_EPSILON;
        a += shift;
        b += shift;
    }
    let mut sum = a + b;
    if !sum.is_finite() {
        // Keep the ratio while avoiding overflow.
        let scale = a.max(b);
        a /= scale;
        b /= scale;
        sum = a + b;
    }
    if !(sum >= ZERO_GUARD) {
        return (0.5, 0.5);
    }
    (a / sum, b / sum)
}

/// One agent's belief masses for normalized scores and indecision bound `phi`.
pub fn assign_mass(rho_hat0: f64, rho_hat1: f64, phi: f64) -> Result<MassAssignment, FusionError> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(FusionError::InvalidPhi(phi));
    }
    if !(rho_hat0 >= 0.0 && rho_hat1 >= 0.0) || (rho_hat0 + rho_hat1 - 1.0).abs() > CLOSURE_TOLERANCE {
        return Err(FusionError::NotNormalized(rho_hat0, rho_hat1));
    }
    let m_both = phi * (1.0 - (rho_hat0 - rho_hat1).abs());
    Ok(MassAssignment {
        m_s0: rho_hat0 * (1.0 - m_both),
        m_s1: rho_hat1 * (1.0 - m_both),
        m_both,
    })
}

/// Dempster's rule on the three focal sets. Returns the fused masses and `K`.
pub fn combine(a: &MassAssignment, b: &MassAssignment) -> Result<(MassAssignment, f64), FusionError> {
    let conflict = a.m_s0 * b.m_s1 + a.m_s1 * b.m_s0;
    let norm = 1.0 - conflict;
    if norm < ZERO_GUARD {
        return Err(FusionError::TotalConflict(norm));
    }
    let s0 = a.m_s0 * b.m_s0 + a.m_s0 * b.m_both + a.m_both * b.m_s0;
    let s1 = a.m_s1 * b.m_s1 + a.m_s1 * b.m_both + a.m_both * b.m_s1;
    let both = a.m_both * b.m_both;
    Ok((
        MassAssignment {
            m_s0: s0 / norm,
            m_s1: s1 / norm,
            m_both: both / norm,
        },
        conflict,
    ))
}

/// Argmax over the fused masses. Any tie at the top is indeterminate.
pub fn decide(m: &MassAssignment) -> Decision {
    let top = m.m_s0.max(m.m_s1).max(m.m_both);
    let at_top = |x: f64| top - x <= TIE_TOLERANCE;
    match (at_top(m.m_s0), at_top(m.m_s1), at_top(m.m_both)) {
        (true, false, false) => Decision::Prefer0,
        (false, true, false) => Decision::Prefer1,
        _ => Decision::Indeterminate,
    }
}

/// Masses for one agent's raw scores.
pub fn agent_mass(pair: ScorePair, phi: f64) -> Result<MassAssignment, FusionError> {
    if !pair.rho0.is_finite() || !pair.rho1.is_finite() {
        return Err(FusionError::NonFinite(pair.rho0, pair.rho1));
    }
    let (r0, r1) = normalize_scores(pair);
    assign_mass(r0, r1, phi)
}

/// Fuses a crowd of score pairs, folding in agent order.
///
/// Total conflict is not an error here: it yields an indeterminate decision
/// with vacuous masses and `K = 1`.
pub fn fuse_crowd(scores: &[ScorePair], phi: f64) -> Result<FusionResult, FusionError> {
    let (first, rest) = scores.split_first().ok_or(FusionError::Empty)?;
    let mut fused = agent_mass(*first, phi)?;
    let mut conflict = 0.0;
    for pair in rest {
        let m = agent_mass(*pair, phi)?;
        match combine(&fused, &m) {
            Ok((next, k)) => {
                fused = next;
                conflict = k;
            }
            Err(FusionError::TotalConflict(_)) => {
                return Ok(FusionResult {
                    fused: MassAssignment::VACUOUS,
                    conflict_total: 1.0,
                    decision: Decision::Indeterminate,
                    label: Preference::Equal,
                });
            }
            Err(e) => return Err(e),
        }
    }
    let decision = decide(&fused);
    Ok(FusionResult {
        fused,
        conflict_total: conflict,
        decision,
        label: decision.label(),
    })
}

/// One agent's vote by direct score comparison.
pub fn vote(pair: ScorePair) -> Preference {
    if pair.rho0 > pair.rho1 {
        Preference::First
    } else if pair.rho1 > pair.rho0 {
        Preference::Second
    } else {
        Preference::Equal
    }
}

/// Plurality vote over agents; a tied plurality is 0.5.
pub fn majority_vote(scores: &[ScorePair]) -> Result<Preference, FusionError> {
    if scores.is_empty() {
        return Err(FusionError::Empty);
    }
    let mut counts = [0usize; 3];
    for p in scores {
        counts[match vote(*p) {
            Preference::First => 0,
            Preference::Equal => 1,
            Preference::Second => 2,
        }] += 1;
    }
    let top = *counts.iter().max().unwrap_or(&0);
    let winners: Vec<usize> = (0..3).filter(|&i| counts[i] == top).collect();
    Ok(match winners.as_slice() {
        [0] => Preference::First,
        [2] => Preference::Second,
        _ => Preference::Equal,
    })
}
