//! Maps recommendation priority and the current state to a state change.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuzzy::FuzzyRuleBase;
use crate::mentality::{apply_delta, MentalityState, StateDelta, DELTA_LIMIT, STATE_LIMIT};

/// The shipped default rule base (v1), also found on disk at
/// `crates/core/rulebases/default_v1.json`.
pub const DEFAULT_RULEBASE_JSON: &str = include_str!("../rulebases/default_v1.json");

pub const PRIORITY_INPUT: &str = "priority";
pub const AROUSAL_INPUT: &str = "arousal";
pub const PLEASURE_OUTPUT: &str = "d_pl";
pub const AROUSAL_OUTPUT: &str = "d_ar";

pub const MIN_PRIORITY: u8 = 1;
pub const MAX_PRIORITY: u8 = 6;
/// Grades 3 and 4 both fall on the plateau of the default `MID` label and
/// leave a neutral state unchanged; 3 is the canonical neutral grade.
pub const NEUTRAL_PRIORITY: u8 = 3;

/// A recommendation coming from the information-recommendation module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationEvent {
    /// 1 = not recommended, 6 = strongly recommended.
    pub priority: u8,
    pub item_id: String,
    #[serde(default)]
    pub timestamp: u64,
}

impl RecommendationEvent {
    pub fn new(priority: u8, item_id: impl Into<String>, timestamp: u64) -> Result<Self> {
        let ev = Self {
            priority,
            item_id: item_id.into(),
            timestamp,
        };
        ev.validate()?;
        Ok(ev)
    }

    pub fn validate(&self) -> Result<()> {
        if (MIN_PRIORITY..=MAX_PRIORITY).contains(&self.priority) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "priority",
                value: self.priority as f64,
                lo: MIN_PRIORITY as f64,
                hi: MAX_PRIORITY as f64,
            })
        }
    }
}

/// A speech-understanding category (for example an approval). Accepted by
/// the system but no default rules act on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechCategoryEvent {
    pub category: String,
    #[serde(default)]
    pub timestamp: u64,
}

/// Affine map of grade `g ∈ 1..=6` onto `[0, 1]`.
pub fn normalize_priority(grade: u8) -> f64 {
    (grade.saturating_sub(1)) as f64 / (MAX_PRIORITY - MIN_PRIORITY) as f64
}

/// A validated rule base bound to the intent signature.
#[derive(Debug, Clone)]
pub struct IntentConfig {
    rulebase: Arc<FuzzyRuleBase>,
    resolution: usize,
    priority_slot: usize,
    arousal_slot: usize,
    pleasure_out: usize,
    arousal_out: usize,
}

fn check_universe(rb: &FuzzyRuleBase, input: bool, name: &str, want: (f64, f64)) -> Result<usize> {
    let (kind, names) = if input {
        ("input", rb.input_names().collect::<Vec<_>>())
    } else {
        ("output", rb.output_names().collect::<Vec<_>>())
    };
    let slot = names
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| Error::config(format!("intent rule base lacks {kind} `{name}`")))?;
    let part = if input {
        rb.input(name)
    } else {
        rb.output(name)
    }
    .expect("name just found");
    if part.universe() != want {
        return Err(Error::config(format!(
            "{kind} `{name}` must span [{}, {}], found {:?}",
            want.0,
            want.1,
            part.universe()
        )));
    }
    Ok(slot)
}

impl IntentConfig {
    pub fn new(rulebase: FuzzyRuleBase) -> Result<Self> {
        let priority_slot = check_universe(&rulebase, true, PRIORITY_INPUT, (0.0, 1.0))?;
        let arousal_slot =
            check_universe(&rulebase, true, AROUSAL_INPUT, (-STATE_LIMIT, STATE_LIMIT))?;
        if rulebase.input_names().count() != 2 {
            return Err(Error::config(format!(
                "intent rule base takes exactly the inputs `{PRIORITY_INPUT}` and `{AROUSAL_INPUT}`"
            )));
        }
        let pleasure_out = check_universe(
            &rulebase,
            false,
            PLEASURE_OUTPUT,
            (-DELTA_LIMIT, DELTA_LIMIT),
        )?;
        let arousal_out = check_universe(
            &rulebase,
            false,
            AROUSAL_OUTPUT,
            (-DELTA_LIMIT, DELTA_LIMIT),
        )?;
        Ok(Self {
            resolution: rulebase.sample_count(),
            rulebase: Arc::new(rulebase),
            priority_slot,
            arousal_slot,
            pleasure_out,
            arousal_out,
        })
    }

    /// The shipped default rule base v1.
    pub fn default_v1() -> Self {
        let rb =
            FuzzyRuleBase::from_json(DEFAULT_RULEBASE_JSON).expect("default rule base is valid");
        Self::new(rb).expect("default rule base matches the intent signature")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(FuzzyRuleBase::from_path(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(FuzzyRuleBase::from_json(text)?)
    }

    pub fn rulebase(&self) -> &FuzzyRuleBase {
        &self.rulebase
    }

    /// Number of points the center-of-area step reads.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.resolution = resolution;
        self
    }

    /// Speech categories carry no default rules, so they never move the state.
    pub fn speech_delta(
        &self,
        _s: &MentalityState,
        _ev: &SpeechCategoryEvent,
    ) -> Option<StateDelta> {
        None
    }
}

impl Default for IntentConfig {
    fn default() -> Self {
        Self::default_v1()
    }
}

/// Fuzzifies (normalized priority, current arousal), infers, and
/// defuzzifies both outputs.
pub fn compute_delta(
    s: &MentalityState,
    r: &RecommendationEvent,
    cfg: &IntentConfig,
) -> Result<StateDelta> {
    r.validate()?;
    let mut inputs = [0.0; 2];
    inputs[cfg.priority_slot] = normalize_priority(r.priority);
    inputs[cfg.arousal_slot] = s.arousal();
    let out = cfg.rulebase.evaluate(&inputs, cfg.resolution)?;
    debug_assert_eq!(out.len(), 2);
    StateDelta::new(
        out[cfg.pleasure_out].clamp(-DELTA_LIMIT, DELTA_LIMIT),
        out[cfg.arousal_out].clamp(-DELTA_LIMIT, DELTA_LIMIT),
    )
}

/// One event's worth of state evolution.
pub fn step(
    s: &MentalityState,
    r: &RecommendationEvent,
    cfg: &IntentConfig,
) -> Result<MentalityState> {
    Ok(apply_delta(*s, compute_delta(s, r, cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(p: u8) -> RecommendationEvent {
        RecommendationEvent::new(p, "book-1", 0).unwrap()
    }

    fn st(pl: f64, ar: f64) -> MentalityState {
        MentalityState::new(pl, ar).unwrap()
    }

    #[test]
    fn priority_normalization() {
        assert_eq!(normalize_priority(1), 0.0);
        assert_eq!(normalize_priority(6), 1.0);
        assert!((normalize_priority(3) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn event_validation() {
        assert!(RecommendationEvent::new(0, "x", 0).is_err());
        assert!(RecommendationEvent::new(7, "x", 0).is_err());
        let bad = RecommendationEvent {
            priority: 9,
            item_id: "x".into(),
            timestamp: 0,
        };
        assert!(compute_delta(&st(0.0, 0.0), &bad, &IntentConfig::default_v1()).is_err());
    }

    #[test]
    fn neutral_fixed_point() {
        let cfg = IntentConfig::default_v1();
        for p in [3, 4] {
            let d = compute_delta(&st(0.0, 0.0), &ev(p), &cfg).unwrap();
            assert!(
                d.pleasure().abs() < 1e-6 && d.arousal().abs() < 1e-6,
                "{p}: {d:?}"
            );
            let next = step(&st(0.0, 0.0), &ev(p), &cfg).unwrap();
            assert!(next.arousal().abs() < 1e-6 && next.pleasure().abs() < 1e-6);
        }
    }

    #[test]
    fn strong_recommendation_raises_arousal() {
        let cfg = IntentConfig::default_v1();
        let d = compute_delta(&st(0.0, 0.0), &ev(6), &cfg).unwrap();
        assert!(d.arousal() > 0.0);
        assert!(d.pleasure() >= 0.0);
    }

    #[test]
    fn pinned_corner_stays_pinned() {
        let cfg = IntentConfig::default_v1();
        let s = st(200.0, 200.0);
        let d = compute_delta(&s, &ev(6), &cfg).unwrap();
        let next = step(&s, &ev(6), &cfg).unwrap();
        if d.pleasure() >= 0.0 {
            assert_eq!(next.pleasure(), 200.0);
        }
        if d.arousal() >= 0.0 {
            assert_eq!(next.arousal(), 200.0);
        }
    }

    #[test]
    fn rejects_rulebase_with_wrong_signature() {
        let renamed = DEFAULT_RULEBASE_JSON.replace("\"arousal\"", "\"liveliness\"");
        assert!(matches!(
            IntentConfig::from_json(&renamed),
            Err(Error::Config(_))
        ));
        let narrow =
            DEFAULT_RULEBASE_JSON.replace("\"universe\": [-200, 200]", "\"universe\": [-200, 201]");
        assert!(matches!(
            IntentConfig::from_json(&narrow),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn speech_events_have_no_default_effect() {
        let cfg = IntentConfig::default_v1();
        let sp = SpeechCategoryEvent {
            category: "approval".into(),
            timestamp: 0,
        };
        assert_eq!(cfg.speech_delta(&st(0.0, 0.0), &sp), None);
    }
}
