//! Bounded pleasure–arousal state space.
//!
//! A mentality state is a point `(x_pl, x_ar)` in the square `[-200, 200]²`,
//! with an optional affinity coordinate that is carried along but never
//! evolved. Changes arrive as a [`StateDelta`] bounded to `[-50, 50]²` and
//! are applied with a per-axis saturating clamp.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Limit of every state coordinate, in both directions.
pub const STATE_LIMIT: f64 = 200.0;
/// Limit of every delta component, in both directions.
pub const DELTA_LIMIT: f64 = 50.0;

fn check_coord(name: &'static str, value: f64, limit: f64) -> Result<()> {
    if value.is_finite() && (-limit..=limit).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what: name,
            value,
            lo: -limit,
            hi: limit,
        })
    }
}

/// A position in the affinity pleasure–arousal space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawState")]
pub struct MentalityState {
    x_pl: f64,
    x_ar: f64,
    #[serde(default)]
    x_af: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    x_pl: f64,
    x_ar: f64,
    #[serde(default)]
    x_af: f64,
}

impl TryFrom<RawState> for MentalityState {
    type Error = Error;

    fn try_from(raw: RawState) -> Result<Self> {
        Self::with_affinity(raw.x_pl, raw.x_ar, raw.x_af)
    }
}

impl Default for MentalityState {
    fn default() -> Self {
        Self::NEUTRAL
    }
}

impl MentalityState {
    pub const NEUTRAL: Self = Self {
        x_pl: 0.0,
        x_ar: 0.0,
        x_af: 0.0,
    };

    pub fn new(x_pl: f64, x_ar: f64) -> Result<Self> {
        Self::with_affinity(x_pl, x_ar, 0.0)
    }

    pub fn with_affinity(x_pl: f64, x_ar: f64, x_af: f64) -> Result<Self> {
        check_coord("x_pl", x_pl, STATE_LIMIT)?;
        check_coord("x_ar", x_ar, STATE_LIMIT)?;
        check_coord("x_af", x_af, STATE_LIMIT)?;
        Ok(Self { x_pl, x_ar, x_af })
    }

    /// Pleasure–displeasure coordinate.
    pub fn pleasure(&self) -> f64 {
        self.x_pl
    }

    /// Arousal–sleep coordinate.
    pub fn arousal(&self) -> f64 {
        self.x_ar
    }

    /// Affinity coordinate.
    pub fn affinity(&self) -> f64 {
        self.x_af
    }

    /// Componentwise `self·(1-u) + other·u`. Exact at both ends of `[0, 1]`
    /// and on axes where the two states agree.
    pub fn lerp(&self, other: &Self, u: f64) -> Self {
        let u = u.clamp(0.0, 1.0);
        let mix = |a: f64, b: f64| {
            if a == b {
                a
            } else {
                (a * (1.0 - u) + b * u).clamp(-STATE_LIMIT, STATE_LIMIT)
            }
        };
        Self {
            x_pl: mix(self.x_pl, other.x_pl),
            x_ar: mix(self.x_ar, other.x_ar),
            x_af: mix(self.x_af, other.x_af),
        }
    }
}

/// A bounded change of the pleasure and arousal coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawDelta")]
pub struct StateDelta {
    d_pl: f64,
    d_ar: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDelta {
    d_pl: f64,
    d_ar: f64,
}

impl TryFrom<RawDelta> for StateDelta {
    type Error = Error;

    fn try_from(raw: RawDelta) -> Result<Self> {
        Self::new(raw.d_pl, raw.d_ar)
    }
}

impl StateDelta {
    pub const ZERO: Self = Self {
        d_pl: 0.0,
        d_ar: 0.0,
    };

    pub fn new(d_pl: f64, d_ar: f64) -> Result<Self> {
        check_coord("d_pl", d_pl, DELTA_LIMIT)?;
        check_coord("d_ar", d_ar, DELTA_LIMIT)?;
        Ok(Self { d_pl, d_ar })
    }

    pub fn pleasure(&self) -> f64 {
        self.d_pl
    }

    pub fn arousal(&self) -> f64 {
        self.d_ar
    }
}

/// Adds `d` to `s`, saturating each axis at the state bounds. Affinity is
/// left untouched.
pub fn apply_delta(s: MentalityState, d: StateDelta) -> MentalityState {
    MentalityState {
        x_pl: (s.x_pl + d.d_pl).clamp(-STATE_LIMIT, STATE_LIMIT),
        x_ar: (s.x_ar + d.d_ar).clamp(-STATE_LIMIT, STATE_LIMIT),
        x_af: s.x_af,
    }
}

/// Pleasure levels of the evaluation grid, one per column.
pub const GRID_PLEASURE: [f64; 5] = [-200.0, -100.0, 0.0, 100.0, 200.0];
/// Arousal levels of the evaluation grid, one per row.
pub const GRID_AROUSAL: [f64; 4] = [-150.0, -50.0, 50.0, 150.0];
pub const GRID_LEN: usize = GRID_PLEASURE.len() * GRID_AROUSAL.len();

/// The fixed set of 20 states shown during an evaluation session.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    states: Vec<MentalityState>,
    labels: Vec<String>,
}

impl StateGrid {
    pub fn states(&self) -> &[MentalityState] {
        &self.states
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<(&MentalityState, &str)> {
        Some((self.states.get(index)?, self.labels[index].as_str()))
    }

    /// Grid index of a state with exactly matching pleasure and arousal.
    pub fn index_of(&self, s: &MentalityState) -> Option<usize> {
        self.states
            .iter()
            .position(|g| g.x_pl == s.x_pl && g.x_ar == s.x_ar)
    }
}

fn pleasure_word(x: f64) -> &'static str {
    match x as i32 {
        -200 => "displeased",
        -100 => "mildly-displeased",
        0 => "neutral",
        100 => "mildly-pleased",
        _ => "pleased",
    }
}

fn arousal_word(x: f64) -> &'static str {
    match x as i32 {
        -150 => "sleepy",
        -50 => "calm",
        50 => "alert",
        _ => "aroused",
    }
}

/// The 5×4 evaluation grid in row-major order: arousal is the outer loop,
/// pleasure the inner one, so the first state is `(-200, -150)`.
pub fn grid_states() -> StateGrid {
    let mut states = Vec::with_capacity(GRID_LEN);
    let mut labels = Vec::with_capacity(GRID_LEN);
    for &ar in &GRID_AROUSAL {
        for &pl in &GRID_PLEASURE {
            states.push(MentalityState {
                x_pl: pl,
                x_ar: ar,
                x_af: 0.0,
            });
            labels.push(format!("{}/{}", pleasure_word(pl), arousal_word(ar)));
        }
    }
    StateGrid { states, labels }
}
