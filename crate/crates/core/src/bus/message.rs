use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::intent::{RecommendationEvent, SpeechCategoryEvent};
use crate::kinematics::ExpressionMovement;
use crate::mentality::{MentalityState, StateDelta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageType {
    #[serde(rename = "REGISTER")]
    Register,
    #[serde(rename = "EVENT.RECOMMENDATION")]
    Recommendation,
    #[serde(rename = "EVENT.SPEECH_CATEGORY")]
    SpeechCategory,
    #[serde(rename = "STATE.UPDATE")]
    StateUpdate,
    #[serde(rename = "POSE.COMMAND")]
    PoseCommand,
    #[serde(rename = "RATING.SUBMIT")]
    RatingSubmit,
    #[serde(rename = "ERROR")]
    Error,
}

impl MessageType {
    pub const ALL: [MessageType; 7] = [
        Self::Register,
        Self::Recommendation,
        Self::SpeechCategory,
        Self::StateUpdate,
        Self::PoseCommand,
        Self::RatingSubmit,
        Self::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Register => "REGISTER",
            Self::Recommendation => "EVENT.RECOMMENDATION",
            Self::SpeechCategory => "EVENT.SPEECH_CATEGORY",
            Self::StateUpdate => "STATE.UPDATE",
            Self::PoseCommand => "POSE.COMMAND",
            Self::RatingSubmit => "RATING.SUBMIT",
            Self::Error => "ERROR",
        }
    }

    fn required_fields(self) -> &'static [&'static str] {
        match self {
            Self::Register => &[],
            Self::Recommendation => &["priority", "item_id"],
            Self::SpeechCategory => &["category"],
            Self::StateUpdate => &["robot", "state", "delta"],
            Self::PoseCommand => &["duration_ms", "keyframes"],
            Self::RatingSubmit => &["trial_index", "grade"],
            Self::Error => &["reason"],
        }
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MessageType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown message type `{s}`"))
    }
}

/// One line of the wire protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusMessage {
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub source: String,
    pub seq: u64,
    pub timestamp_ms: u64,
    #[serde(default)]
    pub payload: Value,
}

impl BusMessage {
    /// Payload decoded into its typed form.
    pub fn decode<T: DeserializeOwned>(&self) -> Result<T, String> {
        serde_json::from_value(self.payload.clone()).map_err(|e| format!("invalid payload: {e}"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegisterPayload {
    /// Message types to forward to a remote client.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subscribe: Vec<MessageType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdatePayload {
    pub robot: u8,
    pub state: MentalityState,
    pub delta: StateDelta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseCommandPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot: Option<u8>,
    /// Set when the movement is an evaluation-session stimulus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_index: Option<usize>,
    #[serde(flatten)]
    pub movement: ExpressionMovement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingPayload {
    pub trial_index: usize,
    pub grade: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub reason: String,
    /// Source and seq of the message being answered, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
}

fn typed<T: DeserializeOwned>(payload: &Value) -> Result<T, String> {
    serde_json::from_value(payload.clone()).map_err(|e| format!("invalid payload: {e}"))
}

/// Checks a payload against its message type. The error string is the
/// reason carried by the ERROR reply.
pub fn validate_payload(kind: MessageType, payload: &Value) -> Result<(), String> {
    let empty = serde_json::Map::new();
    let obj = match payload {
        Value::Object(o) => o,
        Value::Null if kind == MessageType::Register => &empty,
        _ => return Err("invalid payload: expected a JSON object".into()),
    };
    if let Some(missing) = kind
        .required_fields()
        .iter()
        .find(|f| !obj.contains_key(**f))
    {
        return Err(format!("missing field: {missing}"));
    }
    match kind {
        MessageType::Register => typed::<RegisterPayload>(&Value::Object(obj.clone())).map(drop),
        MessageType::Recommendation => typed::<RecommendationEvent>(payload)?
            .validate()
            .map_err(|e| format!("invalid payload: {e}")),
        MessageType::SpeechCategory => typed::<SpeechCategoryEvent>(payload).map(drop),
        MessageType::StateUpdate => {
            let p: StateUpdatePayload = typed(payload)?;
            if p.robot == 0 {
                return Err("invalid payload: robot ids start at 1".into());
            }
            Ok(())
        }
        MessageType::PoseCommand => typed::<PoseCommandPayload>(payload).map(drop),
        MessageType::RatingSubmit => {
            let p: RatingPayload = typed(payload)?;
            if !(1..=6).contains(&p.grade) {
                return Err(format!("invalid payload: grade {} is outside 1-6", p.grade));
            }
            Ok(())
        }
        MessageType::Error => typed::<ErrorPayload>(payload).map(drop),
    }
}
