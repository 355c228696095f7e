use serde::{Deserialize, Serialize};

use super::vocab::{Action, Attribute, Category, NavCommand, RelativePos, RuleType, SpeedSymbol};

/// Closing speeds at or below this are treated as non-closing.
pub const CLOSING_SPEED_EPS: f64 = 1e-9;

/// One dynamic obstacle in a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectFact {
    pub id: u32,
    pub category: Category,
    /// Gap to the ego footprint, m.
    pub distance: f64,
    /// m/s.
    pub speed: f64,
    /// Heading relative to the ego heading, rad in (-pi, pi].
    pub heading: f64,
    pub relative_pos: RelativePos,
    pub attribute: Attribute,
    /// Seconds; `f64::INFINITY` when not on a closing course.
    #[serde(with = "ttc_serde")]
    pub ttc: f64,
}

/// Ego vehicle state for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoFacts {
    pub speed: f64,
    pub heading: f64,
    pub nav: NavCommand,
    pub lane_id: i32,
    /// Past speeds, most recent last.
    pub history_speeds: Vec<f64>,
}

impl EgoFacts {
    pub fn new(speed: f64, heading: f64, nav: NavCommand) -> Self {
        EgoFacts {
            speed,
            heading,
            nav,
            lane_id: 0,
            history_speeds: Vec::new(),
        }
    }
}

/// The solver's world model for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFacts {
    pub frame_id: String,
    pub ego: EgoFacts,
    pub objects: Vec<ObjectFact>,
}

impl SceneFacts {
    pub fn new(ego: EgoFacts) -> Self {
        SceneFacts {
            frame_id: String::new(),
            ego,
            objects: Vec::new(),
        }
    }

    /// Smallest time-to-collision over all objects (`INFINITY` if none).
    pub fn min_ttc(&self) -> f64 {
        self.objects
            .iter()
            .map(|o| o.ttc)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn object(&self, id: u32) -> Option<&ObjectFact> {
        self.objects.iter().find(|o| o.id == id)
    }
}

/// A candidate decision emitted by a rule generator or a safety axiom.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Suggestion {
    pub action: Action,
    pub speed: SpeedSymbol,
    pub rule_type: RuleType,
    /// Generator id or axiom name.
    pub provenance: String,
}

impl Suggestion {
    pub fn new(
        action: Action,
        speed: SpeedSymbol,
        rule_type: RuleType,
        provenance: impl Into<String>,
    ) -> Self {
        Suggestion {
            action,
            speed,
            rule_type,
            provenance: provenance.into(),
        }
    }

    /// `suggestion(a, s, t).`
    pub fn to_predicate(&self) -> String {
        format!(
            "suggestion({}, {}, {}).",
            self.action, self.speed, self.rule_type
        )
    }
}

/// The single arbitration result for a frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FinalDecision {
    pub action: Action,
    pub speed: SpeedSymbol,
    pub tier: RuleType,
    pub winning_suggestion: String,
}

impl FinalDecision {
    pub fn from_suggestion(s: &Suggestion) -> Self {
        FinalDecision {
            action: s.action,
            speed: s.speed,
            tier: s.rule_type,
            winning_suggestion: s.provenance.clone(),
        }
    }

    /// `final_decision(a, s).`
    pub fn to_predicate(&self) -> String {
        format!("final_decision({}, {}).", self.action, self.speed)
    }
}

/// Constant-closing-speed time to collision.
///
/// Returns `INFINITY` when the closing speed does not exceed
/// [`CLOSING_SPEED_EPS`].
pub fn compute_ttc(distance: f64, closing_speed: f64) -> f64 {
    if closing_speed > CLOSING_SPEED_EPS {
        distance.max(0.0) / closing_speed
    } else {
        f64::INFINITY
    }
}

/// JSON has no infinity; encode the sentinel as the string "inf".
mod ttc_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(de::Error::custom(format!("bad ttc {t:?}"))),
        }
    }
}
