//! Deterministic template generator standing in for a language-model rule
//! extractor.
//!
//! A frame is reduced to a [`TemplateKey`] (navigation command, ego speed
//! band, and the band of the nearest in-path object); each key maps to a
//! fixed row of 3 to 4 suggestions.

use crate::predicate::{
    Action, Attribute, Category, NavCommand, RelativePos, RuleType, SceneFacts, SpeedSymbol,
    Suggestion, Symbol,
};

use super::{GeneratorError, GeneratorOutput, RuleGenerator};

pub const IMMINENT_TTC_S: f64 = 2.0;
pub const NEAR_TTC_S: f64 = 5.0;
pub const CLOSE_DISTANCE_M: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpeedBand {
    Stopped,
    Slow,
    Cruise,
    Fast,
}

impl SpeedBand {
    pub const ALL: [SpeedBand; 4] = [SpeedBand::Stopped, SpeedBand::Slow, SpeedBand::Cruise, SpeedBand::Fast];

    pub fn of(speed: f64) -> Self {
        if speed < 0.5 {
            SpeedBand::Stopped
        } else if speed < 5.0 {
            SpeedBand::Slow
        } else if speed < 10.0 {
            SpeedBand::Cruise
        } else {
            SpeedBand::Fast
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TtcBand {
    Imminent,
    Near,
    Clear,
}

impl TtcBand {
    pub const ALL: [TtcBand; 3] = [TtcBand::Imminent, TtcBand::Near, TtcBand::Clear];

    pub fn of(ttc: f64) -> Self {
        if ttc < IMMINENT_TTC_S {
            TtcBand::Imminent
        } else if ttc < NEAR_TTC_S {
            TtcBand::Near
        } else {
            TtcBand::Clear
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Threat {
    pub category: Category,
    pub attribute: Attribute,
    pub ttc: TtcBand,
    pub close: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TemplateKey {
    pub nav: NavCommand,
    pub speed: SpeedBand,
    pub threat: Option<Threat>,
}

/// How urgent the nearest threat is, after folding distance into ttc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Level {
    Clear,
    Near,
    Imminent,
}

impl TemplateKey {
    /// Key for a frame. The threat is the nearest object that is either
    /// directly in front or on a closing course; ties go to the lower id.
    pub fn of(facts: &SceneFacts) -> Self {
        let threat = facts
            .objects
            .iter()
            .filter(|o| o.relative_pos == RelativePos::Front || o.ttc.is_finite())
            .min_by(|a, b| a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id)))
            .map(|o| Threat {
                category: o.category,
                attribute: o.attribute,
                ttc: TtcBand::of(o.ttc),
                close: o.distance < CLOSE_DISTANCE_M,
            });
        TemplateKey {
            nav: facts.ego.nav,
            speed: SpeedBand::of(facts.ego.speed),
            threat,
        }
    }

    /// Every key the table must cover.
    pub fn all() -> Vec<TemplateKey> {
        let mut threats: Vec<Option<Threat>> = vec![None];
        for &category in Category::ALL {
            for &attribute in Attribute::ALL {
                for ttc in TtcBand::ALL {
                    for close in [false, true] {
                        threats.push(Some(Threat { category, attribute, ttc, close }));
                    }
                }
            }
        }
        let mut out = Vec::new();
        for &nav in NavCommand::ALL {
            for speed in SpeedBand::ALL {
                for threat in &threats {
                    out.push(TemplateKey { nav, speed, threat: *threat });
                }
            }
        }
        out
    }

    fn level(&self) -> Level {
        let Some(t) = self.threat else {
            return Level::Clear;
        };
        let by_ttc = match t.ttc {
            TtcBand::Imminent => Level::Imminent,
            TtcBand::Near => Level::Near,
            TtcBand::Clear => Level::Clear,
        };
        let by_distance = match (t.close, t.category.is_vulnerable()) {
            (false, _) => Level::Clear,
            (true, true) => Level::Imminent,
            (true, false) => Level::Near,
        };
        by_ttc.max(by_distance)
    }
}

type Row = Vec<(Action, SpeedSymbol, RuleType)>;

fn turn_for(nav: NavCommand) -> Option<Action> {
    match nav {
        NavCommand::Left => Some(Action::TurnLeft),
        NavCommand::Right => Some(Action::TurnRight),
        NavCommand::Straight => None,
    }
}

/// The template table: row name plus suggestions for a key.
pub fn template_row(key: &TemplateKey) -> (&'static str, Row) {
    use Action::*;
    use RuleType::*;
    use SpeedSymbol::*;

    let blocking = |t: &Threat| {
        !t.category.is_vulnerable()
            && (t.category == Category::Barrier || t.attribute == Attribute::Stationary)
    };

    match (key.level(), key.threat) {
        (Level::Imminent, Some(t)) if t.category.is_vulnerable() => (
            "vru_imminent",
            vec![(Yield, Zero, Safety), (Yield, Creep, Comfort), (KeepLane, Slow, Efficiency)],
        ),
        (Level::Imminent, Some(t)) if blocking(&t) => (
            "obstacle_imminent",
            vec![(Yield, Zero, Safety), (ChangeLaneLeft, Slow, Comfort), (KeepLane, Current, Efficiency)],
        ),
        (Level::Imminent, _) => (
            "vehicle_imminent",
            vec![(Yield, Slow, Safety), (KeepLane, Slow, Comfort), (KeepLane, Current, Efficiency)],
        ),
        (Level::Near, Some(t)) => {
            let (name, mut row): (&str, Row) = if t.category.is_vulnerable() {
                (
                    "vru_near",
                    vec![(Yield, Slow, Safety), (KeepLane, Slow, Comfort), (KeepLane, Current, Efficiency)],
                )
            } else if blocking(&t) {
                (
                    "obstacle_near",
                    vec![(ChangeLaneLeft, Normal, Comfort), (KeepLane, Slow, Efficiency), (KeepLane, Current, Efficiency)],
                )
            } else {
                (
                    "vehicle_near",
                    vec![(KeepLane, Slow, Comfort), (KeepLane, Current, Efficiency), (ChangeLaneLeft, Normal, Efficiency)],
                )
            };
            if let Some(turn) = turn_for(key.nav) {
                row.push((turn, Slow, Legal));
            }
            (name, row)
        }
        // Clear road (or a threat that is neither close nor closing).
        _ => match turn_for(key.nav) {
            Some(turn) => (
                "route_turn",
                vec![(turn, Slow, Legal), (turn, Creep, Comfort), (KeepLane, Current, Efficiency)],
            ),
            None => {
                let mut row = vec![(KeepLane, Normal, Efficiency), (KeepLane, Current, Efficiency), (KeepLane, Fast, Efficiency)];
                if key.speed == SpeedBand::Fast {
                    row.push((KeepLane, Normal, Comfort));
                }
                ("cruise", row)
            }
        },
    }
}

/// Template-table generator (id `template`).
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateGenerator;

impl TemplateGenerator {
    pub fn suggestions(facts: &SceneFacts) -> Vec<Suggestion> {
        let (name, row) = template_row(&TemplateKey::of(facts));
        let provenance = format!("template:{name}");
        row.into_iter()
            .map(|(a, s, t)| Suggestion::new(a, s, t, provenance.clone()))
            .collect()
    }
}

impl RuleGenerator for TemplateGenerator {
    fn id(&self) -> String {
        "template".to_string()
    }

    fn generate(&self, facts: &SceneFacts) -> Result<GeneratorOutput, GeneratorError> {
        Ok(GeneratorOutput::accepted(Self::suggestions(facts)))
    }
}
