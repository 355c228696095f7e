//! Closed symbolic vocabularies shared by facts, suggestions and decisions.
//!
//! Every symbol maps to exactly one lowercase atom in the predicate text
//! format. Parsing an atom outside a vocabulary is a [`VocabularyError`]
//! rather than a fallback value.
//!
//! [`VocabularyError`]: crate::predicate::ParseError::Vocabulary

use std::fmt;

use serde::{Deserialize, Serialize};

/// A closed set of atoms.
pub trait Symbol: Copy + Eq + Sized + 'static {
    /// Every member, in declaration order.
    const ALL: &'static [Self];
    /// Which argument slot this vocabulary fills (for error reporting).
    const SLOT: Slot;

    fn atom(self) -> &'static str;

    fn from_atom(atom: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|s| s.atom() == atom)
    }

    /// Position in [`Symbol::ALL`].
    fn index(self) -> usize {
        Self::ALL
            .iter()
            .position(|s| *s == self)
            .expect("symbol is a member of its own vocabulary")
    }
}

/// Argument slot names used in vocabulary errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    Action,
    TargetSpeed,
    RuleType,
    Nav,
    Category,
    RelativePos,
    Attribute,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Slot::Action => "Action",
            Slot::TargetSpeed => "TargetSpeed",
            Slot::RuleType => "Type",
            Slot::Nav => "Nav",
            Slot::Category => "category",
            Slot::RelativePos => "relative_pos",
            Slot::Attribute => "attribute",
        };
        f.write_str(name)
    }
}

macro_rules! vocabulary {
    (
        $(#[$meta:meta])*
        $name:ident, $slot:expr, { $($variant:ident => $atom:literal),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl Symbol for $name {
            const ALL: &'static [Self] = &[$($name::$variant),+];
            const SLOT: Slot = $slot;

            fn atom(self) -> &'static str {
                match self {
                    $($name::$variant => $atom),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.atom())
            }
        }
    };
}

vocabulary!(
    /// Discrete driving action (9 states).
    Action, Slot::Action, {
        KeepLane => "keep_lane",
        ChangeLaneLeft => "change_lane_left",
        ChangeLaneRight => "change_lane_right",
        TurnLeft => "turn_left",
        TurnRight => "turn_right",
        NudgeLeft => "nudge_left",
        NudgeRight => "nudge_right",
        Yield => "yield",
        EmergencyStop => "emergency_stop",
    }
);

vocabulary!(
    /// Target speed level (6 levels). `current` resolves to the ego speed.
    SpeedSymbol, Slot::TargetSpeed, {
        Current => "current",
        Zero => "zero",
        Creep => "creep",
        Slow => "slow",
        Normal => "normal",
        Fast => "fast",
    }
);

vocabulary!(
    /// Route-level navigation command (3 modes).
    NavCommand, Slot::Nav, {
        Left => "left",
        Right => "right",
        Straight => "straight",
    }
);

vocabulary!(
    /// Rationale tier of a suggestion. Declaration order is priority order,
    /// highest first.
    RuleType, Slot::RuleType, {
        Emergency => "emergency",
        Safety => "safety",
        Legal => "legal",
        Comfort => "comfort",
        Efficiency => "efficiency",
    }
);

vocabulary!(
    /// Object class.
    Category, Slot::Category, {
        Pedestrian => "pedestrian",
        Vehicle => "vehicle",
        Cyclist => "cyclist",
        Barrier => "barrier",
    }
);

vocabulary!(
    /// Coarse bearing of an object relative to the ego heading.
    RelativePos, Slot::RelativePos, {
        Front => "front",
        FrontLeft => "front_left",
        FrontRight => "front_right",
        Left => "left",
        Right => "right",
        Rear => "rear",
    }
);

vocabulary!(
    /// Motion attribute of an object.
    Attribute, Slot::Attribute, {
        Moving => "moving",
        Stationary => "stationary",
        Crossing => "crossing",
    }
);

impl RuleType {
    /// Tiers from highest to lowest priority.
    pub const PRIORITY: [RuleType; 5] = [
        RuleType::Emergency,
        RuleType::Safety,
        RuleType::Legal,
        RuleType::Comfort,
        RuleType::Efficiency,
    ];

    /// 0 for the highest tier, 4 for the lowest.
    pub fn rank(self) -> usize {
        self.index()
    }

    pub fn outranks(self, other: RuleType) -> bool {
        self.rank() < other.rank()
    }
}

impl Action {
    /// Severity class used for within-tier tie-breaks; larger is more
    /// conservative.
    pub fn severity(self) -> u8 {
        match self {
            Action::EmergencyStop => 5,
            Action::Yield => 4,
            Action::NudgeLeft | Action::NudgeRight => 3,
            Action::ChangeLaneLeft | Action::ChangeLaneRight => 2,
            Action::TurnLeft | Action::TurnRight => 1,
            Action::KeepLane => 0,
        }
    }
}

impl Category {
    /// Vulnerable road users get stricter templates.
    pub fn is_vulnerable(self) -> bool {
        matches!(self, Category::Pedestrian | Category::Cyclist)
    }
}

/// Numeric meaning of each [`SpeedSymbol`] in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedTargets {
    pub zero: f64,
    pub creep: f64,
    pub slow: f64,
    pub normal: f64,
    pub fast: f64,
}

impl Default for SpeedTargets {
    fn default() -> Self {
        SpeedTargets {
            zero: 0.0,
            creep: 1.5,
            slow: 3.0,
            normal: 8.0,
            fast: 12.0,
        }
    }
}

impl SpeedTargets {
    /// Target speed for `symbol` given the current ego speed.
    pub fn resolve(&self, symbol: SpeedSymbol, current: f64) -> f64 {
        match symbol {
            SpeedSymbol::Current => current,
            SpeedSymbol::Zero => self.zero,
            SpeedSymbol::Creep => self.creep,
            SpeedSymbol::Slow => self.slow,
            SpeedSymbol::Normal => self.normal,
            SpeedSymbol::Fast => self.fast,
        }
    }

    /// The fixed levels must be finite, non-negative and strictly increasing.
    pub fn is_monotone(&self) -> bool {
        let levels = [self.zero, self.creep, self.slow, self.normal, self.fast];
        levels.iter().all(|v| v.is_finite() && *v >= 0.0)
            && levels.windows(2).all(|w| w[0] < w[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn round_trips<S: Symbol + fmt::Debug>() {
        for s in S::ALL {
            assert_eq!(S::from_atom(s.atom()), Some(*s));
        }
        let atoms: HashSet<_> = S::ALL.iter().map(|s| s.atom()).collect();
        assert_eq!(atoms.len(), S::ALL.len(), "atoms must be distinct");
    }

    #[test]
    fn vocabulary_sizes() {
        assert_eq!(Action::ALL.len(), 9);
        assert_eq!(SpeedSymbol::ALL.len(), 6);
        assert_eq!(NavCommand::ALL.len(), 3);
        assert_eq!(RuleType::ALL.len(), 5);
    }

    #[test]
    fn atoms_round_trip() {
        round_trips::<Action>();
        round_trips::<SpeedSymbol>();
        round_trips::<NavCommand>();
        round_trips::<RuleType>();
        round_trips::<Category>();
        round_trips::<RelativePos>();
        round_trips::<Attribute>();
    }

    #[test]
    fn unknown_atoms_rejected() {
        assert_eq!(Action::from_atom("swerve"), None);
        assert_eq!(SpeedSymbol::from_atom("Zero"), None);
        assert_eq!(RuleType::from_atom(""), None);
    }

    #[test]
    fn tier_order() {
        for w in RuleType::PRIORITY.windows(2) {
            assert!(w[0].outranks(w[1]));
        }
        assert_eq!(RuleType::Emergency.rank(), 0);
        assert_eq!(RuleType::Efficiency.rank(), 4);
    }

    #[test]
    fn serde_uses_atoms() {
        let json = serde_json::to_string(&Action::ChangeLaneLeft).unwrap();
        assert_eq!(json, "\"change_lane_left\"");
        let back: SpeedSymbol = serde_json::from_str("\"creep\"").unwrap();
        assert_eq!(back, SpeedSymbol::Creep);
    }

    #[test]
    fn speed_targets_default_monotone() {
        let t = SpeedTargets::default();
        assert!(t.is_monotone());
        assert_eq!(t.resolve(SpeedSymbol::Current, 6.9), 6.9);
        assert_eq!(t.resolve(SpeedSymbol::Zero, 6.9), 0.0);
    }
}
