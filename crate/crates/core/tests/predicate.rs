//! Round-trip, parser totality and vocabulary properties of the fact format.

mod common;

use std::collections::HashSet;

use nsplan_core::predicate::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{fuzz_corpus, fuzz_input, has_position};

fn pick<T: Copy + std::fmt::Debug + 'static>(all: &'static [T]) -> impl Strategy<Value = T> {
    proptest::sample::select(all)
}

fn real(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo..hi).prop_map(quantize)
}

fn heading() -> impl Strategy<Value = f64> {
    // Six significant digits of pi rounded down, so quantizing stays inside (-pi, pi].
    let limit = (std::f64::consts::PI * 1e5).floor() / 1e5;
    real(-limit, limit)
}

fn object(id: u32) -> impl Strategy<Value = ObjectFact> {
    (
        pick(Category::ALL),
        real(0.0, 200.0),
        real(0.0, 40.0),
        heading(),
        pick(RelativePos::ALL),
        pick(Attribute::ALL),
        prop_oneof![real(1e-3, 30.0), Just(f64::INFINITY)],
    )
        .prop_map(move |(category, distance, speed, heading, relative_pos, attribute, ttc)| ObjectFact {
            id,
            category,
            distance,
            speed,
            heading,
            relative_pos,
            attribute,
            ttc,
        })
}

fn scene() -> impl Strategy<Value = SceneFacts> {
    let ego = (real(0.0, 40.0), heading(), pick(NavCommand::ALL), -5i32..5, prop::collection::vec(real(0.0, 40.0), 0..5))
        .prop_map(|(speed, heading, nav, lane_id, history_speeds)| EgoFacts {
            speed,
            heading,
            nav,
            lane_id,
            history_speeds,
        });
    let ids = prop::collection::btree_set(0u32..10_000, 0..6);
    (
        "[ -~]{0,24}",
        ego,
        ids.prop_flat_map(|ids| ids.into_iter().map(object).collect::<Vec<_>>()),
    )
        .prop_map(|(frame_id, ego, objects)| SceneFacts { frame_id, ego, objects })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, ..ProptestConfig::default() })]

    #[test]
    fn serialize_then_parse_is_identity(f in scene()) {
        let text = serialize_facts(&f);
        let back = parse_facts(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(serialize_facts(&back), text);
    }

    #[test]
    fn suggestions_round_trip(items in prop::collection::vec((pick(Action::ALL), pick(SpeedSymbol::ALL), pick(RuleType::ALL)), 0..8)) {
        let text: String = items
            .iter()
            .map(|&(a, s, t)| Suggestion::new(a, s, t, "input").to_predicate() + "\n")
            .collect();
        let parsed = parse_suggestions(&text).unwrap();
        let back: Vec<_> = parsed.iter().map(|s| (s.action, s.speed, s.rule_type)).collect();
        prop_assert_eq!(back, items);
    }
}

#[test]
fn parsers_are_total_on_random_bytes() {
    let corpus = fuzz_corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut ok, mut structured) = (0usize, 0usize);
    for _ in 0..100_000 {
        let input = fuzz_input(&mut rng, &corpus);
        for result in [parse_facts_bytes(&input).map(|_| ()), parse_suggestions_bytes(&input).map(|_| ())] {
            match result {
                Ok(()) => ok += 1,
                Err(e) => {
                    assert!(has_position(&e), "error without position: {e:?} for {:?}", String::from_utf8_lossy(&input));
                    structured += 1;
                }
            }
        }
    }
    assert_eq!(ok + structured, 200_000);
    assert!(ok > 0, "mutation fuzz never produced a valid document");
}

#[test]
fn decision_space_has_162_distinct_triples() {
    let space = decision_space();
    assert_eq!(space.len(), 162);
    assert_eq!(space.iter().collect::<HashSet<_>>().len(), 162);
    assert_eq!((Action::ALL.len(), SpeedSymbol::ALL.len(), NavCommand::ALL.len()), (9, 6, 3));
    // Every triple is expressible in text and nothing outside the vocabulary is.
    for &(a, s, n) in &space {
        assert_eq!(Action::from_atom(&a.to_string()), Some(a));
        assert_eq!(SpeedSymbol::from_atom(&s.to_string()), Some(s));
        assert_eq!(NavCommand::from_atom(&n.to_string()), Some(n));
    }
    for atom in ["stop", "fast_lane", "STRAIGHT", "", "yield "] {
        assert!(Action::from_atom(atom).is_none(), "{atom:?}");
        assert!(SpeedSymbol::from_atom(atom).is_none(), "{atom:?}");
        assert!(NavCommand::from_atom(atom).is_none(), "{atom:?}");
    }
}
