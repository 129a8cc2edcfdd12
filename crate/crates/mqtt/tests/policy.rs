use hearthwire_mqtt::policy::{pattern_matches, ActionPattern};
use hearthwire_mqtt::{Action, Decision, Effect, PolicyDocument, Statement};
use proptest::prelude::*;

const PREFIX: &str = "ELL893/muneeb_majid/smarthome/mqtt";
const RESOURCES: [&str; 8] = ["a", "a/b", "a/c", "b", "b/a", "", "ab", "a/b/c"];

fn pattern() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("*".to_string()),
        prop::sample::select(RESOURCES.to_vec()).prop_map(str::to_owned),
        prop::sample::select(RESOURCES.to_vec()).prop_map(|r| format!("{r}*")),
    ]
}

fn action() -> impl Strategy<Value = ActionPattern> {
    prop::sample::select(vec![
        ActionPattern::Connect,
        ActionPattern::Publish,
        ActionPattern::Subscribe,
        ActionPattern::Any,
    ])
}

fn statement(effect: Option<Effect>) -> impl Strategy<Value = Statement> {
    let effect = match effect {
        Some(e) => Just(e).boxed(),
        None => prop::sample::select(vec![Effect::Allow, Effect::Deny]).boxed(),
    };
    (effect, prop::collection::vec(action(), 1..3), prop::collection::vec(pattern(), 1..3))
        .prop_map(|(effect, actions, topics)| Statement { effect, actions, topics })
}

fn policy() -> impl Strategy<Value = PolicyDocument> {
    prop::collection::vec(statement(None), 0..6).prop_map(|statements| PolicyDocument { statements })
}

const ACTIONS: [Action; 3] = [Action::Connect, Action::Publish, Action::Subscribe];

/// Straight from the rules: allowed iff some statement allows and none denies.
fn oracle(p: &PolicyDocument, action: Action, resource: &str) -> Decision {
    let hits = |effect| {
        p.statements.iter().any(|s| {
            s.effect == effect
                && s.actions.iter().any(|a| a.covers(action))
                && s.topics.iter().any(|t| pattern_matches(t, resource))
        })
    };
    if hits(Effect::Allow) && !hits(Effect::Deny) {
        Decision::Allow
    } else {
        Decision::Deny
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn agrees_with_oracle(p in policy()) {
        for a in ACTIONS {
            for r in RESOURCES {
                prop_assert_eq!(p.authorize(a, r), oracle(&p, a, r));
            }
        }
    }

    #[test]
    fn adding_allow_never_revokes(p in policy(), extra in statement(Some(Effect::Allow)), at in 0usize..7) {
        let mut bigger = p.clone();
        bigger.statements.insert(at.min(p.statements.len()), extra);
        for a in ACTIONS {
            for r in RESOURCES {
                if p.authorize(a, r) == Decision::Allow {
                    prop_assert_eq!(bigger.authorize(a, r), Decision::Allow);
                }
            }
        }
    }

    #[test]
    fn adding_deny_never_grants(p in policy(), extra in statement(Some(Effect::Deny)), at in 0usize..7) {
        let mut bigger = p.clone();
        bigger.statements.insert(at.min(p.statements.len()), extra.clone());
        for a in ACTIONS {
            for r in RESOURCES {
                if p.authorize(a, r) == Decision::Deny {
                    prop_assert_eq!(bigger.authorize(a, r), Decision::Deny);
                }
                // and anything the new statement covers is now denied
                if extra.actions.iter().any(|x| x.covers(a)) && extra.topics.iter().any(|t| pattern_matches(t, r)) {
                    prop_assert_eq!(bigger.authorize(a, r), Decision::Deny);
                }
            }
        }
    }

    #[test]
    fn statement_order_is_irrelevant(p in policy(), seed in any::<u64>()) {
        let mut shuffled = p.clone();
        let n = shuffled.statements.len();
        if n > 1 {
            shuffled.statements.rotate_left((seed as usize) % n);
        }
        for a in ACTIONS {
            for r in RESOURCES {
                prop_assert_eq!(p.authorize(a, r), shuffled.authorize(a, r));
            }
        }
    }
}

#[test]
fn restricted_policy_examples() {
    let p = PolicyDocument::restricted(PREFIX);
    for a in [Action::Publish, Action::Subscribe] {
        assert_eq!(p.authorize(a, &format!("{PREFIX}/smart_bulb1")), Decision::Allow);
        assert_eq!(p.authorize(a, "other/topic"), Decision::Deny);
    }
    let empty = PolicyDocument::deny_all();
    for a in ACTIONS {
        for r in RESOURCES {
            assert_eq!(empty.authorize(a, r), Decision::Deny);
        }
    }
}
