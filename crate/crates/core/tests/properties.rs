use std::collections::HashSet;
use std::sync::OnceLock;

use hearthwire_core::device::{decode_payload, encode_payload, response_for, MAX_TEMPERATURE, MIN_TEMPERATURE};
use hearthwire_core::intent::canonical_bytes;
use hearthwire_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn key() -> &'static RsaKeyPair {
    static PAIR: OnceLock<RsaKeyPair> = OnceLock::new();
    PAIR.get_or_init(|| generate_keypair(1024).unwrap())
}

fn id(s: &str) -> DeviceId {
    DeviceId::new(s).unwrap()
}

fn arb_params() -> impl Strategy<Value = Params> {
    prop_oneof![
        (any::<bool>(), any::<[u8; 3]>())
            .prop_map(|(p, c)| Params::bulb(p, &format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2]))),
        any::<bool>().prop_map(Params::fan),
        (any::<bool>(), 0..3usize, MIN_TEMPERATURE..=MAX_TEMPERATURE)
            .prop_map(|(p, d, t)| Params::ac(p, HDirection::ALL[d], t)),
        any::<bool>().prop_map(|l| Params::lock(if l { DoorStatus::Locked } else { DoorStatus::Unlocked })),
    ]
}

/// A command for the default-home device whose kind matches the params.
fn arb_command() -> impl Strategy<Value = DeviceCommand> {
    arb_params().prop_map(|params| {
        let device = match params.kind() {
            DeviceKind::Bulb => "smart_bulb1",
            DeviceKind::Fan => "smart_fan1",
            DeviceKind::Ac => "smart_ac1",
            DeviceKind::Lock => "smart_lock1",
        };
        DeviceCommand::new(id(device), params)
    })
}

proptest! {
    #[test]
    fn payload_round_trip(cmd in arb_command()) {
        prop_assert_eq!(decode_payload(&encode_payload(&cmd)).unwrap(), cmd);
    }

    #[test]
    fn apply_replaces_whole_state_and_is_idempotent(cmd in arb_command()) {
        let reg = HomeRegistry::default_home();
        prop_assert!(validate_command(&reg, &cmd).is_ok());
        let state = reg.device(&cmd.device).unwrap();
        let (once, r1) = apply_command(state, &cmd);
        let (twice, r2) = apply_command(&once, &cmd);
        prop_assert_eq!(&once.params, &cmd.params);
        prop_assert_eq!(once, twice);
        prop_assert_eq!(r1, r2);
    }

    #[test]
    fn responses_match_template(cmd in arb_command()) {
        let re = regex::Regex::new(r"^[A-Z][a-z0-9_]* .+$").unwrap();
        let reg = HomeRegistry::default_home();
        let (next, resp) = apply_command(reg.device(&cmd.device).unwrap(), &cmd);
        prop_assert!(re.is_match(&resp.response), "{}", resp.response);
        if next.params.power().is_some() {
            let suffix = format!(" in {}", next.room);
            prop_assert!(resp.response.ends_with(&suffix));
        }
        prop_assert_eq!(resp, response_for(&next));
    }

    #[test]
    fn canonical_survives_wire_round_trip(cmds in prop::collection::vec(arb_command(), 1..5), at in any::<u64>()) {
        let env = IntentEnvelope::new("client-x", cmds, at).unwrap();
        let packet = SignedIntentPacket { envelope: env.clone(), signature: vec![0; 4] };
        let back = SignedIntentPacket::from_wire(&packet.to_wire()).unwrap();
        prop_assert_eq!(canonical_bytes(&back.envelope), canonical_bytes(&env));
    }
}

#[test]
fn temperature_scan_accepts_exactly_18_to_26() {
    let reg = HomeRegistry::default_home();
    let accepted: Vec<i64> = (0..=50)
        .filter(|&t| {
            let cmd = DeviceCommand::new(id("smart_ac1"), Params::ac(true, HDirection::Center, t));
            validate_command(&reg, &cmd).is_ok()
        })
        .collect();
    assert_eq!(accepted, (18..=26).collect::<Vec<_>>());
}

#[test]
fn table_payloads_re_encode_identically() {
    let payloads: [&str; 4] = [
        r##"{ "device": "smart_bulb1", "params":{ "power":true, "color":"#ffffff" } }"##,
        r#"{ "device": "smart_lock1", "params":{ "door_status":"locked" } }"#,
        r#"{ "device": "smart_fan1", "params":{ "power":true } }"#,
        r#"{ "device": "smart_ac1", "params":{ "power":true, "h_direction":"rotate(0deg)", "temperature":20 } }"#,
    ];
    for raw in payloads {
        let cmd = decode_payload(raw.as_bytes()).unwrap();
        // none of the literals contain spaces inside strings
        let compact = raw.replace(' ', "");
        assert_eq!(String::from_utf8(encode_payload(&cmd)).unwrap(), compact);
        assert_eq!(validate_command(&HomeRegistry::default_home(), &cmd), Ok(()));
    }
}

#[test]
fn enum_literals() {
    let reg = HomeRegistry::default_home();
    let ac = |dir: &str| {
        let raw = format!(
            r#"{{"device":"smart_ac1","params":{{"power":true,"h_direction":"{dir}","temperature":20}}}}"#
        );
        validate_command(&reg, &decode_payload(raw.as_bytes()).unwrap())
    };
    for ok in ["rotate(0deg)", "rotate(-45deg)", "rotate(45deg)"] {
        assert_eq!(ac(ok), Ok(()));
    }
    for bad in ["rotate(90deg)", "left", "ROTATE(0DEG)", "", "rotate(0deg) "] {
        assert!(matches!(ac(bad), Err(ValidationError::ValueError { .. })), "{bad}");
    }
    let lock = |s: &str| {
        let raw = format!(r#"{{"device":"smart_lock1","params":{{"door_status":"{s}"}}}}"#);
        validate_command(&reg, &decode_payload(raw.as_bytes()).unwrap())
    };
    assert_eq!(lock("locked"), Ok(()));
    assert_eq!(lock("unlocked"), Ok(()));
    for bad in ["Locked", "open", "closed", ""] {
        assert!(matches!(lock(bad), Err(ValidationError::ValueError { .. })), "{bad}");
    }
}

#[test]
fn canonical_bytes_is_injective_over_random_corpus() {
    let mut rng = seeded(7);
    let mut envelopes = HashSet::new();
    let mut encodings = HashSet::new();
    while envelopes.len() < 10_000 {
        let n = rng.gen_range(1..=3);
        let cmds = (0..n)
            .map(|_| {
                let params = match rng.gen_range(0..4) {
                    0 => Params::bulb(rng.gen(), &format!("#{:06x}", rng.gen_range(0..0x1000000u32))),
                    1 => Params::fan(rng.gen()),
                    2 => Params::ac(rng.gen(), HDirection::ALL[rng.gen_range(0..3)], rng.gen_range(18..=26)),
                    _ => Params::lock(if rng.gen() { DoorStatus::Locked } else { DoorStatus::Unlocked }),
                };
                DeviceCommand::new(id(&format!("dev{}", rng.gen_range(0..5))), params)
            })
            .collect();
        let env = IntentEnvelope::new(format!("c{}", rng.gen_range(0..3)), cmds, rng.gen_range(0..1000)).unwrap();
        if envelopes.insert(env.clone()) {
            assert!(encodings.insert(canonical_bytes(&env)), "collision for {env:?}");
        }
    }
}

fn seeded(seed: u64) -> rand::rngs::StdRng {
    rand::rngs::StdRng::seed_from_u64(seed)
}

#[test]
fn single_byte_mutations_never_verify() {
    let pair = key();
    let env = IntentEnvelope::new(
        "client1",
        vec![
            DeviceCommand::new(id("smart_bulb1"), Params::bulb(true, "#ffffff")),
            DeviceCommand::new(id("smart_ac1"), Params::ac(true, HDirection::Right, 24)),
        ],
        1_636_700_000_000,
    )
    .unwrap();
    let packet = sign_intent(&env, &pair.private, HashAlg::Md5).unwrap();
    let canonical = canonical_bytes(&env);
    let mut rng = seeded(42);
    for _ in 0..100 {
        let mut mutated = canonical.clone();
        let i = rng.gen_range(0..mutated.len());
        mutated[i] ^= rng.gen_range(1..=255u8);
        // Either the bytes no longer decode, or they decode to a different
        // envelope whose signature check fails.
        if let Ok(value) = serde_json::from_slice::<serde_json::Value>(&mutated) {
            if let Ok(changed) = IntentEnvelope::from_json(&value) {
                let forged = SignedIntentPacket { envelope: changed, signature: packet.signature.clone() };
                assert_eq!(verify_intent(&forged, &pair.public, HashAlg::Md5).unwrap(), Verdict::Invalid);
            }
        }
    }
    for _ in 0..100 {
        let mut forged = packet.clone();
        let i = rng.gen_range(0..forged.signature.len());
        forged.signature[i] ^= rng.gen_range(1..=255u8);
        assert!(!matches!(verify_intent(&forged, &pair.public, HashAlg::Md5), Ok(Verdict::Valid)));
    }
}

#[test]
fn sign_verify_2048() {
    let pair = generate_keypair(2048).unwrap();
    assert_eq!(pair.bits(), 2048);
    let env = IntentEnvelope::new("c", vec![DeviceCommand::new(id("smart_fan1"), Params::fan(true))], 1).unwrap();
    let packet = sign_intent(&env, &pair.private, HashAlg::Md5).unwrap();
    assert_eq!(packet.signature.len(), 256);
    assert!(verify_intent(&packet, &pair.public, HashAlg::Md5).unwrap().is_valid());
}

#[test]
fn composite_apply_is_all_or_nothing() {
    let reg = HomeRegistry::default_home();
    let mut state = reg.initial_state();
    let before = state.state_hash();
    let bad = [
        DeviceCommand::new(id("smart_bulb1"), Params::bulb(true, "#ffffff")),
        DeviceCommand::new(id("smart_ac1"), Params::ac(true, HDirection::Center, 99)),
    ];
    assert!(matches!(state.apply_all(&reg, &bad), Err(ValidationError::RangeError { .. })));
    assert_eq!(state.state_hash(), before);

    let good = [
        DeviceCommand::new(id("smart_bulb1"), Params::bulb(true, "#FF0000")),
        DeviceCommand::new(id("smart_fan1"), Params::fan(true)),
    ];
    let responses = state.apply_all(&reg, &good).unwrap();
    assert_eq!(responses[0].response, "Smart_bulb1 Turned On in living room");
    assert_eq!(responses[1].response, "Smart_fan1 Turned On in living room");
    assert_eq!(state.device(&id("smart_bulb1")).unwrap().params, Params::bulb(true, "#ff0000"));
    assert_ne!(state.state_hash(), before);
}
