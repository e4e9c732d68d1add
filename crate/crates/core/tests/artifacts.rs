// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use phonolens::artifacts::{cache_key, read_f32_blob, write_f32_blob, ActivationCache, Envelope};
use phonolens::model::{make_tiny_model, ActivationAddress};
use proptest::prelude::*;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

fn sorted(v: &Value) -> String {
    match v {
        Value::Object(m) => {
            let ordered: BTreeMap<&String, &Value> = m.iter().collect();
            let body: Vec<String> = ordered
                .into_iter()
                .map(|(k, v)| format!("{}:{}", Value::String(k.clone()), sorted(v)))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(a) => format!("[{}]", a.iter().map(sorted).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

fn expected_key(model: &str, template: &str, params: &Value) -> String {
    let doc = format!(
        "{{\"model\":{},\"params\":{},\"template\":{}}}",
        Value::String(model.into()),
        sorted(params),
        Value::String(template.into())
    );
    Sha256::digest(doc.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn envelope_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a/b.json");
    Envelope::new("demo", "abc", 7, json!({"x": [1.5, 2.25]})).save(&path).unwrap();
    let e = Envelope::<Value>::load(&path).unwrap();
    assert_eq!(e.kind, "demo");
    assert_eq!(e.seed, 7);
    assert_eq!(e.payload["x"][1], 2.25);
}

#[test]
fn activation_cache_round_trips() {
    let m = make_tiny_model(1);
    let dir = tempfile::tempdir().unwrap();
    let cache = ActivationCache::new(dir.path());
    let addrs = BTreeSet::from([ActivationAddress::head_z(0, 1, 2)]);
    let prompt = "rhyme with clean:";
    assert!(cache.get(&m.id, prompt, &addrs).unwrap().is_none());
    let run = m.run_with_capture(prompt, &addrs).unwrap();
    cache.put(&m.id, &addrs, &run).unwrap();
    let back = cache.get(&m.id, prompt, &addrs).unwrap().unwrap();
    assert_eq!(back.logits, run.logits);
    assert_eq!(back.captures, run.captures);
}

fn json_leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<i32>().prop_map(Value::from),
        "[a-z]{0,6}".prop_map(Value::from),
        any::<bool>().prop_map(Value::from),
    ]
}

fn json_value() -> impl Strategy<Value = Value> {
    json_leaf().prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::from),
            prop::collection::vec(("[a-z]{1,4}", inner), 0..4)
                .prop_map(|kv| Value::Object(kv.into_iter().collect::<Map<String, Value>>())),
        ]
    })
}

proptest! {
    #[test]
    fn cache_key_matches_independent_canonical_form(params in json_value(), model in "[a-z0-9-]{1,8}") {
        prop_assert_eq!(cache_key(&model, "t {word}", &params), expected_key(&model, "t {word}", &params));
    }

    #[test]
    fn f32_blobs_round_trip(data in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 0..64)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        write_f32_blob(&path, &data).unwrap();
        prop_assert_eq!(read_f32_blob(&path).unwrap(), data);
    }
}
