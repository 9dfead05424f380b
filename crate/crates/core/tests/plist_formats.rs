//! The plist reader must agree with documents produced by an independent
//! writer (the `plist` crate), in both the XML and binary encodings.

use std::collections::BTreeMap;
use std::time::{Duration, UNIX_EPOCH};

use kardiex_core::propertylist::{parse_plist, PlistValue};

fn sample_dict() -> plist::Value {
    let mut dict = plist::Dictionary::new();
    dict.insert("first_name".into(), plist::Value::String("Test".into()));
    dict.insert("last_name".into(), plist::Value::String("Pätient ♥".into()));
    dict.insert("gender".into(), plist::Value::Integer(1.into()));
    dict.insert("height_cm".into(), plist::Value::Real(182.88));
    dict.insert("smoker".into(), plist::Value::Boolean(false));
    dict.insert(
        "dob".into(),
        plist::Value::Date(plist::Date::from(
            UNIX_EPOCH + Duration::from_millis(479_692_800_000),
        )),
    );
    dict.insert(
        "medical_conditions".into(),
        plist::Value::Array(vec![
            plist::Value::String("Angina".into()),
            plist::Value::String("A second condition long enough to need a length int".into()),
        ]),
    );
    dict.insert(
        "blob".into(),
        plist::Value::Data(vec![0u8, 1, 2, 3, 250, 251, 252]),
    );
    let mut nested = plist::Dictionary::new();
    nested.insert("app_version".into(), plist::Value::String("5.1.2".into()));
    nested.insert("launch_count".into(), plist::Value::Integer(11.into()));
    dict.insert("app".into(), plist::Value::Dictionary(nested));
    plist::Value::Dictionary(dict)
}

fn expected() -> PlistValue {
    let mut dict = BTreeMap::new();
    dict.insert("first_name".into(), PlistValue::Text("Test".into()));
    dict.insert("last_name".into(), PlistValue::Text("Pätient ♥".into()));
    dict.insert("gender".into(), PlistValue::Integer(1));
    dict.insert("height_cm".into(), PlistValue::Real(182.88));
    dict.insert("smoker".into(), PlistValue::Boolean(false));
    dict.insert(
        "dob".into(),
        PlistValue::Date(chrono::DateTime::from_timestamp_millis(479_692_800_000).unwrap()),
    );
    dict.insert(
        "medical_conditions".into(),
        PlistValue::Array(vec![
            PlistValue::Text("Angina".into()),
            PlistValue::Text("A second condition long enough to need a length int".into()),
        ]),
    );
    dict.insert(
        "blob".into(),
        PlistValue::Data(vec![0, 1, 2, 3, 250, 251, 252]),
    );
    let mut nested = BTreeMap::new();
    nested.insert("app_version".into(), PlistValue::Text("5.1.2".into()));
    nested.insert("launch_count".into(), PlistValue::Integer(11));
    dict.insert("app".into(), PlistValue::Dict(nested));
    PlistValue::Dict(dict)
}

#[test]
fn xml_encoding_decodes() {
    let mut bytes = Vec::new();
    sample_dict().to_writer_xml(&mut bytes).unwrap();
    assert_eq!(parse_plist(&bytes).unwrap(), expected());
}

#[test]
fn binary_encoding_decodes() {
    let mut bytes = Vec::new();
    sample_dict().to_writer_binary(&mut bytes).unwrap();
    assert!(bytes.starts_with(b"bplist00"));
    assert_eq!(parse_plist(&bytes).unwrap(), expected());
}

#[test]
fn encodings_agree_with_each_other() {
    let mut xml = Vec::new();
    let mut bin = Vec::new();
    sample_dict().to_writer_xml(&mut xml).unwrap();
    sample_dict().to_writer_binary(&mut bin).unwrap();
    assert_eq!(parse_plist(&xml).unwrap(), parse_plist(&bin).unwrap());
}

#[test]
fn wide_array_uses_length_int() {
    // More than 14 elements forces the 0xF length-int path in arrays.
    let items: Vec<plist::Value> = (0..40).map(|i| plist::Value::Integer(i.into())).collect();
    let mut bytes = Vec::new();
    plist::Value::Array(items)
        .to_writer_binary(&mut bytes)
        .unwrap();
    match parse_plist(&bytes).unwrap() {
        PlistValue::Array(items) => {
            assert_eq!(items.len(), 40);
            assert_eq!(items[39], PlistValue::Integer(39));
        }
        other => panic!("expected array, got {other:?}"),
    }
}

#[test]
fn negative_and_large_integers() {
    let mut dict = plist::Dictionary::new();
    dict.insert("neg".into(), plist::Value::Integer((-12345i64).into()));
    dict.insert("big".into(), plist::Value::Integer(i64::MAX.into()));
    let mut bytes = Vec::new();
    plist::Value::Dictionary(dict)
        .to_writer_binary(&mut bytes)
        .unwrap();
    let parsed = parse_plist(&bytes).unwrap();
    let d = parsed.as_dict().unwrap();
    assert_eq!(d["neg"].as_i64(), Some(-12345));
    assert_eq!(d["big"].as_i64(), Some(i64::MAX));
}

#[test]
fn binary_fuzz_never_panics() {
    let mut bytes = Vec::new();
    sample_dict().to_writer_binary(&mut bytes).unwrap();
    for i in 0..bytes.len() {
        let mut corrupted = bytes.clone();
        corrupted[i] ^= 0xFF;
        let _ = parse_plist(&corrupted);
        let _ = parse_plist(&bytes[..i]);
    }
}
