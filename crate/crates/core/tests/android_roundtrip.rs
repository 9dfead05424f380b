//! Generate → extract round trips for the Android artifact tree.

mod common;

use kardiex_core::fixture::{self, CaseGroundTruth, EpochUnit, Mutation};
use kardiex_core::model::WarningCode;
use kardiex_core::timeline;
use kardiex_core::{android, Platform};
use tempfile::TempDir;

fn gen_and_extract(truth: &CaseGroundTruth) -> kardiex_core::CaseFile {
    let dir = TempDir::new().unwrap();
    fixture::gen_android_dump(truth, dir.path()).unwrap();
    android::extract(dir.path()).unwrap()
}

#[test]
fn default_scenario_round_trips() {
    let truth = CaseGroundTruth::default_scenario(42);
    let case = gen_and_extract(&truth);
    assert_eq!(case.platform, Platform::Android);
    assert_eq!(case.app_root, "data/data/com.alivecor.aliveecg");
    assert_eq!(case.ecgs.len(), 11);
    common::assert_case_matches_truth(&case, &truth);
}

#[test]
fn bp_local_time_renders_five_hours_behind_utc() {
    let truth = CaseGroundTruth::default_scenario(42);
    let case = gen_and_extract(&truth);
    let bp = &case.bps[0];
    assert_eq!(bp.recorded_at.offset_seconds, Some(-18_000));
    assert_eq!(bp.recorded_at.to_utc_string(), "2018-05-20T13:05:00.000Z");
    assert_eq!(
        bp.recorded_at.to_local().unwrap(),
        "2018-05-20T08:05:00.000-05:00"
    );
}

#[test]
fn census_counts_thirteen_tables() {
    let truth = CaseGroundTruth::default_scenario(42);
    let case = gen_and_extract(&truth);
    assert_eq!(case.table_census.len(), 13);
    let documented = case.table_census.iter().filter(|t| t.documented).count();
    assert_eq!(documented, 4);
    let ecg = case
        .table_census
        .iter()
        .find(|t| t.name == "ECG")
        .expect("ECG row in census");
    assert_eq!(ecg.rows, 11);
}

#[test]
fn rerooted_dump_is_found() {
    let mut truth = CaseGroundTruth::default_scenario(43);
    truth.android.rerooted = true;
    let dir = TempDir::new().unwrap();
    fixture::gen_android_dump(&truth, dir.path()).unwrap();
    let layout = android::locate_app_root(dir.path()).unwrap();
    assert_eq!(
        layout.app_root.to_string_lossy(),
        "partition0/data/data/com.alivecor.aliveecg"
    );
    let case = android::extract(dir.path()).unwrap();
    common::assert_case_matches_truth(&case, &truth);
}

#[test]
fn seconds_epoch_unit_round_trips() {
    let mut truth = CaseGroundTruth::default_scenario(44);
    truth.android.epoch_unit = EpochUnit::S;
    // Whole-second instants are required at this storage granularity.
    for e in &mut truth.ecg_events {
        e.recorded_at = e.recorded_at
            - chrono::Duration::milliseconds(e.recorded_at.timestamp_subsec_millis() as i64);
        if let Some(s) = e.synced_at {
            e.synced_at =
                Some(s - chrono::Duration::milliseconds(s.timestamp_subsec_millis() as i64));
        }
    }
    let case = gen_and_extract(&truth);
    common::assert_case_matches_truth(&case, &truth);
    // The millisecond-unit note must name seconds for this dump.
    assert!(case.warnings.iter().any(|w| {
        w.code == WarningCode::EpochUnitAssumed && w.message.contains("epoch_seconds_gmt")
    }));
}

#[test]
fn empty_truth_yields_empty_schema_dump() {
    let mut truth = CaseGroundTruth::default_scenario(45);
    truth.ecg_events.clear();
    truth.bp_events.clear();
    truth.weight_events.clear();
    let case = gen_and_extract(&truth);
    assert!(case.ecgs.is_empty());
    assert!(case.bps.is_empty());
    assert!(case.orders.is_empty());
    assert_eq!(case.table_census.len(), 13);
    assert!(case.quarantined.is_empty());
}

#[test]
fn empty_directory_is_app_not_found() {
    let dir = TempDir::new().unwrap();
    assert!(matches!(
        android::extract(dir.path()),
        Err(android::ExtractError::AppNotFound(_))
    ));
}

#[test]
fn out_dir_must_be_empty() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("occupied"), b"x").unwrap();
    let truth = CaseGroundTruth::default_scenario(46);
    assert!(matches!(
        fixture::gen_android_dump(&truth, dir.path()),
        Err(fixture::FixtureError::OutDirNotEmpty(_))
    ));
}

#[test]
fn generation_is_deterministic() {
    let truth = CaseGroundTruth::default_scenario(47);
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let manifest_a = fixture::gen_android_dump(&truth, a.path()).unwrap();
    let manifest_b = fixture::gen_android_dump(&truth, b.path()).unwrap();
    assert_eq!(manifest_a, manifest_b);
    assert_eq!(
        fixture::hash_tree(a.path()).unwrap(),
        fixture::hash_tree(b.path()).unwrap()
    );
}

#[test]
fn extraction_leaves_inputs_untouched() {
    let truth = CaseGroundTruth::default_scenario(48);
    let dir = TempDir::new().unwrap();
    fixture::gen_android_dump(&truth, dir.path()).unwrap();
    let before = fixture::hash_tree(dir.path()).unwrap();
    let _ = android::extract(dir.path()).unwrap();
    let after = fixture::hash_tree(dir.path()).unwrap();
    assert_eq!(before, after, "read-only guarantee violated");
}

#[test]
fn timeline_is_complete_against_truth() {
    let truth = CaseGroundTruth::default_scenario(49);
    let case = gen_and_extract(&truth);
    let (events, quarantined) = timeline::build_timeline(std::slice::from_ref(&case));
    assert_eq!(
        events.len() + quarantined.len(),
        common::expected_event_count(&truth, Platform::Android)
    );
    // Deterministic: same case, same timeline.
    let (again, _) = timeline::build_timeline(std::slice::from_ref(&case));
    assert_eq!(events, again);
}

#[test]
fn golden_paths_appear_verbatim() {
    let truth = CaseGroundTruth::default_scenario(50);
    let dir = TempDir::new().unwrap();
    let manifest = fixture::gen_android_dump(&truth, dir.path()).unwrap();
    let paths: Vec<&str> = manifest.entries.iter().map(|e| e.path.as_str()).collect();
    // Documented locations, exactly as recovered from real devices.
    assert!(paths
        .iter()
        .any(|p| p.contains("data/data/com.alivecor.aliveecg/databases/ECG.db")));
    assert!(paths
        .iter()
        .any(|p| p.contains("com.alivecor.aliveecg/files/ecgs/") && p.ends_with(".atc")));
    assert!(paths
        .iter()
        .any(|p| p.contains("com.alivecor.aliveecg/files/temp/") && p.ends_with(".pdf")));
    assert!(paths
        .iter()
        .any(|p| p.ends_with("shared_prefs/userprofile.xml")));
    assert!(paths
        .iter()
        .any(|p| p.ends_with("shared_prefs/com.alivecor.aliveecg_preferences.xml")));
    assert!(paths
        .iter()
        .any(|p| p.ends_with("shared_prefs/com.google.android.gms.measurement_prefs.xml")));
    assert!(paths.iter().any(|p| {
        p.contains("com.alivecor.aliveecg/files/") && (p.ends_with(".m4a") || p.ends_with(".aac"))
    }));
}

#[test]
fn mutations_map_to_their_warning_codes() {
    for mutation in Mutation::ALL {
        let truth = CaseGroundTruth::default_scenario(51);
        let clean_dir = TempDir::new().unwrap();
        fixture::gen_android_dump(&truth, clean_dir.path()).unwrap();
        let clean_case = android::extract(clean_dir.path()).unwrap();
        let clean_codes: Vec<&str> = clean_case
            .warnings
            .iter()
            .map(|w| w.code.as_str())
            .collect();
        let clean_findings: Vec<String> =
            timeline::check_consistency(std::slice::from_ref(&clean_case))
                .iter()
                .map(|f| f.code.clone())
                .collect();

        let dir = TempDir::new().unwrap();
        fixture::gen_android_dump(&truth, dir.path()).unwrap();
        fixture::mutate_dump(dir.path(), mutation).unwrap();
        let case = android::extract(dir.path()).unwrap();

        if let Some(expected) = mutation.expected_warning() {
            assert!(
                case.warnings.iter().any(|w| w.code.as_str() == expected),
                "{mutation:?} must raise `{expected}`, got {:?}",
                case.warning_codes()
            );
            assert!(
                !clean_codes.contains(&expected),
                "`{expected}` must not fire on a clean dump"
            );
            // No other new warning codes sneak in with the mutation.
            let new_codes: Vec<&str> = case
                .warnings
                .iter()
                .map(|w| w.code.as_str())
                .filter(|c| !clean_codes.contains(c) && *c != expected)
                .collect();
            assert!(
                new_codes.is_empty(),
                "{mutation:?} added unexpected codes {new_codes:?}"
            );
        }
        if let Some(expected) = mutation.expected_finding() {
            let findings = timeline::check_consistency(std::slice::from_ref(&case));
            assert!(
                findings.iter().any(|f| f.code == expected),
                "{mutation:?} must raise finding `{expected}`"
            );
            assert!(!clean_findings.iter().any(|f| f == expected));
        }
    }
}

#[test]
fn partial_prefs_dir_gives_metadata_without_profile() {
    let truth = CaseGroundTruth::default_scenario(52);
    let dir = TempDir::new().unwrap();
    fixture::gen_android_dump(&truth, dir.path()).unwrap();
    let prefs = dir
        .path()
        .join("data/data/com.alivecor.aliveecg/shared_prefs");
    std::fs::remove_file(prefs.join("userprofile.xml")).unwrap();
    std::fs::remove_file(prefs.join("com.alivecor.aliveecg_preferences.xml")).unwrap();
    let case = android::extract(dir.path()).unwrap();
    assert!(case.profile.is_none());
    assert!(case.app_metadata.first_used_at.is_some());
}

#[test]
fn malformed_prefs_file_warns_and_continues() {
    let truth = CaseGroundTruth::default_scenario(53);
    let dir = TempDir::new().unwrap();
    fixture::gen_android_dump(&truth, dir.path()).unwrap();
    let path = dir
        .path()
        .join("data/data/com.alivecor.aliveecg/shared_prefs/userprofile.xml");
    std::fs::write(
        &path,
        b"<map><long name=\"dob\" value=\"not a long\"/></map>",
    )
    .unwrap();
    let case = android::extract(dir.path()).unwrap();
    assert!(case
        .warnings
        .iter()
        .any(|w| w.code == WarningCode::MalformedXml));
    assert!(case.profile.is_none());
    // Database extraction is unaffected.
    assert_eq!(case.ecgs.len(), 11);
}

#[test]
fn randomized_round_trips() {
    for seed in 100..120 {
        let truth = CaseGroundTruth::random(seed);
        let case = gen_and_extract(&truth);
        common::assert_case_matches_truth(&case, &truth);
    }
}

#[test]
fn missing_audio_file_raises_missing_audio() {
    let truth = CaseGroundTruth::default_scenario(54);
    let dir = TempDir::new().unwrap();
    fixture::gen_android_dump(&truth, dir.path()).unwrap();
    // Remove the audio note of a row whose has_audio_file flag is set.
    let files = dir.path().join("data/data/com.alivecor.aliveecg/files");
    let victim = std::fs::read_dir(&files)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| p.extension().map(|e| e == "m4a").unwrap_or(false))
        .expect("an audio file exists");
    std::fs::remove_file(victim).unwrap();
    let case = android::extract(dir.path()).unwrap();
    assert!(case
        .warnings
        .iter()
        .any(|w| w.code == WarningCode::MissingAudio));
}

#[test]
fn out_of_range_codes_and_vitals_warn_without_coercion() {
    let truth = CaseGroundTruth::default_scenario(55);
    let dir = TempDir::new().unwrap();
    fixture::gen_android_dump(&truth, dir.path()).unwrap();
    let db = dir
        .path()
        .join("data/data/com.alivecor.aliveecg/databases/ECG.db");
    let conn = rusqlite::Connection::open(&db).unwrap();
    conn.execute_batch(
        "UPDATE ECG SET gender = 7, weight = 900.0 WHERE rowid = 1;
         UPDATE ECG SET inverted = 3 WHERE rowid = 2;",
    )
    .unwrap();
    drop(conn);
    let case = android::extract(dir.path()).unwrap();
    let bad_codes = case
        .warnings
        .iter()
        .filter(|w| w.code == WarningCode::BadBooleanCode)
        .count();
    assert!(bad_codes >= 2, "gender and inverted both out of range");
    assert!(case
        .warnings
        .iter()
        .any(|w| w.code == WarningCode::ImplausibleVitals));
    // Never coerced: the fields are simply absent.
    assert_eq!(case.ecgs[0].patient_snapshot.gender, None);
    assert_eq!(case.ecgs[1].inverted, None);
    // The implausible weight is preserved, not dropped.
    assert_eq!(case.ecgs[0].patient_snapshot.weight_kg, Some(900.0));
}

#[test]
fn unparseable_timestamp_is_quarantined_not_dropped() {
    let truth = CaseGroundTruth::default_scenario(56);
    let dir = TempDir::new().unwrap();
    fixture::gen_android_dump(&truth, dir.path()).unwrap();
    let db = dir
        .path()
        .join("data/data/com.alivecor.aliveecg/databases/ECG.db");
    let conn = rusqlite::Connection::open(&db).unwrap();
    conn.execute_batch("UPDATE bp_records SET timestamp = 'yesterday-ish' WHERE rowid = 1;")
        .unwrap();
    drop(conn);
    let case = android::extract(dir.path()).unwrap();
    assert_eq!(case.bps.len(), truth.bp_events.len() - 1);
    assert_eq!(case.quarantined.len(), 1);
    assert_eq!(case.quarantined[0].raw_text, "yesterday-ish");
    // The quarantined record still counts in the timeline reconciliation.
    let (events, quarantined) = timeline::build_timeline(std::slice::from_ref(&case));
    assert_eq!(
        events.len() + quarantined.len(),
        common::expected_event_count(&truth, Platform::Android)
    );
}

#[test]
fn unexpected_prefs_keys_are_cataloged_opaque() {
    let truth = CaseGroundTruth::default_scenario(57);
    let dir = TempDir::new().unwrap();
    fixture::gen_android_dump(&truth, dir.path()).unwrap();
    let path = dir
        .path()
        .join("data/data/com.alivecor.aliveecg/shared_prefs/userprofile.xml");
    let xml = std::fs::read_to_string(&path).unwrap();
    let xml = xml.replace(
        "</map>",
        "    <string name=\"mystery_key\">mystery value</string>\n</map>",
    );
    std::fs::write(&path, xml).unwrap();
    let case = android::extract(dir.path()).unwrap();
    // Known keys still extract; the stranger is preserved, not dropped.
    assert!(case.profile.is_some());
    assert_eq!(
        case.app_metadata
            .opaque_keys
            .get("userprofile.xml:mystery_key")
            .map(String::as_str),
        Some("mystery value")
    );
}
