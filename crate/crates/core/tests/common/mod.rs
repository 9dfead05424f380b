//! Shared round-trip comparison: every ground-truth field a platform stores
//! must come back exactly — timestamps to the millisecond, integers exact,
//! decimals at stored precision.

use kardiex_core::fixture::{CaseGroundTruth, EpochUnit};
use kardiex_core::model::{CaseFile, Gender, Platform, Smoker};
use kardiex_core::timeline;

fn ms(at: chrono::DateTime<chrono::Utc>) -> i64 {
    at.timestamp_millis()
}

pub fn assert_case_matches_truth(case: &CaseFile, truth: &CaseGroundTruth) {
    let platform = case.platform;

    // --- profile ---
    let profile = case.profile.as_ref().expect("profile extracted");
    let gp = &truth.profile;
    assert_eq!(profile.first_name, gp.first_name);
    assert_eq!(profile.last_name, gp.last_name);
    assert_eq!(profile.email, gp.email);
    assert_eq!(profile.dob.utc_millis(), ms(gp.dob), "profile dob");
    match platform {
        Platform::Android => {
            assert_eq!(profile.weight_kg, Some(gp.weight_kg));
            assert_eq!(profile.country, gp.country);
            let smoker = if gp.smoker { Smoker::Yes } else { Smoker::No };
            assert_eq!(profile.smoker, Some(smoker));
        }
        Platform::Ios => {
            assert_eq!(profile.height_cm, Some(gp.height_cm));
            assert_eq!(profile.gender, Some(gp.gender));
            assert_eq!(profile.medical_conditions, gp.medical_conditions);
        }
    }

    // --- ECG recordings ---
    assert_eq!(
        case.ecgs.len(),
        truth.ecg_events.len(),
        "row-count conservation"
    );
    for ge in &truth.ecg_events {
        let ecg = case
            .ecgs
            .iter()
            .find(|e| e.uuid == ge.uuid)
            .unwrap_or_else(|| panic!("recording {} extracted", ge.uuid));
        assert_eq!(
            ecg.recorded_at.utc_millis(),
            ms(ge.recorded_at),
            "recorded_at"
        );
        assert_eq!(ecg.duration_ms, ge.duration_ms);
        assert_eq!(ecg.heart_rate_bpm, ge.heart_rate_bpm);
        let orientation = ecg.inverted.expect("orientation code present");
        assert_eq!(
            orientation as i64, ge.inverted as i64,
            "inverted code for {}",
            ge.uuid
        );
        assert_eq!(ecg.has_audio, ge.has_audio);
        if ge.has_audio {
            let audio = ecg.audio_item.as_ref().expect("audio linked");
            let stem = audio
                .rsplit('/')
                .next()
                .unwrap()
                .rsplit_once('.')
                .unwrap()
                .0;
            assert_eq!(stem, ge.uuid, "audio stem equals uuid");
        }
        // The header stores the local zone; the extractor adopts it.
        assert_eq!(
            ecg.recorded_at.offset_seconds,
            Some(truth.zone_offset_seconds)
        );

        let snap = &ecg.patient_snapshot;
        assert_eq!(snap.first_name.as_deref(), Some(gp.first_name.as_str()));
        assert_eq!(snap.last_name.as_deref(), Some(gp.last_name.as_str()));
        assert_eq!(snap.dob.as_ref().map(|d| d.utc_millis()), Some(ms(gp.dob)));
        assert_eq!(snap.height_cm, Some(gp.height_cm));
        assert_eq!(snap.gender, Some(gp.gender));
        match platform {
            Platform::Android => {
                assert_eq!(snap.weight_kg, Some(gp.weight_kg));
                let smoker = if gp.smoker { Smoker::Yes } else { Smoker::No };
                assert_eq!(snap.smoker, Some(smoker));
                assert_eq!(ecg.server_id, ge.server_id);
                assert_eq!(ecg.atc_filename, format!("{}.atc", ge.uuid));
            }
            Platform::Ios => {
                assert_eq!(ecg.comment, ge.comment);
                assert_eq!(ecg.is_resting, ge.is_resting);
                assert_eq!(
                    ecg.synced_at.as_ref().map(|t| t.utc_millis()),
                    ge.synced_at.map(ms),
                    "synced_at"
                );
                assert_eq!(ecg.atc_filename, format!("{}.atc", ge.uuid));
                assert_eq!(
                    ecg.mc_angina,
                    Some(gp.medical_conditions.iter().any(|c| c == "Angina"))
                );
            }
        }
    }

    // --- blood pressure ---
    assert_eq!(case.bps.len(), truth.bp_events.len());
    for (bp, gb) in case.bps.iter().zip(&truth.bp_events) {
        assert_eq!(bp.recorded_at.utc_millis(), ms(gb.recorded_at));
        assert_eq!(bp.systolic, gb.systolic);
        assert_eq!(bp.diastolic, gb.diastolic);
        assert_eq!(bp.heart_rate_bpm, gb.heart_rate_bpm);
        match platform {
            Platform::Android => {
                assert_eq!(bp.deleted, gb.deleted);
                assert_eq!(bp.source.as_deref(), Some(gb.source.as_str()));
                assert_eq!(
                    bp.recorded_at.offset_seconds,
                    Some(truth.zone_offset_seconds),
                    "bp offset stored per-row"
                );
                assert!(
                    bp.recorded_at.to_local().is_ok(),
                    "local rendering available"
                );
            }
            Platform::Ios => {
                assert_eq!(bp.notes, gb.notes);
            }
        }
    }

    // --- weights ---
    assert_eq!(case.weights.len(), truth.weight_events.len());
    for (w, gw) in case.weights.iter().zip(&truth.weight_events) {
        assert_eq!(w.recorded_at.utc_millis(), ms(gw.recorded_at));
        assert_eq!(w.weight_kg, gw.weight_kg, "weight at stored precision");
        assert_eq!(w.height_cm, gw.height_cm);
        assert_eq!(w.source, gw.source);
    }

    // --- referral orders ---
    let referred: Vec<_> = truth
        .ecg_events
        .iter()
        .filter_map(|e| e.referred.as_ref().map(|r| (e, r)))
        .collect();
    assert_eq!(case.orders.len(), referred.len());
    for (ge, gr) in referred {
        let order = case
            .orders
            .iter()
            .find(|o| o.requested_at.utc_millis() == ms(gr.requested_at))
            .expect("order extracted");
        assert_eq!(
            order.completed_at.as_ref().map(|t| t.utc_millis()),
            gr.completed_at.map(ms)
        );
        assert_eq!(order.result.as_deref(), Some(gr.result.as_str()));
        match (&order.ecg_ref, platform) {
            (kardiex_core::model::EcgRef::Text(t), Platform::Android) => {
                assert_eq!(t, &ge.uuid)
            }
            (kardiex_core::model::EcgRef::Key(_), Platform::Ios) => {}
            other => panic!("unexpected order reference {other:?}"),
        }
    }

    // --- app metadata ---
    let meta = &case.app_metadata;
    if let Some(first_used) = truth.first_used_at {
        if platform == Platform::Android {
            assert_eq!(
                meta.first_used_at.as_ref().map(|t| t.utc_millis()),
                Some(ms(first_used))
            );
        } else {
            assert_eq!(
                meta.first_used_at.as_ref().map(|t| t.utc_millis()),
                Some(ms(first_used))
            );
        }
    }
    match platform {
        Platform::Android => {
            assert_eq!(meta.account_email.as_deref(), Some(gp.email.as_str()));
            assert_eq!(
                meta.last_heart_rate_at.as_ref().map(|t| t.utc_millis()),
                truth.ecg_events.iter().map(|e| ms(e.recorded_at)).max()
            );
            assert_eq!(
                meta.last_bp_at.as_ref().map(|t| t.utc_millis()),
                truth.bp_events.iter().map(|b| ms(b.recorded_at)).max()
            );
            assert_eq!(
                meta.last_weight_at.as_ref().map(|t| t.utc_millis()),
                truth.weight_events.iter().map(|w| ms(w.recorded_at)).max()
            );
        }
        Platform::Ios => {
            assert_eq!(meta.app_version.as_deref(), Some("5.1.2"));
            assert_eq!(
                meta.profile_updated_at.as_ref().map(|t| t.utc_millis()),
                truth.profile_updated_at.map(ms)
            );
        }
    }

    // --- no quarantined timestamps, no anomaly findings on clean input ---
    assert!(
        case.quarantined.is_empty(),
        "clean truth quarantined: {:?}",
        case.quarantined
    );
    let findings = timeline::check_consistency(std::slice::from_ref(case));
    let anomalies: Vec<_> = findings
        .iter()
        .filter(|f| f.severity == timeline::Severity::Anomaly)
        .collect();
    assert!(anomalies.is_empty(), "clean truth anomalies: {anomalies:?}");
}

/// Expected timeline event count for a clean extraction of `truth`.
pub fn expected_event_count(truth: &CaseGroundTruth, platform: Platform) -> usize {
    let ecg = truth.ecg_events.len();
    let orders: usize = truth
        .ecg_events
        .iter()
        .filter_map(|e| e.referred.as_ref())
        .map(|r| 1 + r.completed_at.is_some() as usize)
        .sum();
    let bp = truth.bp_events.len();
    let weight = truth.weight_events.len();
    match platform {
        Platform::Android => {
            // prefs last-activity markers + first_open_time
            let prefs = (!truth.ecg_events.is_empty()) as usize
                + (!truth.bp_events.is_empty()) as usize
                + (!truth.weight_events.is_empty()) as usize;
            let first_used = truth.first_used_at.is_some() as usize;
            ecg + orders + bp + weight + prefs + first_used
        }
        Platform::Ios => {
            let synced = truth
                .ecg_events
                .iter()
                .filter(|e| e.synced_at.is_some())
                .count();
            let first_used = truth.first_used_at.is_some() as usize;
            let profile_updated = truth.profile_updated_at.is_some() as usize;
            ecg + synced + orders + bp + weight + first_used + profile_updated
        }
    }
}

#[allow(dead_code)]
pub fn assert_gender_used(_: Gender) {}

#[allow(dead_code)]
pub fn epoch_unit_label(unit: EpochUnit) -> &'static str {
    match unit {
        EpochUnit::Ms => "ms",
        EpochUnit::S => "s",
    }
}
