//! Merged evidential timeline and cross-source consistency analysis.
//!
//! Events from every extracted record are ordered by UTC instant with a
//! deterministic (kind, provenance, payload) tie-break; local time is
//! display-only and never participates in ordering, because the same case
//! mixes GMT-epoch and local-zone renderings. Records whose timestamps could
//! not be normalized are quarantined, never silently dropped.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{CaseFile, ProvenanceRef, QuarantinedTimestamp, WarningCode};
use crate::timestamp::{iso_ms, ForensicTimestamp};
use crate::units::{CM_PER_IN, KG_PER_LB};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    AppFirstUsed,
    ProfileObserved,
    EcgRecorded,
    EcgSynced,
    OrderRequested,
    OrderCompleted,
    BpRecorded,
    WeightRecorded,
}

impl EventKind {
    /// Stable tie-break rank for events sharing an instant.
    fn rank(&self) -> u8 {
        match self {
            EventKind::AppFirstUsed => 0,
            EventKind::ProfileObserved => 1,
            EventKind::EcgRecorded => 2,
            EventKind::EcgSynced => 3,
            EventKind::OrderRequested => 4,
            EventKind::OrderCompleted => 5,
            EventKind::BpRecorded => 6,
            EventKind::WeightRecorded => 7,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::AppFirstUsed => "app_first_used",
            EventKind::ProfileObserved => "profile_observed",
            EventKind::EcgRecorded => "ecg_recorded",
            EventKind::EcgSynced => "ecg_synced",
            EventKind::OrderRequested => "order_requested",
            EventKind::OrderCompleted => "order_completed",
            EventKind::BpRecorded => "bp_recorded",
            EventKind::WeightRecorded => "weight_recorded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    #[serde(with = "iso_ms")]
    pub utc: DateTime<Utc>,
    /// Local rendering when the source stored a zone offset; absent otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local: Option<String>,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    /// Record locator, e.g. `ecg:3db73498-…` or `bp:0`.
    pub payload: String,
    pub provenance: ProvenanceRef,
}

impl TimelineEvent {
    fn sort_key(&self) -> (i64, u8, &str, &str, &str) {
        (
            self.utc.timestamp_millis(),
            self.kind.rank(),
            self.provenance.item.as_str(),
            self.provenance.field.as_str(),
            self.payload.as_str(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Anomaly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyFinding {
    pub severity: Severity,
    pub code: String,
    pub description: String,
    pub involved: Vec<ProvenanceRef>,
}

/// Build the merged, totally ordered timeline for one or more cases.
/// Returns the events plus the quarantined timestamps that could not
/// participate.
pub fn build_timeline(cases: &[CaseFile]) -> (Vec<TimelineEvent>, Vec<QuarantinedTimestamp>) {
    let mut events = Vec::new();
    let mut quarantined = Vec::new();

    for case in cases {
        let subject = case_subject(case);
        let push = &mut |events: &mut Vec<TimelineEvent>,
                         ts: &ForensicTimestamp,
                         kind: EventKind,
                         payload: String,
                         provenance: ProvenanceRef| {
            events.push(TimelineEvent {
                utc: ts.utc,
                local: ts.to_local().ok(),
                kind,
                subject: subject.clone(),
                payload,
                provenance,
            });
        };

        for ecg in &case.ecgs {
            push(
                &mut events,
                &ecg.recorded_at,
                EventKind::EcgRecorded,
                format!("ecg:{}", ecg.uuid),
                ProvenanceRef::new(
                    ecg.provenance.item.clone(),
                    format!("{}.{}", ecg.provenance.field, ecg.recorded_at.source_field),
                ),
            );
            if let Some(synced) = &ecg.synced_at {
                push(
                    &mut events,
                    synced,
                    EventKind::EcgSynced,
                    format!("ecg:{}", ecg.uuid),
                    ProvenanceRef::new(
                        ecg.provenance.item.clone(),
                        format!("{}.{}", ecg.provenance.field, synced.source_field),
                    ),
                );
            }
        }
        // Record locators come from provenance, not vector position, so the
        // same records always yield the same events regardless of input order.
        for order in &case.orders {
            push(
                &mut events,
                &order.requested_at,
                EventKind::OrderRequested,
                format!("order:{}", order.provenance.field),
                order.provenance.clone(),
            );
            if let Some(completed) = &order.completed_at {
                push(
                    &mut events,
                    completed,
                    EventKind::OrderCompleted,
                    format!("order:{}", order.provenance.field),
                    order.provenance.clone(),
                );
            }
        }
        for bp in &case.bps {
            push(
                &mut events,
                &bp.recorded_at,
                EventKind::BpRecorded,
                format!("bp:{}", bp.provenance.field),
                bp.provenance.clone(),
            );
        }
        for weight in &case.weights {
            push(
                &mut events,
                &weight.recorded_at,
                EventKind::WeightRecorded,
                format!("weight:{}", weight.provenance.field),
                weight.provenance.clone(),
            );
        }

        let meta = &case.app_metadata;
        if let Some(ts) = &meta.first_used_at {
            push(
                &mut events,
                ts,
                EventKind::AppFirstUsed,
                "app:first_used".into(),
                ProvenanceRef::new(case.app_root.clone(), ts.source_field.clone()),
            );
        }
        if let Some(ts) = &meta.profile_updated_at {
            push(
                &mut events,
                ts,
                EventKind::ProfileObserved,
                "app:profile_updated".into(),
                ProvenanceRef::new(case.app_root.clone(), ts.source_field.clone()),
            );
        }
        // Last-activity markers from the preferences store are events in
        // their own right, with prefs provenance distinct from the DB rows.
        if let Some(ts) = &meta.last_bp_at {
            push(
                &mut events,
                ts,
                EventKind::BpRecorded,
                "prefs:last_bp_recording".into(),
                ProvenanceRef::new(case.app_root.clone(), ts.source_field.clone()),
            );
        }
        if let Some(ts) = &meta.last_weight_at {
            push(
                &mut events,
                ts,
                EventKind::WeightRecorded,
                "prefs:last_weight_recording".into(),
                ProvenanceRef::new(case.app_root.clone(), ts.source_field.clone()),
            );
        }
        if let Some(ts) = &meta.last_heart_rate_at {
            push(
                &mut events,
                ts,
                EventKind::EcgRecorded,
                "prefs:last_heart_rate_recording".into(),
                ProvenanceRef::new(case.app_root.clone(), ts.source_field.clone()),
            );
        }

        quarantined.extend(case.quarantined.iter().cloned());
    }

    events.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    (events, quarantined)
}

fn case_subject(case: &CaseFile) -> Option<String> {
    if let Some(profile) = &case.profile {
        return Some(format!("{} {}", profile.first_name, profile.last_name));
    }
    case.ecgs.iter().find_map(|e| {
        match (
            &e.patient_snapshot.first_name,
            &e.patient_snapshot.last_name,
        ) {
            (Some(f), Some(l)) => Some(format!("{f} {l}")),
            _ => None,
        }
    })
}

/// Cross-source consistency analysis over one or more cases.
pub fn check_consistency(cases: &[CaseFile]) -> Vec<ConsistencyFinding> {
    let mut findings = Vec::new();
    profile_agreement(cases, &mut findings);
    imperial_round_numbers(cases, &mut findings);
    mixed_encodings(cases, &mut findings);
    order_sequencing(cases, &mut findings);
    audio_link_health(cases, &mut findings);
    findings
}

/// (a) The same identity field must agree wherever it is claimed: primary
/// profile, secondary fragments, per-row snapshots.
fn profile_agreement(cases: &[CaseFile], findings: &mut Vec<ConsistencyFinding>) {
    // field name -> rendered value -> provenances claiming it
    let mut claims: BTreeMap<&'static str, BTreeMap<String, Vec<ProvenanceRef>>> = BTreeMap::new();
    let mut claim = |field: &'static str, value: String, prov: ProvenanceRef| {
        claims
            .entry(field)
            .or_default()
            .entry(value)
            .or_default()
            .push(prov);
    };

    for case in cases {
        if let Some(profile) = &case.profile {
            let src = || profile.source.clone();
            claim("first_name", profile.first_name.clone(), src());
            claim("last_name", profile.last_name.clone(), src());
            claim("email", profile.email.clone(), src());
            claim("dob", profile.dob.utc_millis().to_string(), src());
            if let Some(h) = profile.height_cm {
                claim("height_cm", render_f64(h), src());
            }
            if let Some(w) = profile.weight_kg {
                claim("weight_kg", render_f64(w), src());
            }
            if let Some(g) = profile.gender {
                claim("gender", g.code().to_string(), src());
            }
            if let Some(s) = profile.smoker {
                claim("smoker", s.code().to_string(), src());
            }
        }
        for fragment in &case.profile_fragments {
            for (key, value) in &fragment.fields {
                let field = match key.as_str() {
                    "first_name" => "first_name",
                    "last_name" => "last_name",
                    "email" => "email",
                    _ => continue,
                };
                claim(field, value.clone(), fragment.source.clone());
            }
        }
        for ecg in &case.ecgs {
            let snap = &ecg.patient_snapshot;
            let src = || ecg.provenance.clone();
            if let Some(v) = &snap.first_name {
                claim("first_name", v.clone(), src());
            }
            if let Some(v) = &snap.last_name {
                claim("last_name", v.clone(), src());
            }
            if let Some(v) = &snap.dob {
                claim("dob", v.utc_millis().to_string(), src());
            }
            if let Some(v) = snap.height_cm {
                claim("height_cm", render_f64(v), src());
            }
            if let Some(v) = snap.weight_kg {
                claim("weight_kg", render_f64(v), src());
            }
            if let Some(g) = snap.gender {
                claim("gender", g.code().to_string(), src());
            }
            if let Some(s) = snap.smoker {
                claim("smoker", s.code().to_string(), src());
            }
        }
    }

    for (field, values) in claims {
        if values.len() > 1 {
            let rendered: Vec<&str> = values.keys().map(String::as_str).collect();
            let involved: Vec<ProvenanceRef> = values
                .values()
                .filter_map(|provs| provs.first().cloned())
                .collect();
            findings.push(ConsistencyFinding {
                severity: Severity::Anomaly,
                code: "profile_mismatch".into(),
                description: format!("sources disagree on `{field}`: {}", rendered.join(" vs ")),
                involved,
            });
        }
    }
}

/// (b) Metric values that are exact conversions of round imperial inputs.
/// Informational: it corroborates that the app converts units before storing.
fn imperial_round_numbers(cases: &[CaseFile], findings: &mut Vec<ConsistencyFinding>) {
    let mut seen: BTreeSet<(String, u64)> = BTreeSet::new();
    let mut weights: Vec<(f64, ProvenanceRef)> = Vec::new();
    let mut heights: Vec<(f64, ProvenanceRef)> = Vec::new();

    for case in cases {
        if let Some(profile) = &case.profile {
            if let Some(w) = profile.weight_kg {
                weights.push((w, profile.source.clone()));
            }
            if let Some(h) = profile.height_cm {
                heights.push((h, profile.source.clone()));
            }
        }
        for record in &case.weights {
            weights.push((record.weight_kg, record.provenance.clone()));
            heights.push((record.height_cm, record.provenance.clone()));
        }
        for ecg in &case.ecgs {
            if let Some(w) = ecg.patient_snapshot.weight_kg {
                weights.push((w, ecg.provenance.clone()));
            }
            if let Some(h) = ecg.patient_snapshot.height_cm {
                heights.push((h, ecg.provenance.clone()));
            }
        }
    }

    for (kg, prov) in weights {
        let lb = kg / KG_PER_LB;
        let rounded = lb.round();
        if rounded > 0.0 && (lb - rounded).abs() <= 0.01 && seen.insert(("lb".into(), kg.to_bits()))
        {
            findings.push(ConsistencyFinding {
                severity: Severity::Info,
                code: "imperial_weight_input".into(),
                description: format!(
                    "stored weight {kg} kg is consistent with {rounded:.0} lb input"
                ),
                involved: vec![prov],
            });
        }
    }
    for (cm, prov) in heights {
        let inches = cm / CM_PER_IN;
        let rounded = inches.round();
        if rounded > 0.0
            && (inches - rounded).abs() <= 0.1
            && seen.insert(("in".into(), cm.to_bits()))
        {
            findings.push(ConsistencyFinding {
                severity: Severity::Info,
                code: "imperial_height_input".into(),
                description: format!(
                    "stored height {cm} cm is consistent with {rounded:.0} in input"
                ),
                involved: vec![prov],
            });
        }
    }
}

/// (c) Mixed timestamp encodings in one case complicate timeline work; the
/// merged view flags the mixture so the normalization is auditable.
fn mixed_encodings(cases: &[CaseFile], findings: &mut Vec<ConsistencyFinding>) {
    let mut by_encoding: BTreeMap<&'static str, ProvenanceRef> = BTreeMap::new();
    for case in cases {
        let mut note = |ts: &ForensicTimestamp, prov: ProvenanceRef| {
            by_encoding.entry(ts.encoding.as_str()).or_insert(prov);
        };
        for ecg in &case.ecgs {
            note(&ecg.recorded_at, ecg.provenance.clone());
            if let Some(ts) = &ecg.synced_at {
                note(ts, ecg.provenance.clone());
            }
            if let Some(ts) = &ecg.patient_snapshot.dob {
                note(ts, ecg.provenance.clone());
            }
        }
        for bp in &case.bps {
            note(&bp.recorded_at, bp.provenance.clone());
        }
        for w in &case.weights {
            note(&w.recorded_at, w.provenance.clone());
        }
        for o in &case.orders {
            note(&o.requested_at, o.provenance.clone());
            if let Some(ts) = &o.completed_at {
                note(ts, o.provenance.clone());
            }
        }
        if let Some(profile) = &case.profile {
            note(&profile.dob, profile.source.clone());
        }
        for ts in [
            &case.app_metadata.first_used_at,
            &case.app_metadata.last_bp_at,
            &case.app_metadata.last_weight_at,
            &case.app_metadata.last_heart_rate_at,
            &case.app_metadata.profile_updated_at,
        ]
        .into_iter()
        .flatten()
        {
            note(
                ts,
                ProvenanceRef::new(case.app_root.clone(), ts.source_field.clone()),
            );
        }
    }

    if by_encoding.len() > 1 {
        let encodings: Vec<&str> = by_encoding.keys().copied().collect();
        findings.push(ConsistencyFinding {
            severity: Severity::Info,
            code: "mixed_timestamp_encodings".into(),
            description: format!(
                "case stores timestamps under {} encodings: {}; ordering uses normalized UTC",
                by_encoding.len(),
                encodings.join(", ")
            ),
            involved: by_encoding.into_values().collect(),
        });
    }
}

/// (d) Orders completed before they were requested.
fn order_sequencing(cases: &[CaseFile], findings: &mut Vec<ConsistencyFinding>) {
    for case in cases {
        for order in &case.orders {
            if let Some(completed) = &order.completed_at {
                if completed.utc_millis() < order.requested_at.utc_millis() {
                    findings.push(ConsistencyFinding {
                        severity: Severity::Anomaly,
                        code: "order_completed_before_requested".into(),
                        description: format!(
                            "order for {} completed {} but requested {}",
                            order.ecg_ref,
                            completed.to_utc_string(),
                            order.requested_at.to_utc_string()
                        ),
                        involved: vec![order.provenance.clone()],
                    });
                }
            }
        }
    }
}

/// (e) Audio/flag mismatches re-raised case-wide.
fn audio_link_health(cases: &[CaseFile], findings: &mut Vec<ConsistencyFinding>) {
    let mut involved = Vec::new();
    for case in cases {
        for warning in &case.warnings {
            if matches!(
                warning.code,
                WarningCode::MissingAudio
                    | WarningCode::OrphanAudio
                    | WarningCode::AudioFlagMismatch
            ) {
                involved.push(ProvenanceRef::new(
                    warning.path.clone().unwrap_or_default(),
                    warning
                        .field
                        .clone()
                        .unwrap_or_else(|| warning.code.as_str().into()),
                ));
            }
        }
    }
    if !involved.is_empty() {
        findings.push(ConsistencyFinding {
            severity: Severity::Anomaly,
            code: "audio_links_inconsistent".into(),
            description: format!(
                "{} audio/has_audio mismatches recorded during extraction",
                involved.len()
            ),
            involved,
        });
    }
}

fn render_f64(v: f64) -> String {
    format!("{v}")
}
