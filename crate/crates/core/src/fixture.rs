//! Synthetic dump generator.
//!
//! Generates Android and iOS application trees that conform to every
//! documented artifact schema, from a declarative [`CaseGroundTruth`]. The
//! generated dumps are the round-trip oracle for the extractors: every
//! ground-truth field must be recovered exactly. Database files are written
//! through SQLite itself (via `rusqlite`) and plists through the `plist`
//! crate, so the write path shares no code with the read path.
//!
//! Generation is deterministic: the same truth always produces byte-identical
//! trees. A small set of controlled corruptions ([`Mutation`]) maps each to
//! one expected warning code for negative-path testing.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, UNIX_EPOCH};

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rusqlite::Connection;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::android::ANDROID_APP_ID;
use crate::atc::{self, AtcChunk, AtcFile, INFO_CHUNK_ID, INFO_CHUNK_OBSERVED_LEN};
use crate::ios::IOS_APP_ID;
use crate::model::{normalize_rel_path, sha256_file, Gender};
use crate::prefs_xml::{render_shared_prefs, PrefValue};
use crate::propertylist::PlistValue;
use crate::timestamp::{iso_ms, iso_ms_opt, ForensicTimestamp, MAC_ABSOLUTE_UNIX_OFFSET_SECS};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("output directory `{0}` exists and is not empty")]
    OutDirNotEmpty(PathBuf),
    #[error("cannot write target: {0}")]
    UnwritableTarget(#[from] std::io::Error),
    #[error("invalid ground truth: {0}")]
    InvalidTruth(String),
    #[error("database write failed: {0}")]
    Database(#[from] rusqlite::Error),
    #[error("plist write failed: {0}")]
    Plist(#[from] plist::Error),
    #[error("ground-truth document: {0}")]
    Spec(String),
    #[error("mutation `{0}` does not apply to this dump")]
    MutationNotApplicable(&'static str),
    #[error("no application folder found to mutate")]
    NothingToMutate,
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochUnit {
    Ms,
    S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlistEncoding {
    Xml,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AndroidOptions {
    pub epoch_unit: EpochUnit,
    pub rerooted: bool,
}

impl Default for AndroidOptions {
    fn default() -> Self {
        AndroidOptions {
            epoch_unit: EpochUnit::Ms,
            rerooted: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IosOptions {
    pub plist_encoding: PlistEncoding,
    pub fractional_seconds: bool,
    /// Nest the container under a random UUID directory, as real
    /// extractions do.
    #[serde(default)]
    pub rerooted: bool,
}

impl Default for IosOptions {
    fn default() -> Self {
        IosOptions {
            plist_encoding: PlistEncoding::Xml,
            fractional_seconds: true,
            rerooted: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundProfile {
    pub first_name: String,
    pub last_name: String,
    #[serde(with = "iso_ms")]
    pub dob: DateTime<Utc>,
    pub height_cm: f64,
    pub weight_kg: f64,
    pub gender: Gender,
    pub smoker: bool,
    pub email: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    #[serde(default)]
    pub medical_conditions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundReferral {
    #[serde(with = "iso_ms")]
    pub requested_at: DateTime<Utc>,
    #[serde(default, with = "iso_ms_opt", skip_serializing_if = "Option::is_none")]
    pub completed_at: Option<DateTime<Utc>>,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundEcg {
    pub uuid: String,
    #[serde(with = "iso_ms")]
    pub recorded_at: DateTime<Utc>,
    pub duration_ms: i64,
    pub heart_rate_bpm: i64,
    pub inverted: bool,
    pub has_audio: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_resting: Option<bool>,
    #[serde(default, with = "iso_ms_opt", skip_serializing_if = "Option::is_none")]
    pub synced_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub referred: Option<GroundReferral>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundBp {
    #[serde(with = "iso_ms")]
    pub recorded_at: DateTime<Utc>,
    pub systolic: i64,
    pub diastolic: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heart_rate_bpm: Option<i64>,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    #[serde(default)]
    pub deleted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundWeight {
    #[serde(with = "iso_ms")]
    pub recorded_at: DateTime<Utc>,
    pub weight_kg: f64,
    pub height_cm: f64,
    pub source: String,
}

/// Declarative truth for one synthetic case. Everything a dump contains is
/// derived from this plus the platform options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseGroundTruth {
    pub seed: u64,
    /// Local-zone offset stored alongside epoch values, e.g. -18000 for UTC-5.
    pub zone_offset_seconds: i32,
    #[serde(with = "iso_ms")]
    pub window_start: DateTime<Utc>,
    #[serde(with = "iso_ms")]
    pub window_end: DateTime<Utc>,
    pub profile: GroundProfile,
    #[serde(default, with = "iso_ms_opt", skip_serializing_if = "Option::is_none")]
    pub first_used_at: Option<DateTime<Utc>>,
    #[serde(default, with = "iso_ms_opt", skip_serializing_if = "Option::is_none")]
    pub profile_updated_at: Option<DateTime<Utc>>,
    #[serde(default, rename = "ecg")]
    pub ecg_events: Vec<GroundEcg>,
    #[serde(default, rename = "bp")]
    pub bp_events: Vec<GroundBp>,
    #[serde(default, rename = "weight")]
    pub weight_events: Vec<GroundWeight>,
    #[serde(default)]
    pub android: AndroidOptions,
    #[serde(default)]
    pub ios: IosOptions,
}

impl CaseGroundTruth {
    pub fn from_toml_str(text: &str) -> Result<CaseGroundTruth, FixtureError> {
        toml::from_str(text).map_err(|e| FixtureError::Spec(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("ground truth serializes")
    }

    /// The experiment protocol: one initial measurement (referred for
    /// analysis), then two recordings a day for five days, plus manual blood
    /// pressure and weight entries. Eleven ECG rows total. The final evening
    /// recording reproduces the documented header instant and UUID.
    pub fn default_scenario(seed: u64) -> CaseGroundTruth {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let day = |d: u32, h: u32, m: u32, s: u32, ms: u32| {
            Utc.with_ymd_and_hms(2018, 5, d, h, m, s).unwrap()
                + chrono::Duration::milliseconds(ms as i64)
        };

        let mut ecgs = Vec::new();
        let initial_at = day(19, 15, 0, 0, 0);
        ecgs.push(GroundEcg {
            uuid: random_uuid(&mut rng),
            recorded_at: initial_at,
            duration_ms: 30_000,
            heart_rate_bpm: 74,
            inverted: false,
            has_audio: true,
            server_id: Some(format!("srv-{:08x}", rng.random::<u32>())),
            comment: None,
            is_resting: Some(true),
            synced_at: Some(initial_at + chrono::Duration::seconds(42)),
            referred: Some(GroundReferral {
                requested_at: initial_at + chrono::Duration::minutes(30),
                completed_at: Some(initial_at + chrono::Duration::hours(26)),
                result: "Normal".into(),
            }),
        });
        for i in 0..10u32 {
            let d = 20 + i / 2;
            let evening = i % 2 == 1;
            let last_evening = d == 24 && evening;
            let recorded_at = if last_evening {
                // 2018-05-24T14:55:59.115-05:00 in UTC.
                day(24, 19, 55, 59, 115)
            } else if evening {
                day(d, 19, 50, 0, 0)
            } else {
                day(d, 13, 0, 0, 0)
            };
            ecgs.push(GroundEcg {
                uuid: if last_evening {
                    "3db73498-32a0-4293-b5f0-7616162c55d8".into()
                } else {
                    random_uuid(&mut rng)
                },
                recorded_at,
                duration_ms: 30_000,
                heart_rate_bpm: 66 + (i as i64 * 3) % 18,
                inverted: i == 7, // one reading taken upside down
                has_audio: evening,
                server_id: Some(format!("srv-{:08x}", rng.random::<u32>())),
                comment: evening.then(|| "voice note".to_string()),
                is_resting: Some(!evening),
                synced_at: Some(recorded_at + chrono::Duration::seconds(30)),
                referred: None,
            });
        }

        CaseGroundTruth {
            seed,
            zone_offset_seconds: -18_000,
            window_start: day(19, 0, 0, 0, 0),
            window_end: day(26, 0, 0, 0, 0),
            profile: GroundProfile {
                first_name: "Test".into(),
                last_name: "Patient".into(),
                dob: Utc.with_ymd_and_hms(1985, 3, 15, 0, 0, 0).unwrap(),
                height_cm: 182.88,       // entered as 6 ft
                weight_kg: 68.038_855_5, // entered as 150 lb
                gender: Gender::Male,
                smoker: false,
                email: "kardia.study@example.com".into(),
                country: Some("US".into()),
                medical_conditions: vec!["Angina".into()],
            },
            first_used_at: Some(day(19, 14, 0, 0, 0)),
            profile_updated_at: Some(day(19, 14, 5, 0, 0)),
            ecg_events: ecgs,
            bp_events: vec![
                GroundBp {
                    recorded_at: day(20, 13, 5, 0, 0),
                    systolic: 120,
                    diastolic: 80,
                    heart_rate_bpm: Some(70),
                    source: "manual".into(),
                    notes: Some("after walk".into()),
                    deleted: false,
                },
                GroundBp {
                    recorded_at: day(23, 13, 5, 0, 0),
                    systolic: 118,
                    diastolic: 79,
                    heart_rate_bpm: Some(72),
                    source: "manual".into(),
                    notes: None,
                    deleted: false,
                },
            ],
            weight_events: vec![GroundWeight {
                recorded_at: day(21, 13, 10, 0, 0),
                weight_kg: 68.038_855_5,
                height_cm: 182.88,
                source: "manual".into(),
            }],
            android: AndroidOptions::default(),
            ios: IosOptions::default(),
        }
    }

    /// A randomized but internally consistent truth. Granularity respects the
    /// chosen storage options so every field can round-trip exactly.
    pub fn random(seed: u64) -> CaseGroundTruth {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let android = AndroidOptions {
            epoch_unit: if rng.random_bool(0.5) {
                EpochUnit::Ms
            } else {
                EpochUnit::S
            },
            rerooted: rng.random_bool(0.3),
        };
        let ios = IosOptions {
            plist_encoding: if rng.random_bool(0.5) {
                PlistEncoding::Xml
            } else {
                PlistEncoding::Binary
            },
            fractional_seconds: rng.random_bool(0.5),
            rerooted: rng.random_bool(0.3),
        };
        let millis_ok = android.epoch_unit == EpochUnit::Ms && ios.fractional_seconds;

        // Case window: ten days somewhere in 2002–2097.
        let start_s: i64 = rng.random_range(1_009_843_200..4_039_999_999); // 2002..2098
        let window_start = Utc.timestamp_opt(start_s, 0).unwrap();
        let window_end = window_start + chrono::Duration::days(10);
        let instant = |rng: &mut ChaCha20Rng| -> DateTime<Utc> {
            let offset_s = rng.random_range(0..(10 * 86_400));
            let ms = if millis_ok {
                rng.random_range(0..1000)
            } else {
                0
            };
            window_start + chrono::Duration::seconds(offset_s) + chrono::Duration::milliseconds(ms)
        };

        const FIRST: [&str; 8] = [
            "Alex", "Billie", "Casey", "Dana", "Eli", "Frankie", "Gray", "Harper",
        ];
        const LAST: [&str; 8] = [
            "Stone",
            "Rivera",
            "Okafor",
            "Lindqvist",
            "Marsh",
            "Novak",
            "Iwu",
            "Barnes",
        ];
        const ZONES: [i32; 6] = [-28_800, -18_000, -14_400, 0, 3_600, 19_800];
        const RESULTS: [&str; 3] = ["Normal", "Possible AF", "Unreadable"];

        let first_name = FIRST[rng.random_range(0..FIRST.len())].to_string();
        let last_name = LAST[rng.random_range(0..LAST.len())].to_string();
        let email = format!(
            "{}.{}@example.com",
            first_name.to_lowercase(),
            last_name.to_lowercase()
        );
        // Roughly half the profiles carry converted imperial inputs.
        let (height_cm, weight_kg) = if rng.random_bool(0.5) {
            let inches: i64 = rng.random_range(58..78);
            let pounds: i64 = rng.random_range(100..260);
            (
                inches as f64 * crate::units::CM_PER_IN,
                pounds as f64 * crate::units::KG_PER_LB,
            )
        } else {
            (
                rng.random_range(120.0..210.0),
                rng.random_range(40.0..160.0),
            )
        };
        let dob = Utc
            .with_ymd_and_hms(
                rng.random_range(1930..2000),
                rng.random_range(1..13),
                rng.random_range(1..29),
                0,
                0,
                0,
            )
            .unwrap();

        let mut uuids = BTreeSet::new();
        let ecg_count = rng.random_range(1..=12);
        let mut ecg_events = Vec::with_capacity(ecg_count);
        for i in 0..ecg_count {
            let uuid = loop {
                let candidate = random_uuid(&mut rng);
                if uuids.insert(candidate.clone()) {
                    break candidate;
                }
            };
            let recorded_at = instant(&mut rng);
            let has_audio = rng.random_bool(0.4);
            let referred = rng.random_bool(0.3).then(|| {
                let requested_at = recorded_at + chrono::Duration::minutes(rng.random_range(5..90));
                GroundReferral {
                    requested_at,
                    completed_at: rng.random_bool(0.7).then(|| {
                        requested_at + chrono::Duration::minutes(rng.random_range(30..2000))
                    }),
                    result: RESULTS[rng.random_range(0..RESULTS.len())].to_string(),
                }
            });
            ecg_events.push(GroundEcg {
                uuid,
                recorded_at,
                duration_ms: 30_000 + rng.random_range(0..5) * 1_000,
                heart_rate_bpm: rng.random_range(45..160),
                inverted: rng.random_bool(0.1),
                has_audio,
                server_id: rng
                    .random_bool(0.8)
                    .then(|| format!("srv-{:08x}", rng.random::<u32>())),
                comment: has_audio.then(|| format!("note {i}")),
                is_resting: if rng.random_bool(0.7) {
                    Some(rng.random_bool(0.6))
                } else {
                    None
                },
                synced_at: rng
                    .random_bool(0.8)
                    .then(|| recorded_at + chrono::Duration::seconds(rng.random_range(5..600))),
                referred,
            });
        }

        let bp_count = rng.random_range(0..=4);
        let bp_events = (0..bp_count)
            .map(|_| {
                let systolic = rng.random_range(95..185);
                GroundBp {
                    recorded_at: instant(&mut rng),
                    systolic,
                    diastolic: systolic - rng.random_range(20..50),
                    heart_rate_bpm: rng.random_bool(0.7).then(|| rng.random_range(45..140)),
                    source: if rng.random_bool(0.5) {
                        "manual"
                    } else {
                        "device"
                    }
                    .into(),
                    notes: rng.random_bool(0.3).then(|| "bp note".to_string()),
                    deleted: rng.random_bool(0.1),
                }
            })
            .collect();

        let weight_count = rng.random_range(0..=3);
        let weight_events = (0..weight_count)
            .map(|_| GroundWeight {
                recorded_at: instant(&mut rng),
                weight_kg: rng.random_range(40.0..160.0),
                height_cm,
                source: if rng.random_bool(0.5) {
                    "manual"
                } else {
                    "device"
                }
                .into(),
            })
            .collect();

        CaseGroundTruth {
            seed,
            zone_offset_seconds: ZONES[rng.random_range(0..ZONES.len())],
            window_start,
            window_end,
            profile: GroundProfile {
                first_name,
                last_name,
                dob,
                height_cm,
                weight_kg,
                gender: if rng.random_bool(0.5) {
                    Gender::Male
                } else {
                    Gender::Female
                },
                smoker: rng.random_bool(0.2),
                email,
                country: rng.random_bool(0.7).then(|| "US".to_string()),
                medical_conditions: if rng.random_bool(0.4) {
                    vec!["Angina".into()]
                } else {
                    Vec::new()
                },
            },
            first_used_at: Some(window_start - chrono::Duration::days(1)),
            profile_updated_at: rng
                .random_bool(0.8)
                .then(|| window_start - chrono::Duration::hours(20)),
            ecg_events,
            bp_events,
            weight_events,
            android,
            ios,
        }
    }

    /// Structural validation shared by both generators.
    pub fn validate(&self) -> Result<(), FixtureError> {
        let err = |msg: String| Err(FixtureError::InvalidTruth(msg));
        let mut uuids = BTreeSet::new();
        for ecg in &self.ecg_events {
            if !crate::atc::is_uuid(&ecg.uuid) {
                return err(format!("`{}` is not a well-formed UUID", ecg.uuid));
            }
            if !uuids.insert(&ecg.uuid) {
                return err(format!("duplicate recording UUID {}", ecg.uuid));
            }
        }
        let window = self.window_start..self.window_end;
        let check_window = |label: &str, at: DateTime<Utc>| {
            if window.contains(&at) {
                Ok(())
            } else {
                Err(FixtureError::InvalidTruth(format!(
                    "{label} at {at} lies outside the case window"
                )))
            }
        };
        for ecg in &self.ecg_events {
            check_window("recording", ecg.recorded_at)?;
        }
        for bp in &self.bp_events {
            check_window("blood pressure", bp.recorded_at)?;
            if !(bp.systolic > bp.diastolic && bp.diastolic > 0) {
                return err(format!(
                    "degenerate blood pressure {}/{}",
                    bp.systolic, bp.diastolic
                ));
            }
        }
        for weight in &self.weight_events {
            check_window("weight", weight.recorded_at)?;
        }
        // Plist dates are rendered at second precision in the XML form.
        for (label, at) in [
            ("dob", Some(self.profile.dob)),
            ("first_used_at", self.first_used_at),
            ("profile_updated_at", self.profile_updated_at),
        ] {
            if let Some(at) = at {
                if at.timestamp_subsec_millis() != 0 {
                    return err(format!("{label} must be whole-second"));
                }
            }
        }
        Ok(())
    }

    fn validate_android(&self) -> Result<(), FixtureError> {
        self.validate()?;
        if self.android.epoch_unit == EpochUnit::S {
            for at in self.all_instants() {
                if at.timestamp_subsec_millis() != 0 {
                    return Err(FixtureError::InvalidTruth(format!(
                        "epoch_unit=s cannot store sub-second instant {at}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn validate_ios(&self) -> Result<(), FixtureError> {
        self.validate()?;
        if !self.ios.fractional_seconds {
            for at in self.all_instants() {
                if at.timestamp_subsec_millis() != 0 {
                    return Err(FixtureError::InvalidTruth(format!(
                        "fractional_seconds=false cannot store sub-second instant {at}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn all_instants(&self) -> Vec<DateTime<Utc>> {
        let mut out = vec![self.profile.dob];
        out.extend(self.first_used_at);
        out.extend(self.profile_updated_at);
        for e in &self.ecg_events {
            out.push(e.recorded_at);
            out.extend(e.synced_at);
            if let Some(r) = &e.referred {
                out.push(r.requested_at);
                out.extend(r.completed_at);
            }
        }
        out.extend(self.bp_events.iter().map(|b| b.recorded_at));
        out.extend(self.weight_events.iter().map(|w| w.recorded_at));
        out
    }
}

fn random_uuid(rng: &mut ChaCha20Rng) -> String {
    let mut bytes = [0u8; 16];
    rng.fill(&mut bytes);
    bytes[6] = (bytes[6] & 0x0F) | 0x40; // version 4
    bytes[8] = (bytes[8] & 0x3F) | 0x80; // variant 10
    format!(
        "{:02x}{:02x}{:02x}{:02x}-{:02x}{:02x}-{:02x}{:02x}-{:02x}{:02x}-{:02x}{:02x}{:02x}{:02x}{:02x}{:02x}",
        bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5], bytes[6], bytes[7],
        bytes[8], bytes[9], bytes[10], bytes[11], bytes[12], bytes[13], bytes[14], bytes[15],
    )
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub byte_size: u64,
    pub digest: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// One `digest  size  path` line per item, sorted by path.
    pub fn render(&self) -> String {
        let mut entries = self.entries.clone();
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        let mut out = String::new();
        for e in entries {
            out.push_str(&format!("{}  {}  {}\n", e.digest, e.byte_size, e.path));
        }
        out
    }
}

/// Hash every file under `root`; entries sorted by dump-relative path.
pub fn hash_tree(root: &Path) -> std::io::Result<Manifest> {
    let mut entries = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(std::io::Error::other)?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .map_err(std::io::Error::other)?;
        let (digest, byte_size) = sha256_file(entry.path())?;
        entries.push(ManifestEntry {
            path: normalize_rel_path(rel).unwrap_or_default(),
            byte_size,
            digest,
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(Manifest { entries })
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

struct TreeWriter {
    out_dir: PathBuf,
    manifest: Manifest,
}

impl TreeWriter {
    fn write(&mut self, rel: &Path, bytes: &[u8]) -> Result<(), FixtureError> {
        let abs = self.out_dir.join(rel);
        if let Some(parent) = abs.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&abs, bytes)?;
        self.manifest.entries.push(ManifestEntry {
            path: normalize_rel_path(rel).unwrap_or_default(),
            byte_size: bytes.len() as u64,
            digest: crate::model::sha256_hex(bytes),
        });
        Ok(())
    }

    fn mkdir(&self, rel: &Path) -> Result<(), FixtureError> {
        std::fs::create_dir_all(self.out_dir.join(rel))?;
        Ok(())
    }
}

fn ensure_empty(out_dir: &Path) -> Result<(), FixtureError> {
    if out_dir.exists() {
        if out_dir.read_dir()?.next().is_some() {
            return Err(FixtureError::OutDirNotEmpty(out_dir.to_path_buf()));
        }
    } else {
        std::fs::create_dir_all(out_dir)?;
    }
    Ok(())
}

/// Generate an Android application dump under `out_dir` (which must be empty).
pub fn gen_android_dump(truth: &CaseGroundTruth, out_dir: &Path) -> Result<Manifest, FixtureError> {
    ensure_empty(out_dir)?;
    write_android(truth, out_dir)
}

/// Generate an iOS application dump under `out_dir` (which must be empty).
pub fn gen_ios_dump(truth: &CaseGroundTruth, out_dir: &Path) -> Result<Manifest, FixtureError> {
    ensure_empty(out_dir)?;
    write_ios(truth, out_dir)
}

/// Both platform trees in one dump root, from the same truth.
pub fn gen_dual_dump(truth: &CaseGroundTruth, out_dir: &Path) -> Result<Manifest, FixtureError> {
    ensure_empty(out_dir)?;
    let mut manifest = write_android(truth, out_dir)?;
    manifest.entries.extend(write_ios(truth, out_dir)?.entries);
    manifest.entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(manifest)
}

fn epoch_value(at: DateTime<Utc>, unit: EpochUnit) -> i64 {
    match unit {
        EpochUnit::Ms => at.timestamp_millis(),
        EpochUnit::S => at.timestamp(),
    }
}

fn local_header_text(at: DateTime<Utc>, zone_offset_seconds: i32) -> String {
    ForensicTimestamp::from_epoch_millis(at.timestamp_millis(), Some(zone_offset_seconds), "gen")
        .expect("valid instant")
        .to_local()
        .expect("offset present")
}

fn build_atc_bytes(
    recorded_at: DateTime<Utc>,
    zone_offset_seconds: i32,
    uuid: &str,
    recorder: &[&str],
) -> Vec<u8> {
    let local = local_header_text(recorded_at, zone_offset_seconds);
    let payload = atc::build_info_payload(&local, uuid, recorder, INFO_CHUNK_OBSERVED_LEN);
    let file = AtcFile::new(vec![AtcChunk::new(INFO_CHUNK_ID, payload)]);
    atc::serialize_atc(&file).expect("constructed chunk lengths match")
}

/// Minimal MPEG-4 audio container stub: a real `ftyp` box so file sniffing
/// identifies it, plus an `mdat` carrying the UUID for digest uniqueness.
fn m4a_stub(uuid: &str) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&[0x00, 0x00, 0x00, 0x18]);
    out.extend_from_slice(b"ftypM4A ");
    out.extend_from_slice(&[0x00, 0x00, 0x02, 0x00]);
    out.extend_from_slice(b"M4A mp42");
    let payload = uuid.as_bytes();
    out.extend_from_slice(&((payload.len() + 8) as u32).to_be_bytes());
    out.extend_from_slice(b"mdat");
    out.extend_from_slice(payload);
    out
}

/// Minimal ADTS/AAC stub: sync word and header, then the UUID bytes.
fn aac_stub(uuid: &str) -> Vec<u8> {
    let mut out = vec![0xFF, 0xF1, 0x50, 0x80, 0x00, 0x1F, 0xFC];
    out.extend_from_slice(uuid.as_bytes());
    out
}

/// Single-page placeholder PDF with a valid `%PDF-` header and EOF marker.
fn pdf_stub(uuid: &str) -> Vec<u8> {
    format!(
        "%PDF-1.4\n1 0 obj<</Type/Catalog/Pages 2 0 R>>endobj\n\
         2 0 obj<</Type/Pages/Kids[3 0 R]/Count 1>>endobj\n\
         3 0 obj<</Type/Page/Parent 2 0 R/MediaBox[0 0 612 792]>>endobj\n\
         % referral for recording {uuid}\ntrailer<</Size 4/Root 1 0 R>>\n%%EOF\n"
    )
    .into_bytes()
}

const ANDROID_RECORDER: [&str; 2] = ["Galaxy S4", "Kardia 5.1.2"];
const IOS_RECORDER: [&str; 3] = ["iPhone SE", "iOS 11.3.1", "Kardia 5.1.2"];
pub const APP_VERSION: &str = "5.1.2";

fn write_android(truth: &CaseGroundTruth, out_dir: &Path) -> Result<Manifest, FixtureError> {
    truth.validate_android()?;
    let unit = truth.android.epoch_unit;
    let app_root: PathBuf = if truth.android.rerooted {
        ["partition0", "data", "data", ANDROID_APP_ID]
            .iter()
            .collect()
    } else {
        ["data", "data", ANDROID_APP_ID].iter().collect()
    };
    let mut w = TreeWriter {
        out_dir: out_dir.to_path_buf(),
        manifest: Manifest::default(),
    };

    // Documented directories exist even when empty.
    w.mkdir(&app_root.join("files").join("ecgs"))?;
    w.mkdir(&app_root.join("files").join("temp"))?;
    w.mkdir(&app_root.join("shared_prefs"))?;
    w.mkdir(&app_root.join("databases"))?;

    write_android_db(truth, &mut w, &app_root)?;

    for (i, ecg) in truth.ecg_events.iter().enumerate() {
        let bytes = build_atc_bytes(
            ecg.recorded_at,
            truth.zone_offset_seconds,
            &ecg.uuid,
            &ANDROID_RECORDER,
        );
        let dir = app_root.join("files").join("ecgs");
        // Two files are generated per reading.
        w.write(&dir.join(format!("{}.atc", ecg.uuid)), &bytes)?;
        w.write(&dir.join(format!("{}.enhanced.atc", ecg.uuid)), &bytes)?;

        if ecg.has_audio {
            let files = app_root.join("files");
            if i % 2 == 0 {
                w.write(
                    &files.join(format!("{}.m4a", ecg.uuid)),
                    &m4a_stub(&ecg.uuid),
                )?;
            } else {
                w.write(
                    &files.join(format!("{}.aac", ecg.uuid)),
                    &aac_stub(&ecg.uuid),
                )?;
            }
        }
        if ecg.referred.is_some() {
            w.write(
                &app_root
                    .join("files")
                    .join("temp")
                    .join(format!("referral-{}.pdf", ecg.uuid)),
                &pdf_stub(&ecg.uuid),
            )?;
        }
    }

    // shared_prefs trio.
    let profile = &truth.profile;
    let mut user_entries = vec![
        (
            "first_name".to_string(),
            PrefValue::Text(profile.first_name.clone()),
        ),
        (
            "last_name".to_string(),
            PrefValue::Text(profile.last_name.clone()),
        ),
        (
            "dob".to_string(),
            PrefValue::Long(epoch_value(profile.dob, unit)),
        ),
        ("weight".to_string(), PrefValue::Float(profile.weight_kg)),
        ("email".to_string(), PrefValue::Text(profile.email.clone())),
        ("smoker".to_string(), PrefValue::Boolean(profile.smoker)),
    ];
    if let Some(country) = &profile.country {
        user_entries.push(("country".to_string(), PrefValue::Text(country.clone())));
    }
    w.write(
        &app_root
            .join("shared_prefs")
            .join(crate::android::PREFS_USERPROFILE),
        render_shared_prefs(&user_entries).as_bytes(),
    )?;

    let mut main_entries = vec![("email".to_string(), PrefValue::Text(profile.email.clone()))];
    if let Some(last) = truth.bp_events.iter().map(|b| b.recorded_at).max() {
        main_entries.push((
            "last_bp_recording".into(),
            PrefValue::Long(epoch_value(last, unit)),
        ));
    }
    if let Some(last) = truth.weight_events.iter().map(|w| w.recorded_at).max() {
        main_entries.push((
            "last_weight_recording".into(),
            PrefValue::Long(epoch_value(last, unit)),
        ));
    }
    if let Some(last) = truth.ecg_events.iter().map(|e| e.recorded_at).max() {
        main_entries.push((
            "last_heart_rate_recording".into(),
            PrefValue::Long(epoch_value(last, unit)),
        ));
    }
    w.write(
        &app_root
            .join("shared_prefs")
            .join(crate::android::PREFS_MAIN),
        render_shared_prefs(&main_entries).as_bytes(),
    )?;

    if let Some(first_used) = truth.first_used_at {
        // The analytics store always records milliseconds.
        let entries = vec![(
            "first_open_time".to_string(),
            PrefValue::Long(first_used.timestamp_millis()),
        )];
        w.write(
            &app_root
                .join("shared_prefs")
                .join(crate::android::PREFS_MEASUREMENT),
            render_shared_prefs(&entries).as_bytes(),
        )?;
    }

    w.manifest.entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(w.manifest)
}

fn write_android_db(
    truth: &CaseGroundTruth,
    w: &mut TreeWriter,
    app_root: &Path,
) -> Result<(), FixtureError> {
    let rel = app_root.join("databases").join(crate::android::DB_FILE);
    let abs = w.out_dir.join(&rel);
    if let Some(parent) = abs.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let unit = truth.android.epoch_unit;
    let conn = Connection::open(&abs)?;
    conn.pragma_update(None, "journal_mode", "MEMORY")?;
    conn.execute_batch(
        r#"
        CREATE TABLE ECG (
            uuid TEXT, server_id TEXT, "data Recorded" INTEGER, duration INTEGER,
            heart_rate INTEGER, inverted INTEGER, height REAL, weight REAL,
            gender INTEGER, smoker INTEGER, has_audio_file INTEGER,
            first_name TEXT, last_name TEXT, dob INTEGER
        );
        CREATE TABLE bp_records (
            timestamp INTEGER, timestamp_offset INTEGER, deleted INTEGER,
            systolic INTEGER, diastolic INTEGER, heart_rate INTEGER, source TEXT
        );
        CREATE TABLE Orders (
            ecg_id TEXT, result TEXT, requested_at INTEGER, completed_at INTEGER
        );
        CREATE TABLE Weight_records (
            timestamp INTEGER, timestamp_offset INTEGER, weight REAL, height REAL, source TEXT
        );
        "#,
    )?;
    // Filler tables so the census matches the thirteen observed in the app.
    for i in 1..=9 {
        conn.execute_batch(&format!(
            "CREATE TABLE z_opaque_{i:02} (id INTEGER, payload TEXT);"
        ))?;
    }

    let profile = &truth.profile;
    for ecg in &truth.ecg_events {
        conn.execute(
            r#"INSERT INTO ECG (uuid, server_id, "data Recorded", duration, heart_rate,
                inverted, height, weight, gender, smoker, has_audio_file,
                first_name, last_name, dob)
               VALUES (?1,?2,?3,?4,?5,?6,?7,?8,?9,?10,?11,?12,?13,?14)"#,
            rusqlite::params![
                ecg.uuid,
                ecg.server_id,
                epoch_value(ecg.recorded_at, unit),
                ecg.duration_ms,
                ecg.heart_rate_bpm,
                ecg.inverted as i64,
                profile.height_cm,
                profile.weight_kg,
                profile.gender.code(),
                profile.smoker as i64,
                ecg.has_audio as i64,
                profile.first_name,
                profile.last_name,
                epoch_value(profile.dob, unit),
            ],
        )?;
        if let Some(referral) = &ecg.referred {
            conn.execute(
                "INSERT INTO Orders (ecg_id, result, requested_at, completed_at)
                 VALUES (?1,?2,?3,?4)",
                rusqlite::params![
                    ecg.uuid,
                    referral.result,
                    epoch_value(referral.requested_at, unit),
                    referral.completed_at.map(|at| epoch_value(at, unit)),
                ],
            )?;
        }
    }
    for bp in &truth.bp_events {
        conn.execute(
            "INSERT INTO bp_records (timestamp, timestamp_offset, deleted, systolic,
                diastolic, heart_rate, source) VALUES (?1,?2,?3,?4,?5,?6,?7)",
            rusqlite::params![
                epoch_value(bp.recorded_at, unit),
                truth.zone_offset_seconds,
                bp.deleted as i64,
                bp.systolic,
                bp.diastolic,
                bp.heart_rate_bpm,
                bp.source,
            ],
        )?;
    }
    for weight in &truth.weight_events {
        conn.execute(
            "INSERT INTO Weight_records (timestamp, timestamp_offset, weight, height, source)
             VALUES (?1,?2,?3,?4,?5)",
            rusqlite::params![
                epoch_value(weight.recorded_at, unit),
                truth.zone_offset_seconds,
                weight.weight_kg,
                weight.height_cm,
                weight.source,
            ],
        )?;
    }
    drop(conn);

    let (digest, byte_size) = sha256_file(&abs)?;
    w.manifest.entries.push(ManifestEntry {
        path: normalize_rel_path(&rel).unwrap_or_default(),
        byte_size,
        digest,
    });
    Ok(())
}

fn mac_param(at: DateTime<Utc>, fractional: bool) -> rusqlite::types::Value {
    let ms = at.timestamp_millis() - MAC_ABSOLUTE_UNIX_OFFSET_SECS * 1000;
    if fractional {
        rusqlite::types::Value::Real(ms as f64 / 1000.0)
    } else {
        rusqlite::types::Value::Integer(ms / 1000)
    }
}

fn write_ios(truth: &CaseGroundTruth, out_dir: &Path) -> Result<Manifest, FixtureError> {
    truth.validate_ios()?;
    let mut app_root: PathBuf = [
        "private",
        "var",
        "mobile",
        "containers",
        "data",
        "application",
    ]
    .iter()
    .collect();
    if truth.ios.rerooted {
        let mut rng = ChaCha20Rng::seed_from_u64(truth.seed ^ 0x105);
        app_root = app_root.join(random_uuid(&mut rng).to_uppercase());
    }
    let app_root = app_root.join(IOS_APP_ID);

    let mut w = TreeWriter {
        out_dir: out_dir.to_path_buf(),
        manifest: Manifest::default(),
    };
    w.mkdir(&app_root.join("Documents").join("ecgfiles"))?;
    w.mkdir(&app_root.join("Library").join("Preferences"))?;

    write_ios_db(truth, &mut w, &app_root)?;

    for ecg in &truth.ecg_events {
        let bytes = build_atc_bytes(
            ecg.recorded_at,
            truth.zone_offset_seconds,
            &ecg.uuid,
            &IOS_RECORDER,
        );
        w.write(
            &app_root
                .join("Documents")
                .join("ecgfiles")
                .join(format!("{}.atc", ecg.uuid)),
            &bytes,
        )?;
        if ecg.has_audio {
            w.write(
                &app_root.join("Documents").join(format!("{}.m4a", ecg.uuid)),
                &m4a_stub(&ecg.uuid),
            )?;
        }
    }

    // Preferences plist in the chosen encoding.
    let profile = &truth.profile;
    let mut dict = plist::Dictionary::new();
    dict.insert(
        "first_name".into(),
        plist::Value::String(profile.first_name.clone()),
    );
    dict.insert(
        "last_name".into(),
        plist::Value::String(profile.last_name.clone()),
    );
    dict.insert(
        "gender".into(),
        plist::Value::Integer(profile.gender.code().into()),
    );
    dict.insert("dob".into(), plist_date(profile.dob));
    dict.insert("height_cm".into(), plist::Value::Real(profile.height_cm));
    dict.insert("email".into(), plist::Value::String(profile.email.clone()));
    dict.insert(
        "medical_conditions".into(),
        plist::Value::Array(
            profile
                .medical_conditions
                .iter()
                .map(|c| plist::Value::String(c.clone()))
                .collect(),
        ),
    );
    dict.insert(
        "app_version".into(),
        plist::Value::String(APP_VERSION.into()),
    );
    if let Some(at) = truth.first_used_at {
        dict.insert("first_used_at".into(), plist_date(at));
    }
    if let Some(at) = truth.profile_updated_at {
        dict.insert("profile_updated_at".into(), plist_date(at));
    }
    let value = plist::Value::Dictionary(dict);
    let mut plist_bytes = Vec::new();
    match truth.ios.plist_encoding {
        PlistEncoding::Xml => value.to_writer_xml(&mut plist_bytes)?,
        PlistEncoding::Binary => value.to_writer_binary(&mut plist_bytes)?,
    }
    w.write(
        &app_root
            .join("Library")
            .join("Preferences")
            .join(crate::ios::PREFS_PLIST),
        &plist_bytes,
    )?;

    w.manifest.entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(w.manifest)
}

fn plist_date(at: DateTime<Utc>) -> plist::Value {
    let ms = at.timestamp_millis();
    let time = if ms >= 0 {
        UNIX_EPOCH + Duration::from_millis(ms as u64)
    } else {
        UNIX_EPOCH - Duration::from_millis(ms.unsigned_abs())
    };
    plist::Value::Date(plist::Date::from(time))
}

fn write_ios_db(
    truth: &CaseGroundTruth,
    w: &mut TreeWriter,
    app_root: &Path,
) -> Result<(), FixtureError> {
    let rel = app_root.join("Documents").join(crate::ios::DB_FILE);
    let abs = w.out_dir.join(&rel);
    if let Some(parent) = abs.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let fractional = truth.ios.fractional_seconds;
    let conn = Connection::open(&abs)?;
    conn.pragma_update(None, "journal_mode", "MEMORY")?;
    conn.execute_batch(
        "CREATE TABLE ZECG (
            Z_PK INTEGER PRIMARY KEY, ZUUID TEXT, ZDATERECORDED TIMESTAMP,
            ZDATESYNCED TIMESTAMP, ZHEARTRATE INTEGER, ZCOMMENT TEXT, ZFILENAME TEXT,
            ZDURATION_MS INTEGER, ZMC_ANGINA INTEGER, ZHAS_AUDIO_DESCRIPTION INTEGER,
            ZINVERTED INTEGER, Z_IS_RESTING_HEART_RATE INTEGER, ZMALE INTEGER,
            ZPATIENTFIRSTNAME TEXT, ZPATIENTLASTNAME TEXT, ZPATIENTDOB TIMESTAMP,
            ZHEIGHT REAL
        );
        CREATE TABLE ZKDMBLOODPRESSURERECORDING (
            Z_PK INTEGER PRIMARY KEY, ZDATERECORDED TIMESTAMP, ZSYSTOLIC INTEGER,
            ZDIASTOLIC INTEGER, ZHEARTRATE INTEGER, ZNOTES TEXT
        );
        CREATE TABLE ZKDMWEIGHT (
            Z_PK INTEGER PRIMARY KEY, ZDATERECORDED TIMESTAMP, ZWEIGHT REAL,
            ZHEIGHT REAL, ZSOURCE TEXT
        );
        CREATE TABLE ZOVERREADERORDER (
            Z_PK INTEGER PRIMARY KEY, ZECG INTEGER, ZRESULT TEXT,
            ZDATEREQUESTED TIMESTAMP, ZDATECOMPLETED TIMESTAMP
        );",
    )?;

    let profile = &truth.profile;
    let angina = profile.medical_conditions.iter().any(|c| c == "Angina");
    for (i, ecg) in truth.ecg_events.iter().enumerate() {
        let pk = (i + 1) as i64;
        conn.execute(
            "INSERT INTO ZECG (Z_PK, ZUUID, ZDATERECORDED, ZDATESYNCED, ZHEARTRATE,
                ZCOMMENT, ZFILENAME, ZDURATION_MS, ZMC_ANGINA, ZHAS_AUDIO_DESCRIPTION,
                ZINVERTED, Z_IS_RESTING_HEART_RATE, ZMALE, ZPATIENTFIRSTNAME,
                ZPATIENTLASTNAME, ZPATIENTDOB, ZHEIGHT)
             VALUES (?1,?2,?3,?4,?5,?6,?7,?8,?9,?10,?11,?12,?13,?14,?15,?16,?17)",
            rusqlite::params![
                pk,
                ecg.uuid,
                mac_param(ecg.recorded_at, fractional),
                ecg.synced_at.map(|at| mac_param(at, fractional)),
                ecg.heart_rate_bpm,
                ecg.comment,
                format!("{}.atc", ecg.uuid),
                ecg.duration_ms,
                angina as i64,
                ecg.has_audio as i64,
                ecg.inverted as i64,
                ecg.is_resting.map(|b| b as i64),
                profile.gender.code(),
                profile.first_name,
                profile.last_name,
                mac_param(profile.dob, fractional),
                profile.height_cm,
            ],
        )?;
        if let Some(referral) = &ecg.referred {
            conn.execute(
                "INSERT INTO ZOVERREADERORDER (ZECG, ZRESULT, ZDATEREQUESTED, ZDATECOMPLETED)
                 VALUES (?1,?2,?3,?4)",
                rusqlite::params![
                    pk,
                    referral.result,
                    mac_param(referral.requested_at, fractional),
                    referral.completed_at.map(|at| mac_param(at, fractional)),
                ],
            )?;
        }
    }
    for bp in &truth.bp_events {
        conn.execute(
            "INSERT INTO ZKDMBLOODPRESSURERECORDING
                (ZDATERECORDED, ZSYSTOLIC, ZDIASTOLIC, ZHEARTRATE, ZNOTES)
             VALUES (?1,?2,?3,?4,?5)",
            rusqlite::params![
                mac_param(bp.recorded_at, fractional),
                bp.systolic,
                bp.diastolic,
                bp.heart_rate_bpm,
                bp.notes,
            ],
        )?;
    }
    for weight in &truth.weight_events {
        conn.execute(
            "INSERT INTO ZKDMWEIGHT (ZDATERECORDED, ZWEIGHT, ZHEIGHT, ZSOURCE)
             VALUES (?1,?2,?3,?4)",
            rusqlite::params![
                mac_param(weight.recorded_at, fractional),
                weight.weight_kg,
                weight.height_cm,
                weight.source,
            ],
        )?;
    }
    drop(conn);

    let (digest, byte_size) = sha256_file(&abs)?;
    w.manifest.entries.push(ManifestEntry {
        path: normalize_rel_path(&rel).unwrap_or_default(),
        byte_size,
        digest,
    });
    Ok(())
}

// ---------------------------------------------------------------------------
// Mutations
// ---------------------------------------------------------------------------

/// Controlled corruptions, each mapping to exactly one expected warning (or
/// consistency-finding) code in the extraction pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// Cut both copies of one recording file mid-chunk → `atc_truncated`.
    TruncateAtc,
    /// Drop in an audio file matching no recording → `orphan_audio`.
    OrphanAudio,
    /// Rewrite a recording header clock +5 s → `clock_skew`.
    ClockSkew,
    /// Drop the blood-pressure table → `missing_table`.
    DropTable,
    /// Change the profile first name out from under the row snapshots
    /// → `profile_mismatch` (consistency finding).
    ProfileDesync,
    /// Flip a byte in the second copy of a recording pair (Android only)
    /// → `atc_twin_divergence`.
    DivergentTwin,
}

impl Mutation {
    pub const ALL: [Mutation; 6] = [
        Mutation::TruncateAtc,
        Mutation::OrphanAudio,
        Mutation::ClockSkew,
        Mutation::DropTable,
        Mutation::ProfileDesync,
        Mutation::DivergentTwin,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mutation::TruncateAtc => "truncate-atc",
            Mutation::OrphanAudio => "orphan-audio",
            Mutation::ClockSkew => "clock-skew",
            Mutation::DropTable => "drop-table",
            Mutation::ProfileDesync => "profile-desync",
            Mutation::DivergentTwin => "divergent-twin",
        }
    }

    /// The warning code the extraction pipeline must emit for this mutation.
    pub fn expected_warning(&self) -> Option<&'static str> {
        match self {
            Mutation::TruncateAtc => Some("atc_truncated"),
            Mutation::OrphanAudio => Some("orphan_audio"),
            Mutation::ClockSkew => Some("clock_skew"),
            Mutation::DropTable => Some("missing_table"),
            Mutation::ProfileDesync => None,
            Mutation::DivergentTwin => Some("atc_twin_divergence"),
        }
    }

    /// The consistency-finding code, for mutations surfaced by analysis
    /// rather than extraction.
    pub fn expected_finding(&self) -> Option<&'static str> {
        match self {
            Mutation::ProfileDesync => Some("profile_mismatch"),
            _ => None,
        }
    }
}

impl std::str::FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mutation::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mutation `{s}`"))
    }
}

#[derive(Debug, Clone)]
pub struct MutationReport {
    pub mutation: Mutation,
    pub description: String,
}

/// Apply one controlled corruption to a generated dump.
pub fn mutate_dump(dump_root: &Path, mutation: Mutation) -> Result<MutationReport, FixtureError> {
    if let Ok(layout) = crate::android::locate_app_root(dump_root) {
        return mutate_android(dump_root, &layout, mutation);
    }
    if let Ok(layout) = crate::ios::locate_app_root(dump_root) {
        return mutate_ios(dump_root, &layout, mutation);
    }
    Err(FixtureError::NothingToMutate)
}

fn sorted_atc_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|entries| {
            entries
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().map(|e| e == "atc").unwrap_or(false) && p.is_file())
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

/// Files in `dir` whose header carries the same UUID as the first (sorted)
/// readable file.
fn first_uuid_group(dir: &Path) -> Result<(String, Vec<PathBuf>), FixtureError> {
    let files = sorted_atc_files(dir);
    let mut first_uuid = None;
    let mut group = Vec::new();
    for path in &files {
        let bytes = std::fs::read(path)?;
        let uuid = atc::parse_atc(&bytes)
            .ok()
            .and_then(|p| p.file.info_chunk().cloned())
            .and_then(|c| atc::parse_info_chunk(&c).ok())
            .map(|i| i.info.uuid_text);
        if let Some(uuid) = uuid {
            match &first_uuid {
                None => {
                    first_uuid = Some(uuid);
                    group.push(path.clone());
                }
                Some(first) if *first == uuid => group.push(path.clone()),
                Some(_) => {}
            }
        }
    }
    first_uuid
        .map(|uuid| (uuid, group))
        .ok_or(FixtureError::NothingToMutate)
}

fn skew_atc_file(path: &Path, seconds: i64) -> Result<(), FixtureError> {
    let bytes = std::fs::read(path)?;
    let parsed = atc::parse_atc(&bytes).map_err(|_| FixtureError::NothingToMutate)?;
    let mut file = parsed.file;
    let chunk = file
        .chunks
        .iter_mut()
        .find(|c| c.id == INFO_CHUNK_ID)
        .ok_or(FixtureError::NothingToMutate)?;
    let info = atc::parse_info_chunk(chunk)
        .map_err(|_| FixtureError::NothingToMutate)?
        .info;
    let ts = ForensicTimestamp::from_iso8601(info.recorded_at_text.clone(), "mutate")
        .map_err(|e| FixtureError::InvalidTruth(e.to_string()))?;
    let skewed = ForensicTimestamp::from_epoch_millis(
        ts.utc_millis() + seconds * 1000,
        ts.offset_seconds,
        "mutate",
    )
    .map_err(|e| FixtureError::InvalidTruth(e.to_string()))?;
    let recorder: Vec<&str> = info.recorder_info.iter().map(String::as_str).collect();
    let len = chunk.payload.len();
    chunk.payload = atc::build_info_payload(
        &skewed
            .to_local()
            .map_err(|e| FixtureError::InvalidTruth(e.to_string()))?,
        &info.uuid_text,
        &recorder,
        len,
    );
    chunk.declared_len = chunk.payload.len() as u32;
    std::fs::write(path, atc::serialize_atc(&file).expect("lengths consistent"))?;
    Ok(())
}

const ORPHAN_UUID: &str = "ffffffff-ffff-4fff-8fff-ffffffffffff";

fn mutate_android(
    dump_root: &Path,
    layout: &crate::android::AndroidAppLayout,
    mutation: Mutation,
) -> Result<MutationReport, FixtureError> {
    let ecg_dir = dump_root.join(layout.ecg_dir());
    let descr = match mutation {
        Mutation::TruncateAtc => {
            let (uuid, group) = first_uuid_group(&ecg_dir)?;
            for path in &group {
                let bytes = std::fs::read(path)?;
                std::fs::write(path, &bytes[..bytes.len().min(40)])?;
            }
            format!(
                "truncated {} file(s) of recording {uuid} to 40 bytes",
                group.len()
            )
        }
        Mutation::OrphanAudio => {
            let path = dump_root
                .join(layout.audio_dir())
                .join(format!("{ORPHAN_UUID}.m4a"));
            std::fs::write(path, m4a_stub(ORPHAN_UUID))?;
            format!("planted audio note {ORPHAN_UUID}.m4a with no matching recording")
        }
        Mutation::ClockSkew => {
            let (uuid, group) = first_uuid_group(&ecg_dir)?;
            for path in &group {
                skew_atc_file(path, 5)?;
            }
            format!("skewed header clock of recording {uuid} by +5 s")
        }
        Mutation::DropTable => {
            let conn = Connection::open(dump_root.join(layout.db_path()))?;
            conn.execute_batch("DROP TABLE bp_records;")?;
            "dropped documented table bp_records".to_string()
        }
        Mutation::ProfileDesync => {
            let path = dump_root
                .join(layout.prefs_dir())
                .join(crate::android::PREFS_USERPROFILE);
            let bytes = std::fs::read(&path)?;
            let prefs = crate::prefs_xml::parse_shared_prefs(&bytes)
                .map_err(|e| FixtureError::InvalidTruth(e.to_string()))?;
            let entries: Vec<(String, PrefValue)> = prefs
                .entries
                .into_iter()
                .map(|(k, v)| {
                    if k == "first_name" {
                        (k, PrefValue::Text("Mallory".into()))
                    } else {
                        (k, v)
                    }
                })
                .collect();
            std::fs::write(&path, render_shared_prefs(&entries))?;
            "changed userprofile.xml first_name to `Mallory`".to_string()
        }
        Mutation::DivergentTwin => {
            let (uuid, group) = first_uuid_group(&ecg_dir)?;
            let twin = group
                .iter()
                .find(|p| p.to_string_lossy().ends_with(".enhanced.atc"))
                .ok_or(FixtureError::NothingToMutate)?;
            let mut bytes = std::fs::read(twin)?;
            // Flip inside the zero padding, after the UUID field, so the
            // header still parses and only the bytes diverge.
            let idx = bytes.len() - 1;
            bytes[idx] ^= 0xFF;
            std::fs::write(twin, bytes)?;
            format!("flipped one byte in the second file of recording {uuid}")
        }
    };
    Ok(MutationReport {
        mutation,
        description: descr,
    })
}

fn mutate_ios(
    dump_root: &Path,
    layout: &crate::ios::IosAppLayout,
    mutation: Mutation,
) -> Result<MutationReport, FixtureError> {
    let ecg_dir = dump_root.join(layout.ecgfiles_dir());
    let descr = match mutation {
        Mutation::TruncateAtc => {
            let (uuid, group) = first_uuid_group(&ecg_dir)?;
            for path in &group {
                let bytes = std::fs::read(path)?;
                std::fs::write(path, &bytes[..bytes.len().min(40)])?;
            }
            format!("truncated recording {uuid} to 40 bytes")
        }
        Mutation::OrphanAudio => {
            let path = dump_root
                .join(layout.documents_dir())
                .join(format!("{ORPHAN_UUID}.m4a"));
            std::fs::write(path, m4a_stub(ORPHAN_UUID))?;
            format!("planted audio note {ORPHAN_UUID}.m4a with no matching recording")
        }
        Mutation::ClockSkew => {
            let (uuid, group) = first_uuid_group(&ecg_dir)?;
            for path in &group {
                skew_atc_file(path, 5)?;
            }
            format!("skewed header clock of recording {uuid} by +5 s")
        }
        Mutation::DropTable => {
            let conn = Connection::open(dump_root.join(layout.db_path()))?;
            conn.execute_batch("DROP TABLE ZKDMBLOODPRESSURERECORDING;")?;
            "dropped documented table ZKDMBLOODPRESSURERECORDING".to_string()
        }
        Mutation::ProfileDesync => {
            let path = dump_root.join(layout.prefs_plist());
            let bytes = std::fs::read(&path)?;
            let binary = bytes.starts_with(b"bplist");
            let value = crate::propertylist::parse_plist(&bytes)
                .map_err(|e| FixtureError::InvalidTruth(e.to_string()))?;
            let mut dict = value
                .as_dict()
                .cloned()
                .ok_or_else(|| FixtureError::InvalidTruth("plist is not a dict".into()))?;
            dict.insert("first_name".into(), PlistValue::Text("Mallory".into()));
            let rebuilt = to_plist_crate_value(&PlistValue::Dict(dict));
            let mut out = Vec::new();
            if binary {
                rebuilt.to_writer_binary(&mut out)?;
            } else {
                rebuilt.to_writer_xml(&mut out)?;
            }
            std::fs::write(&path, out)?;
            "changed preferences plist first_name to `Mallory`".to_string()
        }
        Mutation::DivergentTwin => {
            return Err(FixtureError::MutationNotApplicable("divergent-twin"));
        }
    };
    Ok(MutationReport {
        mutation,
        description: descr,
    })
}

fn to_plist_crate_value(value: &PlistValue) -> plist::Value {
    match value {
        PlistValue::Boolean(b) => plist::Value::Boolean(*b),
        PlistValue::Integer(v) => plist::Value::Integer((*v).into()),
        PlistValue::Real(v) => plist::Value::Real(*v),
        PlistValue::Date(d) => plist_date(*d),
        PlistValue::Text(t) => plist::Value::String(t.clone()),
        PlistValue::Data(d) => plist::Value::Data(d.clone()),
        PlistValue::Array(items) => {
            plist::Value::Array(items.iter().map(to_plist_crate_value).collect())
        }
        PlistValue::Dict(map) => {
            let mut dict = plist::Dictionary::new();
            for (k, v) in map {
                dict.insert(k.clone(), to_plist_crate_value(v));
            }
            plist::Value::Dictionary(dict)
        }
        PlistValue::Uid(u) => plist::Value::Integer((*u).into()),
    }
}
