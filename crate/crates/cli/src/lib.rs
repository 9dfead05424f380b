//! CLI surface: scan, extract, timeline, verify and fixture generation.
//!
//! Exit codes are a stable contract:
//!
//! - `0` — success (partial-extraction warnings do not change this)
//! - `2` — usage or ground-truth-spec error
//! - `3` — no app residue found in the dump
//! - `4` — unreadable input / I/O failure
//! - `5` — verification mismatch (tampered or missing evidence)
//!
//! All diagnostics go to stderr; data goes to `--out` or stdout only.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use clap::{Parser, Subcommand, ValueEnum};

use kardiex_core::fixture::{self, CaseGroundTruth, Mutation};
use kardiex_core::model::{sha256_file, CaseFile};
use kardiex_core::{android, ios, CaseReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_FOUND: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_VERIFY_MISMATCH: i32 = 5;

#[derive(Parser)]
#[command(
    name = "kardiex",
    version,
    about = "Extract, correlate and report Kardia ECG app residue from Android and iOS filesystem dumps"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlatformArg {
    Android,
    Ios,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Detect app residue in a dump without extracting anything
    Scan {
        /// Unpacked filesystem dump root
        dump: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Full pipeline: locate, parse, correlate, timeline, findings, report
    Extract {
        dump: PathBuf,
        /// Write the report here instead of stdout
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Hash every input file before and after; any drift fails the run
        #[arg(long)]
        paranoid: bool,
        /// Pin the report's generated_at for reproducible output
        #[arg(long, value_name = "ISO8601")]
        pin_time: Option<String>,
        /// Case identifier (defaults to the dump directory name)
        #[arg(long)]
        case_id: Option<String>,
    },
    /// Extract and print only the merged timeline
    Timeline {
        dump: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, value_name = "ISO8601")]
        pin_time: Option<String>,
        #[arg(long)]
        case_id: Option<String>,
    },
    /// Recompute evidence digests against a report's manifest
    Verify {
        /// JSON report produced by `extract`
        report: PathBuf,
        dump: PathBuf,
    },
    /// Generate a synthetic dump from a ground-truth document
    GenFixture {
        /// Output directory (must be empty)
        out_dir: PathBuf,
        /// TOML ground-truth document; omit for the built-in study scenario
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PlatformArg::Both)]
        platform: PlatformArg,
        /// Seed for the built-in scenario (overrides the document's seed)
        #[arg(long)]
        seed: Option<u64>,
        /// Apply one controlled corruption after generation
        #[arg(long, value_name = "KIND")]
        mutate: Option<String>,
    },
}

/// Parse and run; returns the process exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default()).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Scan { dump, format } => cmd_scan(&dump, format),
        Command::Extract {
            dump,
            out,
            format,
            paranoid,
            pin_time,
            case_id,
        } => cmd_extract(&dump, out.as_deref(), format, paranoid, pin_time, case_id),
        Command::Timeline {
            dump,
            out,
            format,
            pin_time,
            case_id,
        } => cmd_timeline(&dump, out.as_deref(), format, pin_time, case_id),
        Command::Verify { report, dump } => cmd_verify(&report, &dump),
        Command::GenFixture {
            out_dir,
            spec,
            platform,
            seed,
            mutate,
        } => cmd_gen_fixture(&out_dir, spec.as_deref(), platform, seed, mutate),
    }
}

fn detect_cases(dump: &Path) -> Result<Vec<CaseFile>, i32> {
    if !dump.is_dir() {
        eprintln!("error: `{}` is not a readable directory", dump.display());
        return Err(EXIT_IO);
    }
    let mut cases = Vec::new();
    match android::extract(dump) {
        Ok(case) => cases.push(case),
        Err(android::ExtractError::AppNotFound(_)) => {}
        Err(e) => {
            eprintln!("error: android extraction failed: {e}");
            return Err(EXIT_IO);
        }
    }
    match ios::extract(dump) {
        Ok(case) => cases.push(case),
        Err(android::ExtractError::AppNotFound(_)) => {}
        Err(e) => {
            eprintln!("error: ios extraction failed: {e}");
            return Err(EXIT_IO);
        }
    }
    Ok(cases)
}

fn parse_pin_time(pin_time: Option<String>) -> Result<DateTime<Utc>, i32> {
    match pin_time {
        None => Ok(Utc::now()),
        Some(text) => DateTime::parse_from_rfc3339(&text)
            .map(|dt| dt.with_timezone(&Utc))
            .map_err(|e| {
                eprintln!("error: --pin-time `{text}` is not ISO-8601: {e}");
                EXIT_USAGE
            }),
    }
}

fn emit(out: Option<&Path>, payload: &str) -> i32 {
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, payload) {
                eprintln!("error: cannot write `{}`: {e}", path.display());
                return EXIT_IO;
            }
            EXIT_OK
        }
        None => {
            let mut stdout = std::io::stdout();
            if stdout.write_all(payload.as_bytes()).is_err() {
                return EXIT_IO;
            }
            EXIT_OK
        }
    }
}

fn default_case_id(dump: &Path, case_id: Option<String>) -> String {
    case_id.unwrap_or_else(|| {
        dump.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "case".to_string())
    })
}

fn cmd_scan(dump: &Path, format: Format) -> i32 {
    if !dump.is_dir() {
        eprintln!("error: `{}` is not a readable directory", dump.display());
        return EXIT_IO;
    }
    let mut found = Vec::new();
    if let Ok(layout) = android::locate_app_root(dump) {
        let files = count_files(&dump.join(&layout.app_root));
        found.push(("android", layout.app_root, files));
    }
    if let Ok(layout) = ios::locate_app_root(dump) {
        let files = count_files(&dump.join(&layout.app_root));
        found.push(("ios", layout.app_root, files));
    }
    let payload = match format {
        Format::Json => {
            let entries: Vec<serde_json::Value> = found
                .iter()
                .map(|(platform, root, files)| {
                    serde_json::json!({
                        "platform": platform,
                        "app_root": root.to_string_lossy(),
                        "files": files,
                    })
                })
                .collect();
            format!(
                "{}\n",
                serde_json::to_string_pretty(&serde_json::json!({ "detected": entries }))
                    .expect("scan json")
            )
        }
        _ => {
            let mut text = String::new();
            for (platform, root, files) in &found {
                text.push_str(&format!(
                    "{platform}: {} ({files} files)\n",
                    root.to_string_lossy()
                ));
            }
            if found.is_empty() {
                text.push_str("no app residue detected\n");
            }
            text
        }
    };
    let code = emit(None, &payload);
    if code != EXIT_OK {
        return code;
    }
    if found.is_empty() {
        EXIT_NOT_FOUND
    } else {
        EXIT_OK
    }
}

fn count_files(root: &Path) -> usize {
    walkdir_count(root)
}

fn walkdir_count(root: &Path) -> usize {
    fn walk(dir: &Path, n: &mut usize) {
        if let Ok(entries) = std::fs::read_dir(dir) {
            for entry in entries.flatten() {
                let path = entry.path();
                if path.is_dir() {
                    walk(&path, n);
                } else {
                    *n += 1;
                }
            }
        }
    }
    let mut n = 0;
    walk(root, &mut n);
    n
}

fn build_report(
    dump: &Path,
    pin_time: Option<String>,
    case_id: Option<String>,
) -> Result<CaseReport, i32> {
    let generated_at = parse_pin_time(pin_time)?;
    let cases = detect_cases(dump)?;
    if cases.is_empty() {
        eprintln!("error: no app residue found under `{}`", dump.display());
        return Err(EXIT_NOT_FOUND);
    }
    for case in &cases {
        log::info!(
            "{}: {} recordings, {} warnings",
            case.platform.as_str(),
            case.ecgs.len(),
            case.warnings.len()
        );
    }
    Ok(CaseReport::assemble(
        cases,
        default_case_id(dump, case_id),
        generated_at,
    ))
}

fn cmd_extract(
    dump: &Path,
    out: Option<&Path>,
    format: Format,
    paranoid: bool,
    pin_time: Option<String>,
    case_id: Option<String>,
) -> i32 {
    let before = if paranoid {
        match fixture::hash_tree(dump) {
            Ok(m) => Some(m),
            Err(e) => {
                eprintln!("error: paranoid pre-hash failed: {e}");
                return EXIT_IO;
            }
        }
    } else {
        None
    };

    let report = match build_report(dump, pin_time, case_id) {
        Ok(report) => report,
        Err(code) => return code,
    };
    let payload = match format {
        Format::Json => report.to_canonical_json(),
        Format::Text => report.to_text(),
        Format::Csv => report.timeline_csv(),
    };
    let code = emit(out, &payload);
    if code != EXIT_OK {
        return code;
    }

    if let Some(before) = before {
        let after = match fixture::hash_tree(dump) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("error: paranoid post-hash failed: {e}");
                return EXIT_IO;
            }
        };
        if before != after {
            eprintln!("error: input digests changed during extraction");
            for (b, a) in before.entries.iter().zip(after.entries.iter()) {
                if b != a {
                    eprintln!("  {} -> {} ({})", b.digest, a.digest, b.path);
                }
            }
            return EXIT_VERIFY_MISMATCH;
        }
        eprintln!("paranoid: {} input files unchanged", after.entries.len());
    }
    EXIT_OK
}

fn cmd_timeline(
    dump: &Path,
    out: Option<&Path>,
    format: Format,
    pin_time: Option<String>,
    case_id: Option<String>,
) -> i32 {
    let report = match build_report(dump, pin_time, case_id) {
        Ok(report) => report,
        Err(code) => return code,
    };
    let payload = match format {
        Format::Csv => report.timeline_csv(),
        Format::Json => {
            let mut text = serde_json::to_string_pretty(&serde_json::json!({
                "case_id": report.case_id,
                "timeline": report.timeline,
                "quarantined": report.quarantined,
            }))
            .expect("timeline json");
            text.push('\n');
            text
        }
        Format::Text => {
            let mut text = String::new();
            for event in &report.timeline {
                text.push_str(&format!(
                    "{}  {:<16} {}\n",
                    event.utc.to_rfc3339_opts(SecondsFormat::Millis, true),
                    event.kind.as_str(),
                    event.payload
                ));
            }
            text
        }
    };
    emit(out, &payload)
}

fn cmd_verify(report_path: &Path, dump: &Path) -> i32 {
    let text = match std::fs::read_to_string(report_path) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read report `{}`: {e}", report_path.display());
            return EXIT_IO;
        }
    };
    let report = match CaseReport::from_json(&text) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: report is not valid JSON for this schema: {e}");
            return EXIT_USAGE;
        }
    };
    let mut issues = Vec::new();
    for item in &report.evidence {
        let path = dump.join(&item.dump_relative_path);
        if !path.is_file() {
            issues.push(format!("absent    {}", item.dump_relative_path));
            continue;
        }
        match sha256_file(&path) {
            Ok((digest, _)) if digest == item.digest => {}
            Ok((digest, _)) => {
                issues.push(format!(
                    "mismatch  {} (expected {}, found {})",
                    item.dump_relative_path, item.digest, digest
                ));
            }
            Err(e) => issues.push(format!("unreadable {} ({e})", item.dump_relative_path)),
        }
    }
    if issues.is_empty() {
        println!("ok: {} evidence items verified", report.evidence.len());
        EXIT_OK
    } else {
        for issue in &issues {
            println!("{issue}");
        }
        EXIT_VERIFY_MISMATCH
    }
}

fn cmd_gen_fixture(
    out_dir: &Path,
    spec: Option<&Path>,
    platform: PlatformArg,
    seed: Option<u64>,
    mutate: Option<String>,
) -> i32 {
    let truth = match spec {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(text) => text,
                Err(e) => {
                    eprintln!("error: cannot read spec `{}`: {e}", path.display());
                    return EXIT_IO;
                }
            };
            match CaseGroundTruth::from_toml_str(&text) {
                Ok(mut truth) => {
                    if let Some(seed) = seed {
                        truth.seed = seed;
                    }
                    truth
                }
                Err(e) => {
                    eprintln!("error: ground-truth document: {e}");
                    return EXIT_USAGE;
                }
            }
        }
        None => CaseGroundTruth::default_scenario(seed.unwrap_or(42)),
    };

    let result = match platform {
        PlatformArg::Android => fixture::gen_android_dump(&truth, out_dir),
        PlatformArg::Ios => fixture::gen_ios_dump(&truth, out_dir),
        PlatformArg::Both => fixture::gen_dual_dump(&truth, out_dir),
    };
    let manifest = match result {
        Ok(manifest) => manifest,
        Err(fixture::FixtureError::OutDirNotEmpty(dir)) => {
            eprintln!("error: output directory `{}` is not empty", dir.display());
            return EXIT_USAGE;
        }
        Err(fixture::FixtureError::InvalidTruth(msg)) | Err(fixture::FixtureError::Spec(msg)) => {
            eprintln!("error: ground truth: {msg}");
            return EXIT_USAGE;
        }
        Err(e) => {
            eprintln!("error: generation failed: {e}");
            return EXIT_IO;
        }
    };

    if let Some(kind) = mutate {
        let mutation: Mutation = match kind.parse() {
            Ok(m) => m,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        };
        match fixture::mutate_dump(out_dir, mutation) {
            Ok(report) => eprintln!("mutated: {}", report.description),
            Err(e) => {
                eprintln!("error: mutation failed: {e}");
                return EXIT_USAGE;
            }
        }
    }

    if truth.ecg_events.iter().any(|e| e.referred.is_some()) {
        eprintln!(
            "note: referral result strings use a synthetic placeholder vocabulary \
             (Normal / Possible AF / Unreadable)"
        );
    }
    let manifest_text = manifest.render();
    if let Err(e) = std::fs::write(out_dir.join("manifest.txt"), &manifest_text) {
        eprintln!("error: cannot write manifest: {e}");
        return EXIT_IO;
    }
    eprintln!(
        "generated {} files under `{}`",
        manifest.entries.len(),
        out_dir.display()
    );
    emit(None, &manifest_text)
}
