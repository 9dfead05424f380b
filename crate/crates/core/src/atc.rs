//! Parser and serializer for the Kardia `.atc` ECG file format.
//!
//! Layout, as observed in recovered files:
//!
//! ```text
//! 0x00  8 bytes   magic "ALIVE\0\0\0"
//! 0x08  u32 LE    format version (observed: 3)
//! 0x0C  chunks    4-byte ASCII id, u32 LE payload length, payload bytes
//! ```
//!
//! The `info` chunk holds, at fixed offsets inside its payload, a NUL-padded
//! ISO-8601 recording datetime with zone offset (32 bytes), a NUL-padded UUID
//! (40 bytes) and a sequence of NUL-terminated recorder strings (device
//! model, app/OS versions). Only the header region is documented; everything
//! after it is walked generically and preserved verbatim, including unknown
//! chunk ids. No sample encoding is assumed.
//!
//! Parsing is fully bounds-checked: malformed or truncated input produces an
//! error or a warning with salvaged bytes, never a panic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ATC_MAGIC: [u8; 8] = *b"ALIVE\0\0\0";
/// The only format version observed in recovered files.
pub const OBSERVED_FORMAT_VERSION: u32 = 3;
pub const INFO_CHUNK_ID: [u8; 4] = *b"info";
/// Observed `info` chunk payload length.
pub const INFO_CHUNK_OBSERVED_LEN: usize = 264;
/// NUL-padded datetime field: payload offset 0, 32 bytes (file offset 0x14).
pub const INFO_DATETIME_FIELD_LEN: usize = 32;
/// NUL-padded UUID field: payload offset 32, 40 bytes (file offset 0x34).
pub const INFO_UUID_FIELD_LEN: usize = 40;
/// Recorder strings start at payload offset 72 (file offset 0x5C).
pub const INFO_STRINGS_OFFSET: usize = INFO_DATETIME_FIELD_LEN + INFO_UUID_FIELD_LEN;

const PREAMBLE_LEN: usize = 12;
const CHUNK_HEADER_LEN: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum AtcError {
    #[error("bad magic {0:02x?}, expected \"ALIVE\" followed by three NUL bytes")]
    BadMagic(Vec<u8>),
    #[error("input holds {0} bytes, shorter than the 12-byte preamble")]
    TruncatedPreamble(usize),
    #[error("chunk `{id}` declares {declared} payload bytes but holds {actual}")]
    LengthMismatch {
        id: String,
        declared: u32,
        actual: usize,
    },
    #[error("chunk id is `{0}`, not `info`")]
    NotInfoChunk(String),
}

/// Non-fatal findings produced while parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtcWarning {
    /// Input ended mid-chunk; the undersized tail was salvaged verbatim.
    Truncation { at_offset: usize, salvaged: usize },
    /// A format version other than the observed value 3.
    UnexpectedVersion(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtcChunk {
    pub id: [u8; 4],
    pub declared_len: u32,
    pub payload: Vec<u8>,
}

impl AtcChunk {
    pub fn new(id: [u8; 4], payload: Vec<u8>) -> Self {
        AtcChunk {
            id,
            declared_len: payload.len() as u32,
            payload,
        }
    }

    pub fn id_string(&self) -> String {
        self.id.iter().map(|&b| b as char).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtcFile {
    pub magic: [u8; 8],
    pub format_version: u32,
    pub chunks: Vec<AtcChunk>,
    /// Bytes salvaged from a truncated trailing chunk, reproduced verbatim on
    /// serialization so even damaged files round-trip byte-exactly.
    pub trailing: Vec<u8>,
}

impl AtcFile {
    pub fn new(chunks: Vec<AtcChunk>) -> Self {
        AtcFile {
            magic: ATC_MAGIC,
            format_version: OBSERVED_FORMAT_VERSION,
            chunks,
            trailing: Vec::new(),
        }
    }

    pub fn info_chunk(&self) -> Option<&AtcChunk> {
        self.chunks.iter().find(|c| c.id == INFO_CHUNK_ID)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtcParse {
    pub file: AtcFile,
    pub warnings: Vec<AtcWarning>,
}

/// Walk the full chunk structure of `bytes`.
///
/// A partial trailing chunk is not an error: its bytes are salvaged into
/// [`AtcFile::trailing`] and a [`AtcWarning::Truncation`] is reported.
pub fn parse_atc(bytes: &[u8]) -> Result<AtcParse, AtcError> {
    if bytes.len() < 8 {
        return Err(AtcError::TruncatedPreamble(bytes.len()));
    }
    if bytes[..8] != ATC_MAGIC {
        return Err(AtcError::BadMagic(bytes[..8].to_vec()));
    }
    if bytes.len() < PREAMBLE_LEN {
        return Err(AtcError::TruncatedPreamble(bytes.len()));
    }
    let format_version = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]);
    let mut warnings = Vec::new();
    if format_version != OBSERVED_FORMAT_VERSION {
        warnings.push(AtcWarning::UnexpectedVersion(format_version));
    }

    let mut chunks = Vec::new();
    let mut trailing = Vec::new();
    let mut pos = PREAMBLE_LEN;
    while pos < bytes.len() {
        let remaining = &bytes[pos..];
        if remaining.len() < CHUNK_HEADER_LEN {
            warnings.push(AtcWarning::Truncation {
                at_offset: pos,
                salvaged: remaining.len(),
            });
            trailing = remaining.to_vec();
            break;
        }
        let id = [remaining[0], remaining[1], remaining[2], remaining[3]];
        let declared =
            u32::from_le_bytes([remaining[4], remaining[5], remaining[6], remaining[7]]) as usize;
        let body = &remaining[CHUNK_HEADER_LEN..];
        if body.len() < declared {
            warnings.push(AtcWarning::Truncation {
                at_offset: pos,
                salvaged: remaining.len(),
            });
            trailing = remaining.to_vec();
            break;
        }
        chunks.push(AtcChunk {
            id,
            declared_len: declared as u32,
            payload: body[..declared].to_vec(),
        });
        pos += CHUNK_HEADER_LEN + declared;
    }

    Ok(AtcParse {
        file: AtcFile {
            magic: ATC_MAGIC,
            format_version,
            chunks,
            trailing,
        },
        warnings,
    })
}

/// Byte-exact inverse of [`parse_atc`] on its output.
pub fn serialize_atc(file: &AtcFile) -> Result<Vec<u8>, AtcError> {
    let mut out = Vec::with_capacity(
        PREAMBLE_LEN
            + file
                .chunks
                .iter()
                .map(|c| CHUNK_HEADER_LEN + c.payload.len())
                .sum::<usize>()
            + file.trailing.len(),
    );
    out.extend_from_slice(&file.magic);
    out.extend_from_slice(&file.format_version.to_le_bytes());
    for chunk in &file.chunks {
        if chunk.declared_len as usize != chunk.payload.len() {
            return Err(AtcError::LengthMismatch {
                id: chunk.id_string(),
                declared: chunk.declared_len,
                actual: chunk.payload.len(),
            });
        }
        out.extend_from_slice(&chunk.id);
        out.extend_from_slice(&chunk.declared_len.to_le_bytes());
        out.extend_from_slice(&chunk.payload);
    }
    out.extend_from_slice(&file.trailing);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfoWarning {
    /// Datetime field did not parse as ISO-8601; raw text preserved.
    InvalidDatetime(String),
    /// UUID field did not match the 8-4-4-4-12 hex pattern; raw text preserved.
    InvalidUuid(String),
    /// Payload shorter than the fixed 72-byte field region; fell back to
    /// NUL-delimited scanning.
    ShortPayload(usize),
    /// Recorder string region held non-UTF-8 bytes; remainder kept raw.
    NonUtf8Strings,
}

/// Decoded view of the `info` chunk. The chunk payload itself stays verbatim
/// in the [`AtcChunk`]; this struct never needs to serialize back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoChunk {
    pub recorded_at_text: String,
    pub uuid_text: String,
    pub recorder_info: Vec<String>,
    pub trailing_raw: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoParse {
    pub info: InfoChunk,
    pub warnings: Vec<InfoWarning>,
}

/// Slice the `info` chunk payload at its fixed offsets and validate the
/// datetime and UUID fields. Validation failures downgrade to warnings with
/// the raw text preserved.
pub fn parse_info_chunk(chunk: &AtcChunk) -> Result<InfoParse, AtcError> {
    if chunk.id != INFO_CHUNK_ID {
        return Err(AtcError::NotInfoChunk(chunk.id_string()));
    }
    let payload = &chunk.payload;
    let mut warnings = Vec::new();

    let (recorded_at_text, uuid_text, strings_region) = if payload.len() >= INFO_STRINGS_OFFSET {
        (
            trim_nul(&payload[..INFO_DATETIME_FIELD_LEN]),
            trim_nul(&payload[INFO_DATETIME_FIELD_LEN..INFO_STRINGS_OFFSET]),
            &payload[INFO_STRINGS_OFFSET..],
        )
    } else {
        // Undersized payload: fall back to scanning NUL-delimited fields.
        warnings.push(InfoWarning::ShortPayload(payload.len()));
        let mut fields = payload
            .split(|&b| b == 0)
            .filter(|s| !s.is_empty())
            .map(|s| String::from_utf8_lossy(s).into_owned());
        (
            fields.next().unwrap_or_default(),
            fields.next().unwrap_or_default(),
            &payload[payload.len()..],
        )
    };

    if chrono::DateTime::parse_from_rfc3339(&recorded_at_text).is_err() {
        warnings.push(InfoWarning::InvalidDatetime(recorded_at_text.clone()));
    }
    if !is_uuid(&uuid_text) {
        warnings.push(InfoWarning::InvalidUuid(uuid_text.clone()));
    }

    let (recorder_info, trailing_raw, utf8_ok) = scan_recorder_strings(strings_region);
    if !utf8_ok {
        warnings.push(InfoWarning::NonUtf8Strings);
    }

    Ok(InfoParse {
        info: InfoChunk {
            recorded_at_text,
            uuid_text,
            recorder_info,
            trailing_raw,
        },
        warnings,
    })
}

/// Build an `info` payload at the documented offsets, zero-padded to
/// `total_len` (use [`INFO_CHUNK_OBSERVED_LEN`] for conformant files).
pub fn build_info_payload(
    recorded_at_text: &str,
    uuid_text: &str,
    recorder_info: &[&str],
    total_len: usize,
) -> Vec<u8> {
    let mut payload = vec![0u8; total_len.max(INFO_STRINGS_OFFSET)];
    let dt = recorded_at_text.as_bytes();
    let n = dt.len().min(INFO_DATETIME_FIELD_LEN - 1);
    payload[..n].copy_from_slice(&dt[..n]);
    let uu = uuid_text.as_bytes();
    let n = uu.len().min(INFO_UUID_FIELD_LEN - 1);
    payload[INFO_DATETIME_FIELD_LEN..INFO_DATETIME_FIELD_LEN + n].copy_from_slice(&uu[..n]);
    let mut pos = INFO_STRINGS_OFFSET;
    for s in recorder_info {
        let b = s.as_bytes();
        if pos + b.len() + 1 > payload.len() {
            break;
        }
        payload[pos..pos + b.len()].copy_from_slice(b);
        pos += b.len() + 1; // NUL terminator
    }
    payload
}

fn trim_nul(bytes: &[u8]) -> String {
    let end = bytes.iter().position(|&b| b == 0).unwrap_or(bytes.len());
    String::from_utf8_lossy(&bytes[..end]).into_owned()
}

/// Sequential NUL-terminated strings; an empty string (double NUL) or end of
/// region terminates the sequence. Returns (strings, residual bytes after the
/// sequence if any are non-zero, utf8_ok).
fn scan_recorder_strings(region: &[u8]) -> (Vec<String>, Vec<u8>, bool) {
    let mut strings = Vec::new();
    let mut pos = 0;
    while pos < region.len() {
        let rest = &region[pos..];
        let end = rest.iter().position(|&b| b == 0).unwrap_or(rest.len());
        if end == 0 {
            pos += 1;
            break;
        }
        match std::str::from_utf8(&rest[..end]) {
            Ok(s) => strings.push(s.to_string()),
            Err(_) => {
                return (strings, rest.to_vec(), false);
            }
        }
        pos += end + 1;
    }
    let residual = &region[pos.min(region.len())..];
    if residual.iter().any(|&b| b != 0) {
        (strings, residual.to_vec(), true)
    } else {
        (strings, Vec::new(), true)
    }
}

/// 8-4-4-4-12 lowercase-or-uppercase hex with hyphens.
pub fn is_uuid(s: &str) -> bool {
    let bytes = s.as_bytes();
    if bytes.len() != 36 {
        return false;
    }
    for (i, &b) in bytes.iter().enumerate() {
        match i {
            8 | 13 | 18 | 23 => {
                if b != b'-' {
                    return false;
                }
            }
            _ => {
                if !b.is_ascii_hexdigit() {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIGURE_DATETIME: &str = "2018-05-24T14:55:59.115-05:00";
    const FIGURE_UUID: &str = "3db73498-32a0-4293-b5f0-7616162c55d8";

    /// The header bytes as recovered with FTK, zero-padded to the declared
    /// 264-byte info length (total 284 bytes).
    fn figure_bytes() -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"ALIVE\0\0\0");
        bytes.extend_from_slice(&[0x03, 0x00, 0x00, 0x00]);
        bytes.extend_from_slice(b"info");
        bytes.extend_from_slice(&[0x08, 0x01, 0x00, 0x00]); // 264 LE
        let mut payload = vec![0u8; 264];
        payload[..29].copy_from_slice(FIGURE_DATETIME.as_bytes());
        payload[32..68].copy_from_slice(FIGURE_UUID.as_bytes());
        bytes.extend_from_slice(&payload);
        bytes
    }

    #[test]
    fn figure_header_parses() {
        let bytes = figure_bytes();
        let parsed = parse_atc(&bytes).unwrap();
        assert!(parsed.warnings.is_empty());
        assert_eq!(parsed.file.format_version, 3);
        assert_eq!(parsed.file.chunks.len(), 1);
        let chunk = &parsed.file.chunks[0];
        assert_eq!(chunk.id, INFO_CHUNK_ID);
        assert_eq!(chunk.declared_len, 264);

        let info = parse_info_chunk(chunk).unwrap();
        assert!(info.warnings.is_empty());
        assert_eq!(info.info.recorded_at_text, FIGURE_DATETIME);
        assert_eq!(info.info.uuid_text, FIGURE_UUID);
        assert!(info.info.recorder_info.is_empty());
        assert!(info.info.trailing_raw.is_empty());
    }

    #[test]
    fn figure_field_offsets_match_hex_dump() {
        let bytes = figure_bytes();
        // Datetime begins at absolute offset 0x14, UUID at 0x34.
        assert_eq!(&bytes[0x14..0x14 + 29], FIGURE_DATETIME.as_bytes());
        assert_eq!(&bytes[0x31..0x34], &[0, 0, 0]);
        assert_eq!(&bytes[0x34..0x34 + 36], FIGURE_UUID.as_bytes());
        assert_eq!(bytes.len(), 284);
    }

    #[test]
    fn figure_round_trips_byte_exact() {
        let bytes = figure_bytes();
        let parsed = parse_atc(&bytes).unwrap();
        assert_eq!(serialize_atc(&parsed.file).unwrap(), bytes);
    }

    #[test]
    fn preamble_only_is_minimal_valid_file() {
        let mut bytes = ATC_MAGIC.to_vec();
        bytes.extend_from_slice(&3u32.to_le_bytes());
        let parsed = parse_atc(&bytes).unwrap();
        assert!(parsed.file.chunks.is_empty());
        assert!(parsed.warnings.is_empty());
        assert_eq!(serialize_atc(&parsed.file).unwrap(), bytes);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut bytes = figure_bytes();
        bytes[0] = b'B';
        assert!(matches!(parse_atc(&bytes), Err(AtcError::BadMagic(_))));
    }

    #[test]
    fn short_input_is_truncated_preamble() {
        assert_eq!(parse_atc(b"ALIVE"), Err(AtcError::TruncatedPreamble(5)));
        let mut bytes = ATC_MAGIC.to_vec();
        bytes.push(3);
        assert_eq!(parse_atc(&bytes), Err(AtcError::TruncatedPreamble(9)));
    }

    #[test]
    fn partial_trailing_chunk_is_salvaged() {
        let mut bytes = figure_bytes();
        bytes.truncate(40);
        let parsed = parse_atc(&bytes).unwrap();
        assert!(parsed.file.chunks.is_empty());
        assert_eq!(
            parsed.warnings,
            vec![AtcWarning::Truncation {
                at_offset: 12,
                salvaged: 28
            }]
        );
        // Salvaged bytes reproduce the input exactly.
        assert_eq!(serialize_atc(&parsed.file).unwrap(), bytes);
    }

    #[test]
    fn unexpected_version_parses_with_warning() {
        let mut bytes = figure_bytes();
        bytes[8] = 4;
        let parsed = parse_atc(&bytes).unwrap();
        assert_eq!(parsed.warnings, vec![AtcWarning::UnexpectedVersion(4)]);
        assert_eq!(parsed.file.chunks.len(), 1);
    }

    #[test]
    fn all_nul_payload_warns_on_both_fields() {
        let chunk = AtcChunk::new(INFO_CHUNK_ID, vec![0u8; 264]);
        let parsed = parse_info_chunk(&chunk).unwrap();
        assert_eq!(parsed.info.recorded_at_text, "");
        assert_eq!(parsed.info.uuid_text, "");
        assert!(parsed.info.recorder_info.is_empty());
        assert!(parsed
            .warnings
            .iter()
            .any(|w| matches!(w, InfoWarning::InvalidDatetime(_))));
        assert!(parsed
            .warnings
            .iter()
            .any(|w| matches!(w, InfoWarning::InvalidUuid(_))));
    }

    #[test]
    fn recorder_strings_read_back() {
        let payload = build_info_payload(
            FIGURE_DATETIME,
            FIGURE_UUID,
            &["Galaxy S4", "Kardia 5.1.2"],
            264,
        );
        let chunk = AtcChunk::new(INFO_CHUNK_ID, payload);
        let parsed = parse_info_chunk(&chunk).unwrap();
        assert!(parsed.warnings.is_empty());
        assert_eq!(
            parsed.info.recorder_info,
            vec!["Galaxy S4".to_string(), "Kardia 5.1.2".to_string()]
        );
    }

    #[test]
    fn undersized_payload_falls_back_to_nul_scanning() {
        let mut payload = Vec::new();
        payload.extend_from_slice(FIGURE_DATETIME.as_bytes());
        payload.push(0);
        payload.extend_from_slice(FIGURE_UUID.as_bytes());
        let chunk = AtcChunk::new(INFO_CHUNK_ID, payload);
        let parsed = parse_info_chunk(&chunk).unwrap();
        assert!(parsed
            .warnings
            .iter()
            .any(|w| matches!(w, InfoWarning::ShortPayload(_))));
        assert_eq!(parsed.info.recorded_at_text, FIGURE_DATETIME);
        assert_eq!(parsed.info.uuid_text, FIGURE_UUID);
    }

    #[test]
    fn residual_bytes_after_strings_are_preserved() {
        let mut payload = build_info_payload(FIGURE_DATETIME, FIGURE_UUID, &["Galaxy S4"], 264);
        // Something lives past the string sequence terminator.
        payload[200] = 0xAB;
        payload[201] = 0xCD;
        let parsed = parse_info_chunk(&AtcChunk::new(INFO_CHUNK_ID, payload)).unwrap();
        assert_eq!(parsed.info.recorder_info, vec!["Galaxy S4".to_string()]);
        assert!(!parsed.info.trailing_raw.is_empty());
        assert!(parsed.info.trailing_raw.contains(&0xAB));
    }

    #[test]
    fn non_info_chunk_is_rejected() {
        let chunk = AtcChunk::new(*b"ecgs", vec![0; 8]);
        assert_eq!(
            parse_info_chunk(&chunk),
            Err(AtcError::NotInfoChunk("ecgs".into()))
        );
    }

    #[test]
    fn length_mismatch_is_a_serialize_error() {
        let mut chunk = AtcChunk::new(INFO_CHUNK_ID, vec![0; 16]);
        chunk.declared_len = 99;
        let file = AtcFile::new(vec![chunk]);
        assert!(matches!(
            serialize_atc(&file),
            Err(AtcError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn uuid_validation() {
        assert!(is_uuid("3db73498-32a0-4293-b5f0-7616162c55d8"));
        assert!(!is_uuid("3db73498-32a0-4293-b5f0-7616162c55d"));
        assert!(!is_uuid("3db73498x32a0-4293-b5f0-7616162c55d8"));
        assert!(!is_uuid(""));
    }
}
