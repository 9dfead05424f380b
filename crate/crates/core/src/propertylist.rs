//! Property list reader: Apple XML plists and the `bplist00` binary format.
//!
//! The binary reader implements the standard object table — booleans,
//! integers, reals, dates (CFAbsoluteTime, i.e. seconds since 2001-01-01Z),
//! ASCII and UTF-16 strings, data, UIDs, arrays and dictionaries — with the
//! offset table and trailer resolved bounds-checked. Reference cycles are cut
//! by a depth limit; nothing here can panic on hostile input.

use std::collections::BTreeMap;

use base64::Engine;
use chrono::{DateTime, Utc};
use quick_xml::events::Event;
use quick_xml::{Reader, XmlVersion};
use thiserror::Error;

use crate::timestamp::mac_seconds_to_utc;

#[derive(Debug, Error, PartialEq)]
pub enum PlistError {
    #[error("malformed plist: {0}")]
    MalformedPlist(String),
    #[error("unsupported plist version `{0}`")]
    UnsupportedPlistVersion(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlistValue {
    Boolean(bool),
    Integer(i64),
    Real(f64),
    Date(DateTime<Utc>),
    Text(String),
    Data(Vec<u8>),
    Array(Vec<PlistValue>),
    Dict(BTreeMap<String, PlistValue>),
    Uid(u64),
}

impl PlistValue {
    pub fn as_dict(&self) -> Option<&BTreeMap<String, PlistValue>> {
        match self {
            PlistValue::Dict(d) => Some(d),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            PlistValue::Text(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            PlistValue::Integer(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            PlistValue::Integer(v) => Some(*v as f64),
            PlistValue::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_date(&self) -> Option<DateTime<Utc>> {
        match self {
            PlistValue::Date(d) => Some(*d),
            _ => None,
        }
    }

    /// Human rendering for opaque-key cataloging.
    pub fn render(&self) -> String {
        match self {
            PlistValue::Boolean(b) => b.to_string(),
            PlistValue::Integer(v) => v.to_string(),
            PlistValue::Real(v) => v.to_string(),
            PlistValue::Date(d) => d.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            PlistValue::Text(t) => t.clone(),
            PlistValue::Data(d) => format!("<{} bytes>", d.len()),
            PlistValue::Array(a) => format!("<array of {}>", a.len()),
            PlistValue::Dict(d) => format!("<dict of {}>", d.len()),
            PlistValue::Uid(u) => format!("uid:{u}"),
        }
    }
}

/// Dispatch on the magic: `bplist` prefix means binary, anything else is
/// treated as XML.
pub fn parse_plist(bytes: &[u8]) -> Result<PlistValue, PlistError> {
    if bytes.starts_with(b"bplist") {
        parse_binary(bytes)
    } else {
        parse_xml(bytes)
    }
}

// ---------------------------------------------------------------------------
// Binary form
// ---------------------------------------------------------------------------

const TRAILER_LEN: usize = 32;
const MAX_DEPTH: usize = 256;

fn parse_binary(bytes: &[u8]) -> Result<PlistValue, PlistError> {
    let version = &bytes[6..bytes.len().min(8)];
    if version != b"00" {
        return Err(PlistError::UnsupportedPlistVersion(format!(
            "bplist{}",
            String::from_utf8_lossy(version)
        )));
    }
    if bytes.len() < 8 + 1 + 1 + TRAILER_LEN {
        return Err(PlistError::MalformedPlist("binary plist too short".into()));
    }
    let trailer = &bytes[bytes.len() - TRAILER_LEN..];
    let offset_int_size = trailer[6] as usize;
    let object_ref_size = trailer[7] as usize;
    let num_objects = be_u64(&trailer[8..16]) as usize;
    let top_object = be_u64(&trailer[16..24]) as usize;
    let offset_table_start = be_u64(&trailer[24..32]) as usize;

    if !(1..=8).contains(&offset_int_size) || !(1..=8).contains(&object_ref_size) {
        return Err(PlistError::MalformedPlist("trailer int sizes".into()));
    }
    if num_objects == 0 || top_object >= num_objects {
        return Err(PlistError::MalformedPlist("trailer object counts".into()));
    }
    let table_len = num_objects
        .checked_mul(offset_int_size)
        .ok_or_else(|| PlistError::MalformedPlist("offset table overflow".into()))?;
    let table = bytes
        .get(offset_table_start..offset_table_start + table_len)
        .ok_or_else(|| PlistError::MalformedPlist("offset table out of bounds".into()))?;

    let mut offsets = Vec::with_capacity(num_objects);
    for i in 0..num_objects {
        offsets.push(be_uint(&table[i * offset_int_size..(i + 1) * offset_int_size]) as usize);
    }

    let ctx = BinaryCtx {
        bytes,
        offsets,
        object_ref_size,
    };
    ctx.decode_object(top_object, 0)
}

struct BinaryCtx<'a> {
    bytes: &'a [u8],
    offsets: Vec<usize>,
    object_ref_size: usize,
}

impl BinaryCtx<'_> {
    fn decode_object(&self, index: usize, depth: usize) -> Result<PlistValue, PlistError> {
        if depth > MAX_DEPTH {
            return Err(PlistError::MalformedPlist(
                "object graph deeper than 256 (reference cycle?)".into(),
            ));
        }
        let offset = *self
            .offsets
            .get(index)
            .ok_or_else(|| PlistError::MalformedPlist(format!("object ref {index}")))?;
        let marker = *self
            .bytes
            .get(offset)
            .ok_or_else(|| PlistError::MalformedPlist("object offset out of bounds".into()))?;
        let low = (marker & 0x0F) as usize;
        match marker >> 4 {
            0x0 => match marker {
                0x08 => Ok(PlistValue::Boolean(false)),
                0x09 => Ok(PlistValue::Boolean(true)),
                other => Err(PlistError::MalformedPlist(format!(
                    "unsupported singleton marker 0x{other:02x}"
                ))),
            },
            0x1 => {
                // Integer, 2^low bytes big-endian.
                let size = 1usize
                    .checked_shl(low as u32)
                    .filter(|s| *s <= 8)
                    .ok_or_else(|| PlistError::MalformedPlist("oversized integer".into()))?;
                let raw = self.take(offset + 1, size)?;
                Ok(PlistValue::Integer(be_int(raw)))
            }
            0x2 => match low {
                2 => {
                    let raw = self.take(offset + 1, 4)?;
                    let bits = u32::from_be_bytes([raw[0], raw[1], raw[2], raw[3]]);
                    Ok(PlistValue::Real(f32::from_bits(bits) as f64))
                }
                3 => {
                    let raw = self.take(offset + 1, 8)?;
                    Ok(PlistValue::Real(f64::from_bits(be_u64(raw))))
                }
                _ => Err(PlistError::MalformedPlist("real size".into())),
            },
            0x3 => {
                if low != 3 {
                    return Err(PlistError::MalformedPlist("date marker".into()));
                }
                let raw = self.take(offset + 1, 8)?;
                let seconds = f64::from_bits(be_u64(raw));
                mac_seconds_to_utc(seconds)
                    .map(PlistValue::Date)
                    .ok_or_else(|| PlistError::MalformedPlist("date out of range".into()))
            }
            0x4 => {
                let (len, data_off) = self.read_length(offset, low)?;
                Ok(PlistValue::Data(self.take(data_off, len)?.to_vec()))
            }
            0x5 => {
                let (len, data_off) = self.read_length(offset, low)?;
                let raw = self.take(data_off, len)?;
                let text = std::str::from_utf8(raw)
                    .map_err(|_| PlistError::MalformedPlist("non-ASCII ascii string".into()))?;
                Ok(PlistValue::Text(text.to_string()))
            }
            0x6 => {
                let (len, data_off) = self.read_length(offset, low)?;
                let raw = self.take(data_off, len * 2)?;
                let units: Vec<u16> = raw
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]))
                    .collect();
                String::from_utf16(&units)
                    .map(PlistValue::Text)
                    .map_err(|_| PlistError::MalformedPlist("invalid UTF-16 string".into()))
            }
            0x8 => {
                let raw = self.take(offset + 1, low + 1)?;
                Ok(PlistValue::Uid(be_uint(raw)))
            }
            0xA => {
                let (len, refs_off) = self.read_length(offset, low)?;
                let mut items = Vec::with_capacity(len);
                for i in 0..len {
                    let r = self.object_ref(refs_off + i * self.object_ref_size)?;
                    items.push(self.decode_object(r, depth + 1)?);
                }
                Ok(PlistValue::Array(items))
            }
            0xD => {
                let (len, refs_off) = self.read_length(offset, low)?;
                let values_off = refs_off + len * self.object_ref_size;
                let mut dict = BTreeMap::new();
                for i in 0..len {
                    let kr = self.object_ref(refs_off + i * self.object_ref_size)?;
                    let vr = self.object_ref(values_off + i * self.object_ref_size)?;
                    let key = match self.decode_object(kr, depth + 1)? {
                        PlistValue::Text(t) => t,
                        other => {
                            return Err(PlistError::MalformedPlist(format!(
                                "non-string dictionary key {other:?}"
                            )));
                        }
                    };
                    dict.insert(key, self.decode_object(vr, depth + 1)?);
                }
                Ok(PlistValue::Dict(dict))
            }
            other => Err(PlistError::MalformedPlist(format!(
                "unsupported marker nibble 0x{other:x}"
            ))),
        }
    }

    /// Inline length nibble, or 0xF followed by an integer object.
    fn read_length(&self, marker_offset: usize, low: usize) -> Result<(usize, usize), PlistError> {
        if low != 0x0F {
            return Ok((low, marker_offset + 1));
        }
        let int_marker = *self
            .bytes
            .get(marker_offset + 1)
            .ok_or_else(|| PlistError::MalformedPlist("length int missing".into()))?;
        if int_marker >> 4 != 0x1 {
            return Err(PlistError::MalformedPlist("length is not an int".into()));
        }
        let size = 1usize
            .checked_shl((int_marker & 0x0F) as u32)
            .filter(|s| *s <= 8)
            .ok_or_else(|| PlistError::MalformedPlist("length int size".into()))?;
        let raw = self.take(marker_offset + 2, size)?;
        Ok((be_uint(raw) as usize, marker_offset + 2 + size))
    }

    fn object_ref(&self, offset: usize) -> Result<usize, PlistError> {
        Ok(be_uint(self.take(offset, self.object_ref_size)?) as usize)
    }

    fn take(&self, offset: usize, len: usize) -> Result<&[u8], PlistError> {
        self.bytes
            .get(
                offset
                    ..offset
                        .checked_add(len)
                        .ok_or_else(|| PlistError::MalformedPlist("length overflow".into()))?,
            )
            .ok_or_else(|| PlistError::MalformedPlist("object data out of bounds".into()))
    }
}

fn be_u64(bytes: &[u8]) -> u64 {
    let mut v = 0u64;
    for &b in bytes {
        v = (v << 8) | b as u64;
    }
    v
}

fn be_uint(bytes: &[u8]) -> u64 {
    be_u64(bytes)
}

fn be_int(bytes: &[u8]) -> i64 {
    // 1/2/4-byte ints are unsigned in the format; the 8-byte form is two's
    // complement, which the cast preserves.
    be_u64(bytes) as i64
}

// ---------------------------------------------------------------------------
// XML form
// ---------------------------------------------------------------------------

fn parse_xml(bytes: &[u8]) -> Result<PlistValue, PlistError> {
    let text =
        std::str::from_utf8(bytes).map_err(|_| PlistError::MalformedPlist("not UTF-8".into()))?;
    let mut reader = Reader::from_str(text);

    // Find <plist>, then parse its single child value.
    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) if e.name().as_ref() == b"plist" => break,
            Ok(Event::Eof) => {
                return Err(PlistError::MalformedPlist("no <plist> element".into()));
            }
            Ok(_) => {}
            Err(e) => return Err(PlistError::MalformedPlist(e.to_string())),
        }
    }
    let value = next_xml_value(&mut reader, 0)?
        .ok_or_else(|| PlistError::MalformedPlist("empty <plist>".into()))?;
    Ok(value)
}

/// Parse the next value element; `None` when the enclosing end tag arrives.
fn next_xml_value(
    reader: &mut Reader<&[u8]>,
    depth: usize,
) -> Result<Option<PlistValue>, PlistError> {
    if depth > MAX_DEPTH {
        return Err(PlistError::MalformedPlist("XML nesting too deep".into()));
    }
    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) => {
                let name = e.name().as_ref().to_vec();
                return Ok(Some(xml_element(reader, &name, depth)?));
            }
            Ok(Event::Empty(e)) => {
                return Ok(Some(xml_empty_element(e.name().as_ref())?));
            }
            Ok(Event::End(_)) => return Ok(None),
            Ok(Event::Eof) => {
                return Err(PlistError::MalformedPlist("unexpected end of XML".into()));
            }
            Ok(_) => {}
            Err(e) => return Err(PlistError::MalformedPlist(e.to_string())),
        }
    }
}

fn xml_empty_element(name: &[u8]) -> Result<PlistValue, PlistError> {
    match name {
        b"true" => Ok(PlistValue::Boolean(true)),
        b"false" => Ok(PlistValue::Boolean(false)),
        b"string" => Ok(PlistValue::Text(String::new())),
        b"data" => Ok(PlistValue::Data(Vec::new())),
        b"dict" => Ok(PlistValue::Dict(BTreeMap::new())),
        b"array" => Ok(PlistValue::Array(Vec::new())),
        other => Err(PlistError::MalformedPlist(format!(
            "unsupported empty element <{}/>",
            String::from_utf8_lossy(other)
        ))),
    }
}

fn xml_element(
    reader: &mut Reader<&[u8]>,
    name: &[u8],
    depth: usize,
) -> Result<PlistValue, PlistError> {
    match name {
        b"dict" => {
            let mut dict = BTreeMap::new();
            loop {
                // Expect <key> or </dict>.
                let key = loop {
                    match reader.read_event() {
                        Ok(Event::Start(e)) if e.name().as_ref() == b"key" => {
                            break Some(read_text(reader, b"key")?);
                        }
                        Ok(Event::Empty(e)) if e.name().as_ref() == b"key" => {
                            break Some(String::new());
                        }
                        Ok(Event::End(e)) if e.name().as_ref() == b"dict" => break None,
                        Ok(Event::Eof) => {
                            return Err(PlistError::MalformedPlist("unclosed <dict>".into()));
                        }
                        Ok(_) => {}
                        Err(e) => return Err(PlistError::MalformedPlist(e.to_string())),
                    }
                };
                match key {
                    Some(key) => {
                        let value = next_xml_value(reader, depth + 1)?.ok_or_else(|| {
                            PlistError::MalformedPlist(format!("key `{key}` has no value"))
                        })?;
                        dict.insert(key, value);
                    }
                    None => return Ok(PlistValue::Dict(dict)),
                }
            }
        }
        b"array" => {
            let mut items = Vec::new();
            while let Some(v) = next_xml_value(reader, depth + 1)? {
                items.push(v);
            }
            Ok(PlistValue::Array(items))
        }
        b"string" => Ok(PlistValue::Text(read_text(reader, b"string")?)),
        b"integer" => {
            let text = read_text(reader, b"integer")?;
            text.trim()
                .parse::<i64>()
                .map(PlistValue::Integer)
                .map_err(|_| PlistError::MalformedPlist(format!("integer `{text}`")))
        }
        b"real" => {
            let text = read_text(reader, b"real")?;
            text.trim()
                .parse::<f64>()
                .map(PlistValue::Real)
                .map_err(|_| PlistError::MalformedPlist(format!("real `{text}`")))
        }
        b"date" => {
            let text = read_text(reader, b"date")?;
            DateTime::parse_from_rfc3339(text.trim())
                .map(|dt| PlistValue::Date(dt.with_timezone(&Utc)))
                .map_err(|_| PlistError::MalformedPlist(format!("date `{text}`")))
        }
        b"data" => {
            let text = read_text(reader, b"data")?;
            let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
            base64::engine::general_purpose::STANDARD
                .decode(compact)
                .map(PlistValue::Data)
                .map_err(|_| PlistError::MalformedPlist("invalid base64 <data>".into()))
        }
        b"true" => {
            read_text(reader, b"true")?;
            Ok(PlistValue::Boolean(true))
        }
        b"false" => {
            read_text(reader, b"false")?;
            Ok(PlistValue::Boolean(false))
        }
        other => Err(PlistError::MalformedPlist(format!(
            "unsupported element <{}>",
            String::from_utf8_lossy(other)
        ))),
    }
}

/// Accumulate text (entities resolved) until the matching end tag.
fn read_text(reader: &mut Reader<&[u8]>, end: &[u8]) -> Result<String, PlistError> {
    let mut out = String::new();
    loop {
        match reader.read_event() {
            Ok(Event::Text(t)) => {
                out.push_str(
                    &t.xml_content(XmlVersion::default())
                        .map_err(|e| PlistError::MalformedPlist(e.to_string()))?,
                );
            }
            Ok(Event::GeneralRef(r)) => {
                out.push_str(&crate::xmlutil::resolve_general_ref(&r));
            }
            Ok(Event::End(e)) if e.name().as_ref() == end => return Ok(out),
            Ok(Event::Eof) => {
                return Err(PlistError::MalformedPlist(format!(
                    "unclosed <{}>",
                    String::from_utf8_lossy(end)
                )));
            }
            Ok(_) => {}
            Err(e) => return Err(PlistError::MalformedPlist(e.to_string())),
        }
    }
}
