//! Reader for Android `shared_prefs` XML files.
//!
//! The schema is a flat `<map>` of typed entries:
//!
//! ```xml
//! <map>
//!     <string name="email">kardia.study@example.com</string>
//!     <long name="dob" value="479692800000" />
//!     <boolean name="smoker" value="false" />
//! </map>
//! ```
//!
//! Unknown entry tags are preserved as [`PrefValue::Unknown`] so callers can
//! catalog them opaquely instead of dropping them.

use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("malformed shared_prefs XML: {0}")]
pub struct PrefsXmlError(pub String);

#[derive(Debug, Clone, PartialEq)]
pub enum PrefValue {
    Text(String),
    Long(i64),
    Int(i64),
    Float(f64),
    Boolean(bool),
    Unknown { tag: String, raw: String },
}

impl PrefValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            PrefValue::Text(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            PrefValue::Long(v) | PrefValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            PrefValue::Float(v) => Some(*v),
            PrefValue::Long(v) | PrefValue::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            PrefValue::Boolean(b) => Some(*b),
            _ => None,
        }
    }

    pub fn render(&self) -> String {
        match self {
            PrefValue::Text(t) => t.clone(),
            PrefValue::Long(v) | PrefValue::Int(v) => v.to_string(),
            PrefValue::Float(v) => v.to_string(),
            PrefValue::Boolean(b) => b.to_string(),
            PrefValue::Unknown { raw, .. } => raw.clone(),
        }
    }
}

/// Entries in document order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrefsFile {
    pub entries: Vec<(String, PrefValue)>,
}

impl PrefsFile {
    pub fn get(&self, name: &str) -> Option<&PrefValue> {
        self.entries.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }
}

pub fn parse_shared_prefs(bytes: &[u8]) -> Result<PrefsFile, PrefsXmlError> {
    let text = std::str::from_utf8(bytes).map_err(|_| PrefsXmlError("not UTF-8".into()))?;
    let mut reader = Reader::from_str(text);

    let mut entries = Vec::new();
    let mut in_map = false;
    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) if e.name().as_ref() == b"map" => in_map = true,
            Ok(Event::End(e)) if e.name().as_ref() == b"map" => break,
            Ok(Event::Start(e)) if in_map => {
                let tag = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let name = attr(&e, b"name")?;
                let value_attr = opt_attr(&e, b"value")?;
                let body = read_element_text(&mut reader, e.name().as_ref())?;
                entries.push((
                    name.unwrap_or_default(),
                    typed_value(&tag, value_attr.as_deref(), &body)?,
                ));
            }
            Ok(Event::Empty(e)) if in_map => {
                let tag = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let name = attr(&e, b"name")?;
                let value_attr = opt_attr(&e, b"value")?;
                entries.push((
                    name.unwrap_or_default(),
                    typed_value(&tag, value_attr.as_deref(), "")?,
                ));
            }
            Ok(Event::Eof) => {
                if in_map {
                    return Err(PrefsXmlError("unclosed <map>".into()));
                }
                break;
            }
            Ok(_) => {}
            Err(e) => return Err(PrefsXmlError(e.to_string())),
        }
    }
    if !in_map {
        return Err(PrefsXmlError("no <map> root element".into()));
    }
    Ok(PrefsFile { entries })
}

fn typed_value(
    tag: &str,
    value_attr: Option<&str>,
    body: &str,
) -> Result<PrefValue, PrefsXmlError> {
    let value = value_attr.unwrap_or("");
    let parsed = match tag {
        "string" => PrefValue::Text(body.to_string()),
        "long" => PrefValue::Long(
            value
                .parse::<i64>()
                .map_err(|_| PrefsXmlError(format!("bad long `{value}`")))?,
        ),
        "int" => PrefValue::Int(
            value
                .parse::<i64>()
                .map_err(|_| PrefsXmlError(format!("bad int `{value}`")))?,
        ),
        "float" => PrefValue::Float(
            value
                .parse::<f64>()
                .map_err(|_| PrefsXmlError(format!("bad float `{value}`")))?,
        ),
        "boolean" => match value {
            "true" => PrefValue::Boolean(true),
            "false" => PrefValue::Boolean(false),
            other => return Err(PrefsXmlError(format!("bad boolean `{other}`"))),
        },
        other => PrefValue::Unknown {
            tag: other.to_string(),
            raw: if value.is_empty() {
                body.to_string()
            } else {
                value.to_string()
            },
        },
    };
    Ok(parsed)
}

fn attr(e: &BytesStart<'_>, key: &[u8]) -> Result<Option<String>, PrefsXmlError> {
    for a in e.attributes() {
        let a = a.map_err(|e| PrefsXmlError(e.to_string()))?;
        if a.key.as_ref() == key {
            return Ok(Some(
                a.normalized_value(XmlVersion::default())
                    .map_err(|e| PrefsXmlError(e.to_string()))?
                    .into_owned(),
            ));
        }
    }
    Ok(None)
}

fn opt_attr(e: &BytesStart<'_>, key: &[u8]) -> Result<Option<String>, PrefsXmlError> {
    attr(e, key)
}

fn read_element_text(reader: &mut Reader<&[u8]>, end: &[u8]) -> Result<String, PrefsXmlError> {
    let mut out = String::new();
    let mut nested = 0usize;
    loop {
        match reader.read_event() {
            Ok(Event::Text(t)) => out.push_str(
                &t.xml_content(XmlVersion::default())
                    .map_err(|e| PrefsXmlError(e.to_string()))?,
            ),
            Ok(Event::GeneralRef(r)) => out.push_str(&crate::xmlutil::resolve_general_ref(&r)),
            Ok(Event::Start(_)) => nested += 1,
            Ok(Event::End(e)) => {
                if nested == 0 && e.name().as_ref() == end {
                    return Ok(out);
                }
                nested = nested.saturating_sub(1);
            }
            Ok(Event::Eof) => {
                return Err(PrefsXmlError(format!(
                    "unclosed <{}>",
                    String::from_utf8_lossy(end)
                )));
            }
            Ok(_) => {}
            Err(e) => return Err(PrefsXmlError(e.to_string())),
        }
    }
}

/// Render entries back into the `shared_prefs` schema (used by the fixture
/// generator and the mutation tool).
pub fn render_shared_prefs(entries: &[(String, PrefValue)]) -> String {
    use std::fmt::Write;
    let mut out = String::from("<?xml version='1.0' encoding='utf-8' standalone='yes' ?>\n<map>\n");
    for (name, value) in entries {
        let name = escape_xml(name);
        match value {
            PrefValue::Text(t) => {
                let _ = writeln!(
                    out,
                    "    <string name=\"{name}\">{}</string>",
                    escape_xml(t)
                );
            }
            PrefValue::Long(v) => {
                let _ = writeln!(out, "    <long name=\"{name}\" value=\"{v}\" />");
            }
            PrefValue::Int(v) => {
                let _ = writeln!(out, "    <int name=\"{name}\" value=\"{v}\" />");
            }
            PrefValue::Float(v) => {
                let _ = writeln!(out, "    <float name=\"{name}\" value=\"{v}\" />");
            }
            PrefValue::Boolean(b) => {
                let _ = writeln!(out, "    <boolean name=\"{name}\" value=\"{b}\" />");
            }
            PrefValue::Unknown { tag, raw } => {
                let _ = writeln!(
                    out,
                    "    <{tag} name=\"{name}\" value=\"{}\" />",
                    escape_xml(raw)
                );
            }
        }
    }
    out.push_str("</map>\n");
    out
}

fn escape_xml(text: &str) -> String {
    quick_xml::escape::escape(text).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typed_entries_parse() {
        let doc = br#"<?xml version='1.0' encoding='utf-8' standalone='yes' ?>
<map>
    <string name="email">a&amp;b@example.com</string>
    <long name="dob" value="479692800000" />
    <boolean name="smoker" value="false" />
    <float name="weight" value="68.0388555" />
    <int name="launches" value="11" />
</map>"#;
        let prefs = parse_shared_prefs(doc).unwrap();
        assert_eq!(prefs.entries.len(), 5);
        assert_eq!(
            prefs.get("email").unwrap().as_str(),
            Some("a&b@example.com")
        );
        assert_eq!(prefs.get("dob").unwrap().as_i64(), Some(479_692_800_000));
        assert_eq!(prefs.get("smoker").unwrap().as_bool(), Some(false));
        assert_eq!(prefs.get("weight").unwrap().as_f64(), Some(68.038_855_5));
        assert_eq!(prefs.get("launches").unwrap().as_i64(), Some(11));
    }

    #[test]
    fn unknown_tags_are_cataloged_not_dropped() {
        let doc =
            br#"<map><set name="tags"><string>x</string></set><string name="k">v</string></map>"#;
        let prefs = parse_shared_prefs(doc).unwrap();
        assert_eq!(prefs.entries.len(), 2);
        assert!(matches!(
            prefs.get("tags"),
            Some(PrefValue::Unknown { tag, .. }) if tag == "set"
        ));
        assert_eq!(prefs.get("k").unwrap().as_str(), Some("v"));
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(parse_shared_prefs(b"<html><body>nope</body></html>").is_err());
        assert!(parse_shared_prefs(b"<map><long name=\"x\" value=\"abc\"/></map>").is_err());
    }

    #[test]
    fn render_round_trips() {
        let entries = vec![
            (
                "email".to_string(),
                PrefValue::Text("a&b@example.com".into()),
            ),
            ("dob".to_string(), PrefValue::Long(479_692_800_000)),
            ("smoker".to_string(), PrefValue::Boolean(true)),
            ("weight".to_string(), PrefValue::Float(68.038_855_5)),
        ];
        let xml = render_shared_prefs(&entries);
        let parsed = parse_shared_prefs(xml.as_bytes()).unwrap();
        assert_eq!(parsed.entries, entries);
    }
}
