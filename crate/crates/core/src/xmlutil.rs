//! Shared bits for the two XML readers.

use quick_xml::events::BytesRef;

/// Resolve a general entity reference event to its text. Numeric character
/// references and the five predefined entities resolve; anything else is kept
/// literally as `&name;` so hostile input degrades instead of erroring.
pub(crate) fn resolve_general_ref(r: &BytesRef<'_>) -> String {
    if let Ok(Some(ch)) = r.resolve_char_ref() {
        return ch.to_string();
    }
    match r.decode() {
        Ok(name) => match quick_xml::escape::resolve_predefined_entity(&name) {
            Some(resolved) => resolved.to_string(),
            None => format!("&{name};"),
        },
        Err(_) => String::new(),
    }
}
