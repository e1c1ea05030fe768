use unicode_normalization::{is_nfc, UnicodeNormalization};

use super::CorpusError;

/// Canonical text form: CRLF and lone CR become LF, then Unicode NFC.
/// All byte offsets in the crate are computed on this form.
pub fn normalize_text(raw: &str) -> String {
    let unified = if raw.contains('\r') { raw.replace("\r\n", "\n").replace('\r', "\n") } else { raw.to_owned() };
    if is_nfc(&unified) {
        unified
    } else {
        unified.nfc().collect()
    }
}

/// [`normalize_text`] over raw bytes, rejecting invalid UTF-8 with the
/// offset of the first bad byte.
pub fn normalize_bytes(raw: &[u8]) -> Result<String, CorpusError> {
    let s = std::str::from_utf8(raw).map_err(|e| CorpusError::InvalidUtf8 { offset: e.valid_up_to() })?;
    Ok(normalize_text(s))
}
