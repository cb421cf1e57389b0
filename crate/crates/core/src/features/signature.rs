//! Hashed bag-of-tokens over caller and callee method signatures.
//!
//! Tokens come from splitting a URI on `/ . ( ) ; , $` and spaces, then
//! splitting each piece at camelCase boundaries. A caller token `t` adds 1 at
//! `fnv1a64(t) mod dim`; a callee token adds 1 at `fnv1a64(t + "#tgt") mod dim`.
//! The vector is then L2-normalized. FNV-1a uses the standard 64-bit offset
//! basis and prime over the UTF-8 bytes of the token.

use crate::error::{Error, Result};
use crate::Scalar;

pub const DEFAULT_SIG_DIM: usize = 768;

/// Suffix appended to callee tokens before hashing.
pub const CALLEE_SALT: &str = "#tgt";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

fn is_delimiter(c: char) -> bool {
    matches!(c, '/' | '.' | '(' | ')' | ';' | ',' | '$' | ' ')
}

/// Splits `getHTTPResponse2Code` into `get`, `HTTP`, `Response2`, `Code`.
///
/// A boundary falls before an uppercase letter preceded by a lowercase letter
/// or digit, and before the last capital of an acronym that is followed by a
/// lowercase letter.
fn camel_split(word: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    let mut parts = Vec::new();
    let mut start = 0;
    for i in 1..chars.len() {
        let (pos, c) = chars[i];
        let prev = chars[i - 1].1;
        let next_lower = chars.get(i + 1).is_some_and(|&(_, n)| n.is_lowercase());
        let boundary = c.is_uppercase()
            && ((prev.is_lowercase() || prev.is_ascii_digit())
                || (prev.is_uppercase() && next_lower));
        if boundary {
            parts.push(&word[start..pos]);
            start = pos;
        }
    }
    parts.push(&word[start..]);
    parts
}

pub fn tokenize_uri(uri: &str) -> Vec<&str> {
    uri.split(is_delimiter)
        .filter(|p| !p.is_empty())
        .flat_map(camel_split)
        .collect()
}

pub fn caller_bucket(token: &str, dim: usize) -> usize {
    (fnv1a64(token.as_bytes()) % dim as u64) as usize
}

pub fn callee_bucket(token: &str, dim: usize) -> usize {
    let mut salted = String::with_capacity(token.len() + CALLEE_SALT.len());
    salted.push_str(token);
    salted.push_str(CALLEE_SALT);
    (fnv1a64(salted.as_bytes()) % dim as u64) as usize
}

pub fn signature_feature<T: Scalar>(source_uri: &str, target_uri: &str, dim: usize) -> Result<Vec<T>> {
    if dim == 0 {
        return Err(Error::usage("signature dimension must be positive"));
    }
    let mut v = vec![T::zero(); dim];
    for tok in tokenize_uri(source_uri) {
        v[caller_bucket(tok, dim)] += T::one();
    }
    for tok in tokenize_uri(target_uri) {
        v[callee_bucket(tok, dim)] += T::one();
    }
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm > T::zero() {
        for x in &mut v {
            *x /= norm;
        }
    }
    Ok(v)
}
