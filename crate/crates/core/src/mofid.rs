//! MOFid parsing and string-level tokenization.
//!
//! A MOFid packs a framework into one line: the SMILES strings of its
//! building units joined by `.`, a ` && ` separator, then a topology code
//! with an optional catenation tag after a period, e.g.
//! `C1=CC(=CC=C1C(=O)O)C(=O)O.Cu && pcu` or `...C#N.Zn && dia-c`.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

/// Separator between the chemical (SMILES) part and the topology part.
pub const SEPARATOR: &str = "&&";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MofIdError {
    #[error("empty input")]
    EmptyInput,
    #[error("no SMILES components before the separator")]
    NoComponents,
}

/// A parsed MOF identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MofId {
    /// Building-unit SMILES strings, in original order.
    pub smiles_components: Vec<String>,
    /// Topology code(s); empty only when the raw string had no `&&` part.
    pub topology: String,
    /// Optional categorical tag found after a period in the topology part.
    pub catenation: Option<String>,
    /// The original input string.
    pub raw: String,
}

impl MofId {
    /// Canonical form: components joined by `.`, single-spaced separator,
    /// topology and catenation rejoined with a period.
    pub fn canonical(&self) -> String {
        let left = self.smiles_components.join(".");
        if !self.has_topology_part() {
            return left;
        }
        let mut right = self.topology.clone();
        if let Some(cat) = &self.catenation {
            right.push('.');
            right.push_str(cat);
        }
        if right.is_empty() {
            format!("{left} {SEPARATOR}")
        } else {
            format!("{left} {SEPARATOR} {right}")
        }
    }

    /// Whether the raw string carried a topology part (a `&&` separator).
    pub fn has_topology_part(&self) -> bool {
        !self.topology.is_empty() || self.catenation.is_some() || self.raw.contains(SEPARATOR)
    }
}

/// Normalize whitespace around the separator: trim the ends and collapse the
/// space around the first `&&` to exactly one on each side.
pub fn normalize_mofid_string(s: &str) -> String {
    let s = s.trim();
    match s.split_once(SEPARATOR) {
        Some((left, right)) => {
            let left = left.trim_end();
            let right = right.trim_start();
            if right.is_empty() {
                format!("{left} {SEPARATOR}")
            } else {
                format!("{left} {SEPARATOR} {right}")
            }
        }
        None => s.to_string(),
    }
}

/// Parse a raw MOFid string.
///
/// Splits on the first `&&` (surrounding whitespace tolerated); the left side
/// splits on `.` into SMILES components, the right side on the first `.` into
/// topology and catenation.
pub fn parse_mofid(raw: &str) -> Result<MofId, MofIdError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(MofIdError::EmptyInput);
    }
    let (left, right) = match trimmed.split_once(SEPARATOR) {
        Some((l, r)) => (l.trim(), Some(r.trim())),
        None => (trimmed, None),
    };
    let smiles_components: Vec<String> = left.split('.').map(|c| c.trim().to_string()).collect();
    if smiles_components.iter().all(|c| c.is_empty()) {
        return Err(MofIdError::NoComponents);
    }
    let (topology, catenation) = match right {
        Some(r) => match r.split_once('.') {
            Some((t, c)) => (t.trim().to_string(), Some(c.trim().to_string())),
            None => (r.to_string(), None),
        },
        None => (String::new(), None),
    };
    Ok(MofId {
        smiles_components,
        topology,
        catenation,
        raw: trimmed.to_string(),
    })
}

// Greedy left-to-right pattern set. Alternation order matters: bracket atoms,
// then two-letter halogens, then `@@` before `@`, then `%NN` ring closures,
// then single-letter atoms / digits / bond and branch symbols.
static SMILES_TOKEN_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\[[^\]]+\]|Br|Cl|@@|%\d{2}|[BCNOSPFIbcnosp]|\d|[=#$\-+\\/().:@~*]").unwrap()
});

/// Tokenize one SMILES string.
///
/// Characters the pattern set does not cover are emitted as single-character
/// tokens; they map to UNK at encoding time if absent from the vocabulary.
pub fn tokenize_smiles(s: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut last = 0;
    for m in SMILES_TOKEN_RE.find_iter(s) {
        for ch in s[last..m.start()].chars() {
            tokens.push(ch.to_string());
        }
        tokens.push(m.as_str().to_string());
        last = m.end();
    }
    for ch in s[last..].chars() {
        tokens.push(ch.to_string());
    }
    tokens
}

/// Tokenize the topology part: comma-separated codes become whole tokens,
/// the catenation tag (if any) is appended as its own token.
pub fn tokenize_topology(topology: &str, catenation: Option<&str>) -> Vec<String> {
    let mut tokens: Vec<String> = topology
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect();
    if let Some(cat) = catenation {
        if !cat.is_empty() {
            tokens.push(cat.to_string());
        }
    }
    tokens
}

/// A component consisting of a single bare element symbol (`Cu`, `Zn`, `C`)
/// is kept as one token; this is how metal nodes appear in MOFids.
pub fn is_bare_element(component: &str) -> bool {
    let mut chars = component.chars();
    match (chars.next(), chars.next(), chars.next()) {
        (Some(a), None, _) => a.is_ascii_uppercase(),
        (Some(a), Some(b), None) => a.is_ascii_uppercase() && b.is_ascii_lowercase(),
        _ => false,
    }
}

/// Flat token stream for a parsed MOFid, without BOS/EOS or padding.
///
/// Components are joined with `.` tokens, the separator is one `&&` token,
/// topology codes are joined with `,` tokens and the catenation tag follows
/// a `.` token, so concatenating the stream reproduces the canonical string.
pub fn mofid_tokens(m: &MofId) -> Vec<String> {
    let mut tokens = Vec::new();
    for (i, comp) in m.smiles_components.iter().enumerate() {
        if i > 0 {
            tokens.push(".".to_string());
        }
        if is_bare_element(comp) {
            tokens.push(comp.clone());
        } else {
            tokens.extend(tokenize_smiles(comp));
        }
    }
    if m.has_topology_part() {
        tokens.push(SEPARATOR.to_string());
        let codes: Vec<&str> = m
            .topology
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect();
        for (i, code) in codes.iter().enumerate() {
            if i > 0 {
                tokens.push(",".to_string());
            }
            tokens.push((*code).to_string());
        }
        if let Some(cat) = &m.catenation {
            if !cat.is_empty() {
                tokens.push(".".to_string());
                tokens.push(cat.clone());
            }
        }
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    const EX1: &str = "C1=CC(=CC=C1C(=O)O)C(=O)O.Cu && pcu";
    const EX2: &str = "c1cc(cc(c1)C(=O)O)N(=O)=O.c1cc(cc(c1)C(=O)O)C(=O)O.Cu && nbo-d";
    const EX3: &str = "C1=CC=C(C=C1)C#N.Zn && dia-c";

    #[test]
    fn parse_copper_bdc() {
        let m = parse_mofid(EX1).unwrap();
        assert_eq!(
            m.smiles_components,
            vec!["C1=CC(=CC=C1C(=O)O)C(=O)O".to_string(), "Cu".to_string()]
        );
        assert_eq!(m.topology, "pcu");
        assert_eq!(m.catenation, None);
    }

    #[test]
    fn parse_zinc_benzonitrile() {
        let m = parse_mofid(EX3).unwrap();
        assert_eq!(
            m.smiles_components,
            vec!["C1=CC=C(C=C1)C#N".to_string(), "Zn".to_string()]
        );
        assert_eq!(m.topology, "dia-c");
    }

    #[test]
    fn parse_mixed_linkers() {
        let m = parse_mofid(EX2).unwrap();
        assert_eq!(m.smiles_components.len(), 3);
        assert_eq!(m.topology, "nbo-d");
    }

    #[test]
    fn parse_catenation_tag() {
        let m = parse_mofid("C.Cu && pcu.cat0").unwrap();
        assert_eq!(m.topology, "pcu");
        assert_eq!(m.catenation.as_deref(), Some("cat0"));
        assert_eq!(m.canonical(), "C.Cu && pcu.cat0");
    }

    #[test]
    fn parse_empty_is_an_error() {
        assert_eq!(parse_mofid(""), Err(MofIdError::EmptyInput));
        assert_eq!(parse_mofid("   "), Err(MofIdError::EmptyInput));
    }

    #[test]
    fn parse_blank_left_side_is_an_error() {
        assert_eq!(parse_mofid(" && pcu"), Err(MofIdError::NoComponents));
    }

    #[test]
    fn parse_without_topology_part() {
        let m = parse_mofid("CCO.Cu").unwrap();
        assert!(!m.has_topology_part());
        assert_eq!(m.canonical(), "CCO.Cu");
    }

    #[test]
    fn tokenize_basic_chain() {
        assert_eq!(tokenize_smiles("C1=CC"), vec!["C", "1", "=", "C", "C"]);
    }

    #[test]
    fn tokenize_two_letter_before_single() {
        assert_eq!(tokenize_smiles("Cl"), vec!["Cl"]);
        assert_eq!(tokenize_smiles("Br"), vec!["Br"]);
    }

    #[test]
    fn tokenize_bracket_atom_whole() {
        assert_eq!(tokenize_smiles("[Zn]"), vec!["[Zn]"]);
        assert_eq!(tokenize_smiles("[C@@H]"), vec!["[C@@H]"]);
    }

    #[test]
    fn tokenize_ring_percent_and_chirality() {
        assert_eq!(tokenize_smiles("C%12C"), vec!["C", "%12", "C"]);
        assert_eq!(tokenize_smiles("C@@C"), vec!["C", "@@", "C"]);
    }

    #[test]
    fn tokenize_unknown_chars_degrade_to_single_tokens() {
        assert_eq!(tokenize_smiles("CuX"), vec!["C", "u", "X"]);
    }

    #[test]
    fn topology_tokens() {
        assert_eq!(tokenize_topology("pcu", None), vec!["pcu"]);
        assert_eq!(tokenize_topology("nbo-d", None), vec!["nbo-d"]);
        assert_eq!(tokenize_topology("pcu", Some("cat0")), vec!["pcu", "cat0"]);
        assert_eq!(
            tokenize_topology("pcu,dia", None),
            vec!["pcu".to_string(), "dia".to_string()]
        );
    }

    #[test]
    fn stream_concatenation_matches_canonical() {
        for raw in [EX1, EX2, EX3, "C.Cu && pcu.cat0", "CCO.Cu", "C.Zn && pcu,dia"] {
            let m = parse_mofid(raw).unwrap();
            let joined: String = mofid_tokens(&m)
                .iter()
                .map(|t| {
                    if t == SEPARATOR {
                        format!(" {t} ")
                    } else {
                        t.clone()
                    }
                })
                .collect();
            assert_eq!(joined.trim().to_string(), m.canonical(), "raw={raw}");
        }
    }

    #[test]
    fn bare_metal_component_is_one_token() {
        let m = parse_mofid("C.Cu && pcu").unwrap();
        assert_eq!(mofid_tokens(&m), vec!["C", ".", "Cu", "&&", "pcu"]);
    }

    #[test]
    fn normalization_collapses_separator_whitespace() {
        assert_eq!(normalize_mofid_string("C.Cu   &&   pcu "), "C.Cu && pcu");
        assert_eq!(normalize_mofid_string("C.Cu&&pcu"), "C.Cu && pcu");
        assert_eq!(normalize_mofid_string("CCO.Cu"), "CCO.Cu");
    }

    // Independent longest-match oracle: length of the longest pattern-set
    // token that starts at the beginning of `rest`, if any.
    fn longest_match_len(rest: &str) -> Option<usize> {
        let bytes = rest.as_bytes();
        if bytes.first() == Some(&b'[') {
            if let Some(close) = rest.find(']') {
                if close > 1 {
                    return Some(close + 1);
                }
            }
        }
        if bytes.len() >= 3 && bytes[0] == b'%' && bytes[1].is_ascii_digit() && bytes[2].is_ascii_digit() {
            return Some(3);
        }
        if rest.starts_with("Cl") || rest.starts_with("Br") || rest.starts_with("@@") {
            return Some(2);
        }
        let singles = "BCNOSPFIbcnosp0123456789=#$-+\\/().:@~*";
        bytes
            .first()
            .filter(|b| singles.as_bytes().contains(b))
            .map(|_| 1)
    }

    // Greedy-longest-match: no output token is a strict prefix of a longer
    // token matchable at the same position.
    #[test]
    fn greedy_longest_match_property() {
        let inputs = [
            "C1=CC(=CC=C1C(=O)O)C(=O)O",
            "Clc1ccccc1Br",
            "[C@@H](Cl)Br",
            "C%10CC%10",
            "c1cc(cc(c1)C(=O)O)N(=O)=O",
            "CuX@@[O-]",
        ];
        for s in inputs {
            let tokens = tokenize_smiles(s);
            let mut pos = 0;
            for tok in &tokens {
                match longest_match_len(&s[pos..]) {
                    Some(len) => assert_eq!(
                        tok.len(),
                        len,
                        "token {tok:?} at {pos} in {s:?} is not the longest match"
                    ),
                    None => assert_eq!(tok.chars().count(), 1, "fallback token {tok:?} in {s:?}"),
                }
                pos += tok.len();
            }
            assert_eq!(pos, s.len());
        }
    }
}
