//! Structural validity, novelty, string similarity, and composition.

use std::collections::HashSet;
use std::path::Path;

use crate::mofid::{self, MofId};

/// Common MOF-forming metals, plus the lanthanides. Overridable via
/// [`MetalSet::from_symbols`] or a one-symbol-per-line file.
pub const DEFAULT_METALS: [&str; 29] = [
    "Zn", "Cu", "Fe", "Co", "Ni", "Mn", "Mg", "Ca", "Al", "Zr", "Cr", "Cd", "Ag", "Ti", "V",
    "La", "Ce", "Pr", "Nd", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu",
];

/// Bundled RCSR topology codes; a load-from-file override is available.
pub const DEFAULT_TOPOLOGIES: [&str; 20] = [
    "pcu", "dia", "nbo", "srs", "bcu", "fcu", "pts", "sql", "hcb", "ths", "cds", "rtl", "sod",
    "lvt", "mog", "dmp", "tbo", "pto", "nbo-d", "dia-c",
];

#[derive(Debug, Clone)]
pub struct MetalSet {
    symbols: HashSet<String>,
}

impl Default for MetalSet {
    fn default() -> Self {
        Self::from_symbols(DEFAULT_METALS.iter().copied())
    }
}

impl MetalSet {
    pub fn from_symbols<I: IntoIterator<Item = S>, S: Into<String>>(symbols: I) -> Self {
        Self {
            symbols: symbols.into_iter().map(Into::into).collect(),
        }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_symbols(
            text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')),
        ))
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.symbols.contains(symbol)
    }

    /// Longest metal symbol matching at the start of `rest` (two-letter
    /// symbols take precedence).
    fn match_at<'a>(&self, rest: &'a str) -> Option<&'a str> {
        for len in [2, 1] {
            if rest.len() >= len && rest.is_char_boundary(len) && self.contains(&rest[..len]) {
                return Some(&rest[..len]);
            }
        }
        None
    }

    /// Replace every metal symbol with a carbon placeholder so the grammar
    /// check can treat metal nodes like ordinary atoms.
    pub fn substitute_with_carbon(&self, s: &str) -> String {
        let mut out = String::with_capacity(s.len());
        let mut i = 0;
        while i < s.len() {
            if let Some(m) = self.match_at(&s[i..]) {
                out.push('C');
                i += m.len();
            } else {
                let ch = s[i..].chars().next().unwrap();
                out.push(ch);
                i += ch.len_utf8();
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct TopoDb {
    codes: HashSet<String>,
}

impl TopoDb {
    pub fn bundled() -> Self {
        Self::from_codes(DEFAULT_TOPOLOGIES.iter().copied())
    }

    /// An empty database; topology checks pass vacuously against it.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_codes<I: IntoIterator<Item = S>, S: Into<String>>(codes: I) -> Self {
        Self {
            codes: codes.into_iter().map(Into::into).collect(),
        }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_codes(
            text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')),
        ))
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn contains(&self, code: &str) -> bool {
        self.codes.contains(code)
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.codes.iter().map(String::as_str)
    }
}

/// Tunable validity thresholds.
#[derive(Debug, Clone)]
pub struct ValidityConfig {
    /// Maximum number of metal components per structure.
    pub max_metal_components: usize,
    /// Allowed organic:metal component-count ratio window.
    pub min_organic_metal_ratio: f64,
    pub max_organic_metal_ratio: f64,
}

impl Default for ValidityConfig {
    fn default() -> Self {
        Self {
            max_metal_components: 4,
            min_organic_metal_ratio: 0.25,
            max_organic_metal_ratio: 8.0,
        }
    }
}

/// Per-check outcome of structural validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityReport {
    pub is_valid: bool,
    pub smiles_syntax: bool,
    pub metal_present: bool,
    pub structural_balance: bool,
    pub topology_known: bool,
    pub coordination_plausible: bool,
    /// Whether relaxed grammar rules were applied.
    pub relaxed: bool,
}

impl ValidityReport {
    pub fn checks(&self) -> [(&'static str, bool); 5] {
        [
            ("smiles_syntax", self.smiles_syntax),
            ("metal_present", self.metal_present),
            ("structural_balance", self.structural_balance),
            ("topology_known", self.topology_known),
            ("coordination_plausible", self.coordination_plausible),
        ]
    }
}

const BOND_SYMBOLS: [&str; 8] = ["=", "#", "-", "+", ":", "/", "\\", "~"];

fn is_valid_bracket_atom(tok: &str) -> bool {
    let inner = &tok[1..tok.len() - 1];
    let mut chars = inner.chars().peekable();
    while chars.peek().is_some_and(|c| c.is_ascii_digit()) {
        chars.next();
    }
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() && c != 'H' => {}
        _ => return false,
    }
    if chars.peek().is_some_and(|c| c.is_ascii_lowercase()) {
        chars.next();
    }
    chars.all(|c| matches!(c, 'H' | '@' | '+' | '-') || c.is_ascii_digit())
}

fn is_known_token(tok: &str) -> bool {
    if tok.starts_with('[') && tok.ends_with(']') && tok.len() > 2 {
        return is_valid_bracket_atom(tok);
    }
    if tok.len() >= 2 {
        return matches!(tok, "Cl" | "Br" | "@@") || (tok.starts_with('%') && tok.len() == 3);
    }
    let c = tok.chars().next().unwrap_or(' ');
    "BCNOSPFIbcnosp".contains(c) || c.is_ascii_digit() || "=#$-+\\/().:@~*".contains(c)
}

/// Grammar check for one SMILES component (metals already substituted out).
fn component_grammar_ok(component: &str, relaxed: bool) -> bool {
    if component.is_empty() {
        return false;
    }
    let tokens = mofid::tokenize_smiles(component);
    if !tokens.iter().all(|t| is_known_token(t)) {
        return false;
    }
    // Balanced branch parentheses.
    let mut depth: i64 = 0;
    for t in &tokens {
        match t.as_str() {
            "(" => depth += 1,
            ")" => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    if depth != 0 {
        return false;
    }
    if !relaxed {
        // Ring-closure digits must pair up (open/close toggling).
        let mut open: HashSet<String> = HashSet::new();
        for t in &tokens {
            let is_ring = t.len() == 1 && t.chars().next().unwrap().is_ascii_digit()
                || t.starts_with('%');
            if is_ring && !open.remove(t) {
                open.insert(t.clone());
            }
        }
        if !open.is_empty() {
            return false;
        }
        // No dangling bond symbol at the end.
        if let Some(last) = tokens.last() {
            if BOND_SYMBOLS.contains(&last.as_str()) {
                return false;
            }
        }
    }
    true
}

/// Canonical element symbol inside a bracket atom body (no brackets),
/// e.g. `Cu+2` -> Cu, `13C` -> C, `nH` -> N, `O-` -> O.
fn bracket_element(inner: &str) -> Option<String> {
    let rest = inner.trim_start_matches(|ch: char| ch.is_ascii_digit());
    let mut chars = rest.chars();
    let first = chars.next()?;
    let mut sym = if first.is_ascii_uppercase() {
        first.to_string()
    } else if "bcnosp".contains(first) {
        first.to_ascii_uppercase().to_string()
    } else {
        return None;
    };
    if first.is_ascii_uppercase() {
        if let Some(second) = chars.clone().next() {
            if second.is_ascii_lowercase() {
                sym.push(second);
                chars.next();
            }
        }
    }
    if chars.all(|ch| matches!(ch, 'H' | '@' | '+' | '-') || ch.is_ascii_digit()) {
        Some(sym)
    } else {
        None
    }
}

/// Element symbol of a single-atom component: bare (`Cu`) or bracketed
/// (`[Cu+2]`, `[13C]`).
fn single_atom_element(component: &str) -> Option<String> {
    let c = component.trim();
    if mofid::is_bare_element(c) {
        return Some(c.to_string());
    }
    if c.starts_with('[') && c.ends_with(']') && c.len() > 2 {
        return bracket_element(&c[1..c.len() - 1]);
    }
    None
}

fn is_metal_component(component: &str, metals: &MetalSet) -> bool {
    single_atom_element(component).is_some_and(|sym| metals.contains(&sym))
}

fn is_organic_component(component: &str, metals: &MetalSet) -> bool {
    if is_metal_component(component, metals) {
        return false;
    }
    extract_elements(component, metals).contains("C")
}

/// Run all structural checks. `relaxed` loosens only the grammar rules
/// (ring pairing and bond-terminal checks are skipped); it never changes the
/// metal-presence or balance verdicts.
pub fn check_validity(
    m: &MofId,
    topo_db: &TopoDb,
    metals: &MetalSet,
    cfg: &ValidityConfig,
    relaxed: bool,
) -> ValidityReport {
    let smiles_syntax = m.smiles_components.iter().all(|c| {
        let substituted = metals.substitute_with_carbon(c);
        component_grammar_ok(&substituted, relaxed)
    });

    let n_metal = m
        .smiles_components
        .iter()
        .filter(|c| is_metal_component(c, metals))
        .count();
    let n_organic = m
        .smiles_components
        .iter()
        .filter(|c| is_organic_component(c, metals))
        .count();

    let metal_present = n_metal >= 1;
    let structural_balance = n_metal >= 1 && n_organic >= 1;

    let topology_known = if m.topology.is_empty() || topo_db.is_empty() {
        true
    } else {
        m.topology
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .all(|code| topo_db.contains(code))
    };

    let ratio_ok = if n_metal == 0 {
        true // vacuous; metal_present already fails
    } else {
        let ratio = n_organic as f64 / n_metal as f64;
        (cfg.min_organic_metal_ratio..=cfg.max_organic_metal_ratio).contains(&ratio)
    };
    let coordination_plausible = n_metal <= cfg.max_metal_components && ratio_ok;

    let is_valid = smiles_syntax
        && metal_present
        && structural_balance
        && topology_known
        && coordination_plausible;
    ValidityReport {
        is_valid,
        smiles_syntax,
        metal_present,
        structural_balance,
        topology_known,
        coordination_plausible,
        relaxed,
    }
}

/// Exact-match novelty index over normalized training strings.
#[derive(Debug, Clone, Default)]
pub struct NoveltyIndex {
    known: HashSet<String>,
}

impl NoveltyIndex {
    pub fn build<I, S>(training: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            known: training
                .into_iter()
                .map(|s| mofid::normalize_mofid_string(s.as_ref()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn contains(&self, raw: &str) -> bool {
        self.known.contains(&mofid::normalize_mofid_string(raw))
    }

    pub fn strings(&self) -> impl Iterator<Item = &str> {
        self.known.iter().map(String::as_str)
    }

    /// Highest similarity between `raw` and any indexed string.
    pub fn max_similarity(&self, raw: &str) -> f64 {
        let norm = mofid::normalize_mofid_string(raw);
        self.known
            .iter()
            .map(|k| similarity(&norm, k))
            .fold(0.0, f64::max)
    }
}

/// True iff the normalized string is absent from the index.
pub fn is_novel(raw: &str, idx: &NoveltyIndex) -> bool {
    !idx.contains(raw)
}

/// Normalized Levenshtein similarity: `1 - dist / max(len)`, on characters.
/// Two empty strings are identical (similarity 1).
pub fn similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let max_len = a.len().max(b.len());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / max_len as f64
}

fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Substring patterns counted as functional groups.
pub const FUNCTIONAL_GROUP_PATTERNS: [&str; 10] = [
    "C(=O)O", "C(=O)[O-]", "C#N", "N(=O)=O", "OH", "NH2", "C#C", "F", "Cl", "Br",
];

/// Distinct element symbols in one component.
fn extract_elements(component: &str, metals: &MetalSet) -> HashSet<String> {
    let mut elements = HashSet::new();
    let s = component;
    let mut i = 0;
    while i < s.len() {
        let rest = &s[i..];
        if rest.starts_with('[') {
            if let Some(close) = rest.find(']') {
                if close > 1 {
                    if let Some(sym) = bracket_element(&rest[1..close]) {
                        elements.insert(sym);
                    }
                    i += close + 1;
                    continue;
                }
            }
        }
        if let Some(m) = metals.match_at(rest) {
            elements.insert(m.to_string());
            i += m.len();
            continue;
        }
        if rest.starts_with("Cl") || rest.starts_with("Br") {
            elements.insert(rest[..2].to_string());
            i += 2;
            continue;
        }
        let ch = rest.chars().next().unwrap();
        if "BCNOSPFI".contains(ch) {
            elements.insert(ch.to_string());
        } else if "bcnosp".contains(ch) {
            elements.insert(ch.to_ascii_uppercase().to_string());
        }
        i += ch.len_utf8();
    }
    elements
}

/// Element set and functional-group count for a parsed MOFid.
pub fn extract_composition(m: &MofId, metals: &MetalSet) -> (HashSet<String>, usize) {
    let mut elements = HashSet::new();
    let mut groups = 0;
    for comp in &m.smiles_components {
        elements.extend(extract_elements(comp, metals));
        for pat in FUNCTIONAL_GROUP_PATTERNS {
            groups += comp.matches(pat).count();
        }
    }
    (elements, groups)
}

/// Signature used to count "similar" structures in the generation history:
/// length bucket, sorted element set, topology code.
pub fn structure_signature(raw: &str, metals: &MetalSet) -> String {
    let bucket = raw.chars().count() / 10;
    match mofid::parse_mofid(raw) {
        Ok(m) => {
            let (elements, _) = extract_composition(&m, metals);
            let mut sorted: Vec<_> = elements.into_iter().collect();
            sorted.sort();
            format!("{bucket}|{}|{}", sorted.join(","), m.topology)
        }
        Err(_) => format!("{bucket}|unparsed|"),
    }
}

pub(crate) fn count_functional_groups(component: &str) -> usize {
    FUNCTIONAL_GROUP_PATTERNS
        .iter()
        .map(|pat| component.matches(pat).count())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mofid::parse_mofid;

    fn defaults() -> (TopoDb, MetalSet, ValidityConfig) {
        (TopoDb::bundled(), MetalSet::default(), ValidityConfig::default())
    }

    #[test]
    fn table_example_is_fully_valid() {
        let (db, metals, cfg) = defaults();
        let m = parse_mofid("C1=CC(=CC=C1C(=O)O)C(=O)O.Cu && pcu").unwrap();
        let report = check_validity(&m, &db, &metals, &cfg, false);
        assert!(report.is_valid, "{report:?}");
        assert!(report.checks().iter().all(|(_, ok)| *ok));
    }

    #[test]
    fn organic_only_fails_metal_presence() {
        let (db, metals, cfg) = defaults();
        let m = parse_mofid("CCO").unwrap();
        let report = check_validity(&m, &db, &metals, &cfg, false);
        assert!(!report.metal_present);
        assert!(!report.is_valid);
        assert!(report.coordination_plausible);
    }

    #[test]
    fn unclosed_ring_fails_strict_passes_relaxed() {
        let (db, metals, cfg) = defaults();
        let m = parse_mofid("C1CC.Cu && pcu").unwrap();
        let strict = check_validity(&m, &db, &metals, &cfg, false);
        assert!(!strict.smiles_syntax);
        let relaxed = check_validity(&m, &db, &metals, &cfg, true);
        assert!(relaxed.smiles_syntax);
        assert!(relaxed.is_valid);
    }

    #[test]
    fn dangling_bond_fails_strict_passes_relaxed() {
        let (db, metals, cfg) = defaults();
        let m = parse_mofid("CC=.Cu && pcu").unwrap();
        assert!(!check_validity(&m, &db, &metals, &cfg, false).smiles_syntax);
        assert!(check_validity(&m, &db, &metals, &cfg, true).smiles_syntax);
    }

    #[test]
    fn unknown_topology_fails_unless_db_empty() {
        let metals = MetalSet::default();
        let cfg = ValidityConfig::default();
        let m = parse_mofid("C.Cu && xyz").unwrap();
        let report = check_validity(&m, &TopoDb::bundled(), &metals, &cfg, false);
        assert!(!report.topology_known);
        let report = check_validity(&m, &TopoDb::empty(), &metals, &cfg, false);
        assert!(report.topology_known);
    }

    #[test]
    fn metal_only_fails_balance_and_coordination() {
        let (db, metals, cfg) = defaults();
        let m = parse_mofid("Cu && pcu").unwrap();
        let report = check_validity(&m, &db, &metals, &cfg, false);
        assert!(report.metal_present);
        assert!(!report.structural_balance);
        assert!(!report.coordination_plausible);
    }

    #[test]
    fn too_many_metal_components_fail_coordination() {
        let (db, metals, cfg) = defaults();
        let m = parse_mofid("C.Cu.Cu.Cu.Cu.Cu && pcu").unwrap();
        assert!(!check_validity(&m, &db, &metals, &cfg, false).coordination_plausible);
    }

    #[test]
    fn bracketed_metal_counts_as_metal() {
        let (db, metals, cfg) = defaults();
        let m = parse_mofid("CCO.[Zn+2] && dia").unwrap();
        let report = check_validity(&m, &db, &metals, &cfg, false);
        assert!(report.metal_present);
        assert!(report.is_valid, "{report:?}");
    }

    #[test]
    fn relaxation_is_monotone() {
        let (db, metals, cfg) = defaults();
        for raw in [
            "C1=CC(=CC=C1C(=O)O)C(=O)O.Cu && pcu",
            "C1CC.Cu && pcu",
            "CCO",
            "Cu && pcu",
            "C(C.Cu && dia",
        ] {
            let m = parse_mofid(raw).unwrap();
            let strict = check_validity(&m, &db, &metals, &cfg, false);
            let relaxed = check_validity(&m, &db, &metals, &cfg, true);
            assert!(
                !strict.is_valid || relaxed.is_valid,
                "relaxation flipped {raw} invalid"
            );
        }
    }

    #[test]
    fn novelty_membership() {
        let idx = NoveltyIndex::build(["C.Cu && pcu", "CCO.Zn && dia"]);
        assert!(!is_novel("C.Cu && pcu", &idx));
        assert!(!is_novel("C.Cu   &&   pcu", &idx));
        assert!(is_novel("C.Fe && pcu", &idx));
    }

    #[test]
    fn similarity_oracle_values() {
        assert_eq!(similarity("abc", "abc"), 1.0);
        assert_eq!(similarity("abcd", "abce"), 0.75);
        assert_eq!(similarity("a", ""), 0.0);
        assert_eq!(similarity("", ""), 1.0);
    }

    #[test]
    fn similarity_is_symmetric() {
        let pairs = [("C.Cu && pcu", "C.Zn && pcu"), ("abc", "xyz"), ("", "ab")];
        for (a, b) in pairs {
            assert_eq!(similarity(a, b), similarity(b, a));
        }
    }

    #[test]
    fn composition_table_example_one() {
        let metals = MetalSet::default();
        let m = parse_mofid("C1=CC(=CC=C1C(=O)O)C(=O)O.Cu && pcu").unwrap();
        let (elements, groups) = extract_composition(&m, &metals);
        let want: HashSet<String> = ["C", "O", "Cu"].iter().map(|s| s.to_string()).collect();
        assert_eq!(elements, want);
        assert_eq!(groups, 2);
    }

    #[test]
    fn composition_bare_metal() {
        let metals = MetalSet::default();
        let m = parse_mofid("Cu").unwrap();
        let (elements, groups) = extract_composition(&m, &metals);
        let want: HashSet<String> = [("Cu".to_string())].into_iter().collect();
        assert_eq!(elements, want);
        assert_eq!(groups, 0);
    }

    #[test]
    fn composition_table_example_three() {
        let metals = MetalSet::default();
        let m = parse_mofid("C1=CC=C(C=C1)C#N.Zn && dia-c").unwrap();
        let (elements, groups) = extract_composition(&m, &metals);
        let want: HashSet<String> = ["C", "N", "Zn"].iter().map(|s| s.to_string()).collect();
        assert_eq!(elements, want);
        assert_eq!(groups, 1);
    }

    #[test]
    fn aromatic_atoms_map_to_uppercase_elements() {
        let metals = MetalSet::default();
        let m = parse_mofid("c1cc(cc(c1)C(=O)O)N(=O)=O.Cu && nbo-d").unwrap();
        let (elements, _) = extract_composition(&m, &metals);
        assert!(elements.contains("C"));
        assert!(elements.contains("N"));
        assert!(elements.contains("O"));
        assert!(elements.contains("Cu"));
    }
}
