//! Token vocabulary with reserved special tokens.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::mofid::{self, SEPARATOR};

pub const BOS: &str = "[BOS]";
pub const EOS: &str = "[EOS]";
pub const PAD: &str = "[PAD]";
pub const MASK: &str = "[MASK]";
pub const UNK: &str = "[UNK]";

/// The five special tokens, in id order 0..=4.
pub const SPECIAL_TOKENS: [&str; 5] = [BOS, EOS, PAD, MASK, UNK];

const VOCAB_FILE_HEADER: &str = "#mofgen-vocab\tv1";

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("malformed vocabulary file at line {0}")]
    MalformedFile(usize),
    #[error("unsupported vocabulary file version")]
    UnsupportedVersion,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Immutable token <-> id bijection. Special ids are fixed: BOS=0, EOS=1,
/// PAD=2, MASK=3, UNK=4; remaining tokens follow in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Build from an ordered list of non-special tokens (sorted, deduped by
    /// the caller). Used internally and by the file loader.
    fn from_sorted_tokens(tokens: Vec<String>) -> Self {
        let mut id_to_token: Vec<String> =
            SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(tokens);
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { token_to_id, id_to_token }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // specials are always present
    }

    pub fn bos_id(&self) -> u32 {
        0
    }

    pub fn eos_id(&self) -> u32 {
        1
    }

    pub fn pad_id(&self) -> u32 {
        2
    }

    pub fn mask_id(&self) -> u32 {
        3
    }

    pub fn unk_id(&self) -> u32 {
        4
    }

    pub fn is_special(&self, id: u32) -> bool {
        id < SPECIAL_TOKENS.len() as u32
    }

    /// Id for a token, falling back to UNK.
    pub fn encode_token(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(self.unk_id())
    }

    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn separator_id(&self) -> Option<u32> {
        self.lookup(SEPARATOR)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.id_to_token.iter().map(String::as_str)
    }

    /// Serialize as a versioned `id<TAB>token` text file, specials first.
    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        let mut out = Vec::new();
        writeln!(out, "{VOCAB_FILE_HEADER}")?;
        for (i, tok) in self.id_to_token.iter().enumerate() {
            writeln!(out, "{i}\t{tok}")?;
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        match lines.next() {
            Some(Ok(h)) if h == VOCAB_FILE_HEADER => {}
            Some(Ok(_)) => return Err(VocabError::UnsupportedVersion),
            _ => return Err(VocabError::MalformedFile(1)),
        }
        let mut id_to_token = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (id, tok) = line
                .split_once('\t')
                .ok_or(VocabError::MalformedFile(lineno + 2))?;
            let id: usize = id.parse().map_err(|_| VocabError::MalformedFile(lineno + 2))?;
            if id != id_to_token.len() {
                return Err(VocabError::MalformedFile(lineno + 2));
            }
            id_to_token.push(tok.to_string());
        }
        if id_to_token.len() < SPECIAL_TOKENS.len()
            || SPECIAL_TOKENS
                .iter()
                .zip(&id_to_token)
                .any(|(want, got)| want != got)
        {
            return Err(VocabError::MalformedFile(2));
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Self { token_to_id, id_to_token })
    }
}

/// Build a vocabulary from a corpus of MOFid strings.
///
/// The result holds the special tokens, the `&&` separator, every distinct
/// token produced by tokenizing the corpus, and any `reserved` extras.
/// Lines that fail to parse as MOFids are tokenized as plain SMILES so the
/// build is total.
pub fn build_vocab<I, S>(corpus: I, reserved: &[String]) -> Result<Vocabulary, VocabError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut seen = std::collections::BTreeSet::new();
    let mut any = false;
    for line in corpus {
        let line = line.as_ref().trim();
        if line.is_empty() {
            continue;
        }
        any = true;
        match mofid::parse_mofid(line) {
            Ok(m) => seen.extend(mofid::mofid_tokens(&m)),
            Err(_) => seen.extend(mofid::tokenize_smiles(line)),
        }
    }
    if !any {
        return Err(VocabError::EmptyCorpus);
    }
    seen.insert(SEPARATOR.to_string());
    for extra in reserved {
        seen.insert(extra.clone());
    }
    for special in SPECIAL_TOKENS {
        seen.remove(special);
    }
    Ok(Vocabulary::from_sorted_tokens(seen.into_iter().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_corpus_vocab() {
        let v = build_vocab(["C.Cu && pcu"], &[]).unwrap();
        assert_eq!(v.len(), 10);
        for tok in [BOS, EOS, PAD, MASK, UNK, "&&", "C", ".", "Cu", "pcu"] {
            assert!(v.lookup(tok).is_some(), "missing {tok}");
        }
        assert_eq!(v.bos_id(), 0);
        assert_eq!(v.token(0), Some(BOS));
        assert_eq!(v.token(4), Some(UNK));
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_vocab(["C.Cu && pcu", "CCO.Zn && dia"], &[]).unwrap();
        let b = build_vocab(["C.Cu && pcu", "CCO.Zn && dia"], &[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_fails() {
        let lines: Vec<String> = vec![];
        assert!(matches!(build_vocab(lines, &[]), Err(VocabError::EmptyCorpus)));
        assert!(matches!(
            build_vocab(["  ", ""], &[]),
            Err(VocabError::EmptyCorpus)
        ));
    }

    #[test]
    fn ids_are_bijective_and_specials_distinct() {
        let v = build_vocab(["C1=CC=C(C=C1)C#N.Zn && dia-c"], &[]).unwrap();
        for id in 0..v.len() as u32 {
            let tok = v.token(id).unwrap();
            assert_eq!(v.lookup(tok), Some(id));
        }
        let specials = [v.bos_id(), v.eos_id(), v.pad_id(), v.mask_id(), v.unk_id()];
        let distinct: std::collections::HashSet<_> = specials.iter().collect();
        assert_eq!(distinct.len(), specials.len());
    }

    #[test]
    fn save_load_round_trip() {
        let v = build_vocab(["C.Cu && pcu", "[Zn].CCO && srs"], &["extra".into()]).unwrap();
        let dir = std::env::temp_dir().join(format!("mofgen-vocab-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("vocab.tsv");
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(v, loaded);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn unknown_token_encodes_to_unk() {
        let v = build_vocab(["C.Cu && pcu"], &[]).unwrap();
        assert_eq!(v.encode_token("Zn"), v.unk_id());
        assert_eq!(v.encode_token("C"), v.lookup("C").unwrap());
    }
}
