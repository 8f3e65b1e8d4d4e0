//! Token-id sequences with attention masks: encoding, padding, decoding.

use crate::mofid::{self, MofId, SEPARATOR};
use crate::vocab::Vocabulary;

/// A token-id sequence padded (or truncated) to a fixed length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    /// 1 where `ids` is a real token, 0 where it is padding.
    pub attention_mask: Vec<u8>,
}

impl TokenSeq {
    pub fn new(ids: Vec<u32>, pad_id: u32) -> Self {
        let attention_mask = ids.iter().map(|&id| u8::from(id != pad_id)).collect();
        Self { ids, attention_mask }
    }

    /// Number of non-PAD tokens.
    pub fn len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ids of the non-PAD prefix.
    pub fn active_ids(&self) -> &[u32] {
        &self.ids[..self.len()]
    }

    /// Check the shape produced by `encode`: BOS first, exactly one EOS at
    /// the end of the non-PAD prefix, padding only as a suffix.
    pub fn is_well_formed(&self, vocab: &Vocabulary) -> bool {
        let n = self.len();
        if n < 2 || self.ids.first() != Some(&vocab.bos_id()) {
            return false;
        }
        if self.ids[..n].iter().any(|&id| id == vocab.pad_id()) {
            return false;
        }
        if self.ids[n..].iter().any(|&id| id != vocab.pad_id()) {
            return false;
        }
        let eos_count = self.ids[..n].iter().filter(|&&id| id == vocab.eos_id()).count();
        eos_count == 1 && self.ids[n - 1] == vocab.eos_id()
    }
}

/// Warnings raised while decoding a sequence that violates the encode shape.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeFlags {
    /// A PAD id appeared before the last non-PAD token.
    pub interior_pad: bool,
    /// Count of UNK ids skipped.
    pub unknown_tokens: usize,
}

fn token_stream(m: &MofId, vocab: &Vocabulary) -> Vec<u32> {
    let mut ids = vec![vocab.bos_id()];
    ids.extend(mofid::mofid_tokens(m).iter().map(|t| vocab.encode_token(t)));
    ids.push(vocab.eos_id());
    ids
}

/// Encode a parsed MOFid: `[BOS] tokens... [EOS]`, padded with PAD up to
/// `max_len` or truncated to it. Truncation overwrites the final slot with
/// EOS so downstream logic always sees a terminated sequence.
pub fn encode(m: &MofId, vocab: &Vocabulary, max_len: usize) -> TokenSeq {
    let mut ids = token_stream(m, vocab);
    pad_or_truncate(&mut ids, vocab, max_len);
    TokenSeq::new(ids, vocab.pad_id())
}

fn pad_or_truncate(ids: &mut Vec<u32>, vocab: &Vocabulary, max_len: usize) {
    if ids.len() > max_len {
        ids.truncate(max_len);
        if let Some(last) = ids.last_mut() {
            *last = vocab.eos_id();
        }
    } else {
        ids.resize(max_len, vocab.pad_id());
    }
}

/// Encode a batch with dynamic padding: every sequence is padded to the
/// longest unpadded stream in the batch (capped at `max_len`).
pub fn encode_batch(ms: &[MofId], vocab: &Vocabulary, max_len: usize) -> Vec<TokenSeq> {
    let streams: Vec<Vec<u32>> = ms.iter().map(|m| token_stream(m, vocab)).collect();
    let longest = streams.iter().map(Vec::len).max().unwrap_or(0).min(max_len);
    streams
        .into_iter()
        .map(|mut ids| {
            pad_or_truncate(&mut ids, vocab, longest);
            TokenSeq::new(ids, vocab.pad_id())
        })
        .collect()
}

/// Decode to a string, reporting shape violations.
///
/// Special tokens are skipped; `&&` gets one space on each side; everything
/// else is concatenated directly (`.` and `,` separators are real tokens).
pub fn decode_with_flags(seq: &TokenSeq, vocab: &Vocabulary) -> (String, DecodeFlags) {
    let mut flags = DecodeFlags::default();
    let last_non_pad = seq
        .ids
        .iter()
        .rposition(|&id| id != vocab.pad_id())
        .map_or(0, |p| p + 1);
    let mut out = String::new();
    for (i, &id) in seq.ids.iter().enumerate() {
        if id == vocab.pad_id() {
            if i < last_non_pad {
                flags.interior_pad = true;
            }
            continue;
        }
        if id == vocab.unk_id() {
            flags.unknown_tokens += 1;
            continue;
        }
        if vocab.is_special(id) {
            continue;
        }
        match vocab.token(id) {
            Some(tok) if tok == SEPARATOR => {
                out.push_str(" && ");
            }
            Some(tok) => out.push_str(tok),
            None => flags.unknown_tokens += 1,
        }
    }
    (out.trim().to_string(), flags)
}

/// Decode to a string, discarding warnings.
pub fn decode(seq: &TokenSeq, vocab: &Vocabulary) -> String {
    decode_with_flags(seq, vocab).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mofid::parse_mofid;
    use crate::vocab::build_vocab;

    const TABLE: [&str; 3] = [
        "C1=CC(=CC=C1C(=O)O)C(=O)O.Cu && pcu",
        "c1cc(cc(c1)C(=O)O)N(=O)=O.c1cc(cc(c1)C(=O)O)C(=O)O.Cu && nbo-d",
        "C1=CC=C(C=C1)C#N.Zn && dia-c",
    ];

    fn table_vocab() -> Vocabulary {
        build_vocab(TABLE, &[]).unwrap()
    }

    #[test]
    fn padding_arithmetic() {
        let vocab = table_vocab();
        // C.Cu && pcu -> BOS C . Cu && pcu EOS = 7 tokens; add two more
        // linkers for a 9-token stream.
        let m = parse_mofid("C.C.C.Cu && pcu").unwrap();
        let seq = encode(&m, &vocab, 12);
        assert_eq!(seq.ids.len(), 12);
        assert_eq!(seq.len(), 11);
        let m = parse_mofid("C.C.Cu && pcu").unwrap();
        let seq = encode(&m, &vocab, 12);
        assert_eq!(seq.ids.len(), 12);
        assert_eq!(seq.len(), 9);
        assert_eq!(seq.attention_mask.iter().map(|&m| m as usize).sum::<usize>(), 9);
        assert_eq!(&seq.ids[9..], &[vocab.pad_id(); 3]);
    }

    #[test]
    fn truncation_terminates_with_eos() {
        let vocab = table_vocab();
        let long = format!("{} && pcu", vec!["C"; 600].join("."));
        let m = parse_mofid(&long).unwrap();
        let seq = encode(&m, &vocab, 512);
        assert_eq!(seq.ids.len(), 512);
        assert_eq!(seq.ids[511], vocab.eos_id());
        assert_eq!(seq.len(), 512);
        assert!(seq.is_well_formed(&vocab));
    }

    #[test]
    fn round_trip_table_examples() {
        let vocab = table_vocab();
        for raw in TABLE {
            let m = parse_mofid(raw).unwrap();
            let seq = encode(&m, &vocab, 128);
            assert!(seq.is_well_formed(&vocab));
            assert_eq!(decode(&seq, &vocab), raw);
        }
    }

    #[test]
    fn decode_bos_eos_only_is_empty() {
        let vocab = table_vocab();
        let seq = TokenSeq::new(vec![vocab.bos_id(), vocab.eos_id()], vocab.pad_id());
        assert_eq!(decode(&seq, &vocab), "");
    }

    #[test]
    fn interior_pad_is_skipped_and_flagged() {
        let vocab = table_vocab();
        let c = vocab.lookup("C").unwrap();
        let seq = TokenSeq::new(
            vec![vocab.bos_id(), c, vocab.pad_id(), c, vocab.eos_id()],
            vocab.pad_id(),
        );
        let (text, flags) = decode_with_flags(&seq, &vocab);
        assert_eq!(text, "CC");
        assert!(flags.interior_pad);
    }

    #[test]
    fn unknown_ids_are_skipped_and_counted() {
        let vocab = table_vocab();
        let seq = TokenSeq::new(
            vec![vocab.bos_id(), vocab.unk_id(), vocab.eos_id()],
            vocab.pad_id(),
        );
        let (text, flags) = decode_with_flags(&seq, &vocab);
        assert_eq!(text, "");
        assert_eq!(flags.unknown_tokens, 1);
    }

    #[test]
    fn dynamic_batch_padding_uses_longest() {
        let vocab = table_vocab();
        let ms: Vec<_> = ["C.Cu && pcu", "C1=CC=C(C=C1)C#N.Zn && dia-c"]
            .iter()
            .map(|s| parse_mofid(s).unwrap())
            .collect();
        let batch = encode_batch(&ms, &vocab, 512);
        let want = encode(&ms[1], &vocab, 512).len();
        assert!(batch.iter().all(|s| s.ids.len() == want));
        assert_eq!(batch[1].len(), want);
        assert!(batch[0].len() < want);
        for (m, s) in ms.iter().zip(&batch) {
            assert_eq!(decode(s, &vocab), m.raw);
        }
    }

    #[test]
    fn catenation_and_multi_topology_round_trip() {
        let strings = ["C.Cu && pcu.cat0", "C.Zn && pcu,dia", "CCO.Cu"];
        let vocab = build_vocab(strings, &[]).unwrap();
        for raw in strings {
            let m = parse_mofid(raw).unwrap();
            let seq = encode(&m, &vocab, 64);
            assert_eq!(decode(&seq, &vocab), raw);
        }
    }
}
