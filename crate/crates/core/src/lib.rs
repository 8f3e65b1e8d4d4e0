//! Generation of MOF identifier strings (MOFids) with targeted properties.
//!
//! The pipeline is: tokenize MOFid strings, pretrain a small decoder-only
//! transformer with next-token prediction, fine-tune a regression head for
//! property prediction, then optimize the generator with REINFORCE against a
//! multi-component reward (target proximity, validity, novelty, diversity).
//!
//! Everything runs on CPU with hand-written forward/backward passes in f64;
//! checkpoints are stored as little-endian f32 arrays.

pub mod data;
pub mod eval;
pub mod mofid;
pub mod model;
pub mod predictor;
pub mod reward;
pub mod rng;
pub mod sampler;
pub mod seq;
pub mod train;
pub mod validator;
pub mod vocab;

pub use mofid::{parse_mofid, MofId, MofIdError};
pub use seq::TokenSeq;
pub use validator::{NoveltyIndex, ValidityReport};
pub use vocab::Vocabulary;
