//! Mining of Dockerfile best-practice rules from a corpus, and detection of
//! rule violations in individual Dockerfiles.
//!
//! Files go through [`analysis::analyze`] to become [`ir::IrSequence`]s.
//! [`miner`] finds frequent patterns over those sequences, [`rules`] holds
//! the rule catalog and [`detect`] checks a file against it.

pub mod analysis;
pub mod corpus;
pub mod detect;
pub mod dockerfile;
pub mod ir;
pub mod miner;
pub mod rules;
pub mod shell;

pub use analysis::{analyze, Analysis};
pub use dockerfile::{parse_dockerfile, DockerfileAst, LineSpan, SyntaxError};
pub use ir::{IrSequence, IrToken, TokenKind};
