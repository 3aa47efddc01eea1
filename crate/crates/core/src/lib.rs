//! Algorithmic-randomness test harness.
//!
//! Bit sources ([`generators`]) feed packed bit strings ([`bitstream`]) into
//! five metrics ([`algotests`]): Borel normality and four tests built on the
//! Solovay-Strassen witness predicate over Carmichael targets
//! ([`numtheory`]). Per-source metric samples are compared with the
//! two-sample decision pipeline in [`stats`], and [`experiment`] wires it all
//! together behind a config file.

pub mod bitstream;
pub mod generators;
pub mod numtheory;
pub mod par;
pub mod algotests;
pub mod stats;
pub mod experiment;
