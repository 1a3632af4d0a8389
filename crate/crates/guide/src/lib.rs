//! Compiles every chapter of the guide in `book/src` as rustdoc, so each
//! code block runs under `cargo test --doc`. One module per chapter keeps
//! failures traceable to their chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}

#[doc = include_str!("../../../book/src/exact.md")]
pub mod exact {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}

#[doc = include_str!("../../../book/src/reproducibility.md")]
pub mod reproducibility {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
