//! Guide chapters compiled as documentation, so `cargo test --doc` runs
//! every snippet in `book/src`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/game.md")]
pub mod game {}
#[doc = include_str!("../../../book/src/clifford.md")]
pub mod clifford {}
#[doc = include_str!("../../../book/src/bell.md")]
pub mod bell {}
#[doc = include_str!("../../../book/src/sos.md")]
pub mod sos {}
#[doc = include_str!("../../../book/src/extraction.md")]
pub mod extraction {}
#[doc = include_str!("../../../book/src/robustness.md")]
pub mod robustness {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
