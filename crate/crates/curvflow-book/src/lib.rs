//! The chapters of `book/` as modules, so `cargo test` runs their snippets.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod overview {}

#[doc = include_str!("../../../book/src/constants.md")]
pub mod constants {}

#[doc = include_str!("../../../book/src/energy.md")]
pub mod energy {}

#[doc = include_str!("../../../book/src/flow.md")]
pub mod flow {}

#[doc = include_str!("../../../book/src/bubbles.md")]
pub mod bubbles {}

#[doc = include_str!("../../../book/src/shadow.md")]
pub mod shadow {}

#[doc = include_str!("../../../book/src/lyapunov.md")]
pub mod lyapunov {}

#[doc = include_str!("../../../book/src/decompose.md")]
pub mod decompose {}

#[doc = include_str!("../../../book/src/condition.md")]
pub mod condition {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
