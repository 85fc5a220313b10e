//! The guide under `book/`, compiled so its snippets run as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}

#[doc = include_str!("../../../book/src/statistics.md")]
pub mod statistics {}

#[doc = include_str!("../../../book/src/permutation.md")]
pub mod permutation {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/consequences.md")]
pub mod consequences {}

#[doc = include_str!("../../../book/src/corrections.md")]
pub mod corrections {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
