//! Keeps the book honest: every `rust` code fence in `book/src/*.md` is
//! compiled and run as a doctest of this crate, so `cargo test --workspace`
//! fails whenever the guide drifts from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/velocity-obstacles.md")]
pub mod velocity_obstacles {}
#[doc = include_str!("../../../book/src/kinematics.md")]
pub mod kinematics {}
#[doc = include_str!("../../../book/src/world.md")]
pub mod world {}
#[doc = include_str!("../../../book/src/reward.md")]
pub mod reward {}
#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/baseline.md")]
pub mod baseline {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
