// mdbook cannot run the listings of a book against a local crate, so every
// chapter is pulled in here as the docs of an empty module and `cargo test
// --doc` runs the code blocks. One module per chapter keeps failures
// traceable to their chapter.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/target.md")]
pub mod target {}
#[doc = include_str!("src/neural_fields.md")]
pub mod neural_fields {}
#[doc = include_str!("src/integration.md")]
pub mod integration {}
#[doc = include_str!("src/training.md")]
pub mod training {}
#[doc = include_str!("src/analysis.md")]
pub mod analysis {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
