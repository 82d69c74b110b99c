//! Runs the guide's code snippets as doctests so the book cannot drift from
//! the library. Each chapter of `book/src` is included as a doc comment; any
//! fenced Rust block in it compiles and runs under `cargo test --doc`.

#[doc = include_str!("../../../README.md")]
mod readme {}

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}

#[doc = include_str!("../../../book/src/events-and-batches.md")]
mod events_and_batches {}

#[doc = include_str!("../../../book/src/delta-times.md")]
mod delta_times {}

#[doc = include_str!("../../../book/src/quantile-models.md")]
mod quantile_models {}

#[doc = include_str!("../../../book/src/detection.md")]
mod detection {}

#[doc = include_str!("../../../book/src/synthetic-data.md")]
mod synthetic_data {}

#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
