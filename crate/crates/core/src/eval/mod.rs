//! Scenarios, the end-to-end pipeline and accuracy metrics.

mod metrics;
mod pipeline;
mod scenario;

pub use metrics::*;
pub use pipeline::*;
pub use scenario::*;

#[cfg(test)]
mod tests;
