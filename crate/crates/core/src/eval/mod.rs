//! Benchmark harness: baselines, masking protocols, reports, latent exports
//! and plots.

mod baselines;
mod export;
mod plot;
mod protocol;
mod report;

pub use baselines::{baseline_linear_interp, baseline_mean};
pub use export::{adapted_latents, export_latents, write_latents};
pub use plot::{plot_series_svg, render_series_svg};
pub use protocol::{benchmark, plan_splits, protocol_mask, run_protocol, Method, Protocol, Split, SplitMode};
pub use report::{Aggregate, EvalReport, EvalRow, MaskRecord, Summary, Timing};
