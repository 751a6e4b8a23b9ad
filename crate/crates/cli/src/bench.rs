use std::path::Path;

use occu::bench::{self, BenchConfig};

use crate::artifacts;
use crate::config::load_json;
use crate::error::Result;

pub fn run(config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg: BenchConfig = match config {
        Some(p) => load_json(p)?,
        None => BenchConfig::default(),
    };
    let report = bench::run_bench(&cfg)?;
    for r in &report.rows {
        println!(
            "K={:>6}  likelihood {:.3e}s  MLE {:.3e}s ({} evaluations)",
            r.checklists, r.likelihood_secs, r.mle_secs, r.mle_evaluations
        );
    }
    println!(
        "slopes: likelihood {:.2}, MLE {:.2}, MLE per evaluation {:.2}",
        report.likelihood_slope, report.mle_slope, report.mle_per_evaluation_slope
    );
    println!(
        "busiest site x{}: likelihood ratio {:.2}, MLE per-evaluation ratio {:.2}",
        cfg.inflation, report.skew.likelihood_ratio, report.skew.mle_per_evaluation_ratio
    );
    artifacts::write_json(out, &report)
}
