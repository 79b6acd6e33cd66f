//! Rollout-based success rates and continual-learning metrics.

mod crl;
mod rollout;

pub use crl::{
    compute_metrics, csv_row, mean_std, render_table, summarize, to_csv, CrlMetrics, EvalReport, SuccessMatrix,
    SummaryRow, CSV_HEADER, REPORT_VERSION,
};
pub use rollout::{eval_start, expert_success, policy_success, rollout, success_rate, RandomActor};
