//! Threshold-stopping sessions, the no-threshold sweep, ITR and reports.

mod decoder;
mod itr;
mod report;
mod session;

pub use decoder::{Decoder, MarkovDecoder, Method, RbDecoder};
pub use itr::{itr, itr_per_sequence};
pub use report::{
    ThresholdSummary,
    export_reports, mean_std, HistogramRow, ReportPaths, SessionRecord, SummaryRow, SweepRow,
    HISTOGRAM_CSV, SESSION_JSON, SUMMARY_CSV, SWEEP_CSV,
};
pub use session::{
    final_accuracy, run_decoder_trial, run_session, sweep_no_threshold, SessionConfig,
    SessionResult, TrialOutcome,
};
