//! Automatic evaluation: TER, usefulness, rank correlation, agreement and
//! combination reports.

mod annotation;
mod records;
mod stats;
mod ter;
mod usefulness;

pub use annotation::{
    pairwise_kappa, parse_annotations, preference_report, AnnotationRow, Annotations,
    PairwiseAgreement, Preference, PreferenceReport,
};
pub use records::{
    combine_report, correlate_table, group_records, read_records, run_test_set,
    usefulness_by_method, write_correlation_table, write_records, CombineReport, CorrelationRow,
    EvalRecord, MethodTer, PipelineOutput, QueryGroup, UsefulnessMode, CORRELATION_COLUMNS,
    METHOD_FMS, METHOD_NEURO, RECORD_COLUMNS, USEFUL_TER,
};
pub use stats::{cohen_kappa, correlate, kendall_tau, pearson, AgreementMatrix, CorrelationReport};
pub use ter::{
    mean_ter, ter, total_ter, TerBreakdown, TerMode, MAX_SHIFT_BLOCK, MAX_SHIFT_DISTANCE,
    MAX_SHIFT_ITERATIONS,
};
pub use usefulness::{oracle_combine, usefulness, UsefulnessReport, UsefulnessRow, DEFAULT_THRESHOLDS};
