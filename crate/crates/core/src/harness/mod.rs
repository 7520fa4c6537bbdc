//! End-to-end experiments: configuration, tuning with a validation/evaluation
//! seed split, sweeps, and CSV / plot-data persistence.

mod config;
mod experiment;
mod output;
mod plot;
mod report;

pub use config::{ConfigError, ExperimentConfig, NoiseFamily};
pub use experiment::{
    cell_id, evaluate, evaluation_seeds, grid_cells, planner_inputs, probe_for, run_momentum_smallbatch, run_seed,
    select_cell, sweep_dimension, sweep_tail, tune, tune_and_evaluate, validation_seeds, AuditedOracle, BaseContrast,
    Cell, CellOutcome, CellScore, Evaluation, ExperimentCache, MomentumExecution, MomentumReport, SeedAudit,
    SeedFinals, SeedPhase, Selection, TuneOutcome, WARM_BATCH_EXECUTION_CAP,
};
pub use output::{
    checks_to_csv, emit_checks, emit_records, emit_summary, emit_text, fmt_real, parse_checks_csv,
    parse_records_csv, parse_summary_csv, records_to_csv, summary_to_csv, OutputFormat, SummaryRow, CHECK_COLUMNS,
    RECORD_COLUMNS, SUMMARY_COLUMNS,
};
pub use plot::{curve_text, curves, emit_plotdata, histogram_text, render_svg, CurvePoint};
pub use report::{
    momentum_text, probe_text, run_representative, sweep_table, tune_text, write_sweep, RepresentativeReport,
};
