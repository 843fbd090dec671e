//! Carry-gap regressions: panel assembly, date-clustered OLS, maturity-bin
//! and relative-error diagnostics, and leave-one-year-out validation.

pub mod linalg;
mod loyo;
mod ols;
mod panel;

pub use loyo::{
    run_loyo, run_loyo_with, sign_table, write_loyo, write_sign_table, FoldMetrics,
    LoyoAggregates, LoyoFold, LoyoReport, Scope, SignCount, SignSummary, EXCLUDED_YEAR,
    LOYO_HEADER, MIN_FOLD_TEST_ROWS,
};
pub use ols::{
    binned_fit, clustered_covariance, design_matrix, fit_coefficients, fit_ols, predict_with,
    rel_error_diag, spec_rows, Regressor, RegressionFit, RelErrorDiag, Spec, Term, MIN_BIN_ROWS,
};
pub use panel::{
    build_panel, read_panel, write_panel, DropAudit, PanelBuild, PanelRow, MIN_REGRESSION_TAU,
    PANEL_HEADER,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EconError {
    #[error("{rows} rows cannot support {params} parameters plus two degrees of freedom")]
    TooFewRows { rows: usize, params: usize },
    #[error("design matrix is rank deficient at column `{column}`")]
    RankDeficient { column: &'static str },
    #[error("leave-one-year-out needs at least 3 calendar years, found {found}")]
    TooFewYears { found: usize },
}
