"""Study drivers, file formats, figures, and the command line interface."""

from .io import (
    CSV_HEADER,
    ParseError,
    emit_outputs,
    ingest_csv,
    write_dataset_csv,
    write_test_report_json,
)
from .studies import (
    GRIDSIZE_SCENARIOS,
    GridsizeSeries,
    PowerRow,
    StudyConfig,
    run_gridsize_study,
    run_power_study,
    run_single_test,
    summarize_report,
)

__all__ = [
    "CSV_HEADER",
    "ParseError",
    "emit_outputs",
    "ingest_csv",
    "write_dataset_csv",
    "write_test_report_json",
    "GRIDSIZE_SCENARIOS",
    "GridsizeSeries",
    "PowerRow",
    "StudyConfig",
    "run_gridsize_study",
    "run_power_study",
    "run_single_test",
    "summarize_report",
]
