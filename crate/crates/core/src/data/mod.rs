//! Ingestion, encoding, simulation and result files.

mod encode;
mod load;
mod report;
mod results;
mod schema;
mod simulate;

pub use encode::{
    binary_code, covariate_row, decode_record, design_labels, encode_design, encode_with_centering, Centering,
    EncodedDesign, AGE, AGE_SQUARED, CITIZENSHIP, EDUCATION, MARITAL, OUTCOMES,
};
pub use load::{load_csv, read_csv, ExtraValue, IngestionReport, RowError, SourceData, SourceRow};
pub use report::render_report;
pub use results::{
    coefficient_tables, dimension_name, latent_table, write_atomic, write_tables, CoefficientTable, LatentTableRow,
    ResultsFile, TableRow, RESULTS_SCHEMA_VERSION,
};
pub use schema::{
    Categories, CenteringConfig, ColumnMap, ExtraCovariate, Filters, LevelSpec, References, SchemaConfig,
};
pub use simulate::{
    simulate, simulate_design, synthetic_age, write_source_csv, CovariateSource, SimulatedDesign, SimulatedSource,
    CLASS_COLUMN, SYNTHETIC_AGE_MEAN, SYNTHETIC_AGE_RANGE, SYNTHETIC_AGE_SD, SYNTHETIC_CITIZENSHIP,
};
