//! Dataset ingestion, validation and synthetic data generation.

mod dataset;
mod dgp;

pub use dataset::{
    load_dataset, read_dataset, save_dataset, write_dataset, Dataset, Exclusions, LaborData, LaborSchema,
    Schema,
};
pub use dgp::{
    empirical_moments, implied_copula_rho, simulate_dgp, ChoiceErrors, DgpConfig, LaborDgp, MomentReport,
    TruthRecord,
};
