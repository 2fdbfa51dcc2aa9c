//! CSV ingestion, JSON configuration, draw persistence and run management.

mod codec;
mod config;
mod csvload;
mod run;

pub use codec::{decode_draws, encode_draws, write_draws_csv, FORMAT_VERSION, MAGIC};
pub use config::{
    AgreementCurveRequest, AgreementTableRequest, CurveRequest, CutoffSpec, DrawFormat, FunctionalRequests,
    InverseDensityRequest, LatentRequest, OrdinalColumn, OrdinalCovariateRequest, PolychoricRequest, PriorSpec,
    RunConfig,
};
pub use csvload::{load_csv, parse_csv, DataSpec};
pub use run::{
    compute_outputs, hyperpriors_for, load_draws, recompute_functionals, run, ChainRecord, Manifest, RunArtifacts,
    MANIFEST_FILE,
};
