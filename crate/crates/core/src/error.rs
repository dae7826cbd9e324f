use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("missing required field `{0}`")]
    Missing(&'static str),
    #[error("unknown preset `{0}` (expected single-ap or grid-16ap)")]
    UnknownPreset(String),
    #[error("unsupported schema_version {found} (this build reads {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("cannot parse policy `{0}`")]
    Policy(String),
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("batch needs at least 2 seeds, got {0}")]
    TooFewSeeds(usize),
    #[error("duplicate seed {0} in batch")]
    DuplicateSeed(u64),
    #[error("run with seed {seed} failed: {message}")]
    RunFailed { seed: u64, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("sweep axis has no values")]
    EmptySweep,
}
