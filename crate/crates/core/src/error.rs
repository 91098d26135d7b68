use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular linear system on subband {subband}: {what}")]
    Singular { subband: usize, what: String },

    #[error(
        "quadrature did not converge (relative change {rel_change:.3e} > {tol:.1e}) at separation {separation:.6e} m"
    )]
    Quadrature { rel_change: f64, tol: f64, separation: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("linear program: {0}")]
    Lp(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("non-finite objective after {iterations} iterations")]
    NonFinite { iterations: usize },

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("config serialize error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
