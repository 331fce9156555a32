use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },

    #[error("subcarrier count {requested} outside 1..={available}")]
    SubcarrierRange { requested: usize, available: usize },

    #[error("frame carries no energy, periodogram has no peak")]
    NoPeak,

    #[error("CRB undefined for fewer than two samples along an axis (got {0})")]
    DegenerateCrb(usize),

    #[error("elevation CRB saturated: asin argument {0} outside [-1, 1]")]
    AngleSaturated(f64),

    #[error("sensing target {xibar_sq:e} m^2 cannot be met, angle uncertainty alone contributes {gamma_term:e} m^2")]
    SensingInfeasible { xibar_sq: f64, gamma_term: f64 },

    #[error("rate target unreachable within {cap} subcarriers (uncapped demand {uncapped})")]
    DemandOverflow { uncapped: u64, cap: usize },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn ensure_positive(what: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { what, value })
    }
}
