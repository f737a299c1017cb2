use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("decimal: {0}")]
    Decimal(String),

    #[error("malformed dendrogram: {}", .0.join("; "))]
    Malformed(Vec<String>),

    #[error("matrix is not ultrametric: r({i},{j}) = {rij} exceeds max(r({i},{k}), r({k},{j})) = {bound}")]
    NotUltrametric {
        i: usize,
        j: usize,
        k: usize,
        rij: String,
        bound: String,
    },

    #[error("invalid distance matrix: {0}")]
    Matrix(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("enumeration budget exceeded: {needed} tuples > budget {budget}; use Monte-Carlo evaluation")]
    Budget { needed: u128, budget: u128 },

    #[error("test function has no gradient")]
    MissingGradient,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("Lévy measure has infinite activity; declare a small-jump truncation threshold")]
    InfiniteActivity,

    #[error("mark space: {0}")]
    MarkSpace(String),

    #[error("format: {0}")]
    Format(String),

    #[error("sampler failed: {0}")]
    Sampler(String),
}
