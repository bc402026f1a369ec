use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("gamma function evaluated at non-positive argument {0}")]
    GammaDomain(f64),
    #[error("alpha = {alpha} outside the admissible interval (0, {upper}) for n = {n}")]
    AlphaDomain { alpha: f64, n: usize, upper: f64 },
    #[error("sigma = {0} outside (1, 2)")]
    SigmaDomain(f64),
    #[error("infeasible ellipticity: lambda = {lambda} > n * Lambda = {bound}")]
    InfeasibleEllipticity { lambda: f64, bound: f64 },
    #[error("region selects no lattice points")]
    EmptyRegion,
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("density hypothesis fails: |A| = {measure} > delta = {delta}")]
    DensityHypothesisFail { measure: f64, delta: f64 },
    #[error("set A is not contained in set B")]
    NotNested,
    #[error("envelope value at center is not negative ({0})")]
    NotNegativeAtCenter(f64),
    #[error("normalization factor vanishes: the forcing term is identically zero")]
    ZeroForcing,
    #[error("scheme diverged: sup norm {norm:e} exceeds bound {bound:e}; reduce cfl")]
    SchemeDiverged { norm: f64, bound: f64 },
    #[error("barrier scaling fails: required sup norm {0:e} exceeds 1e6")]
    BarrierScaleFail(f64),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
