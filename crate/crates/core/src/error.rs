use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular: Laplacian {value:e} at r = {r} is not positive")]
    Singular { r: f64, value: f64 },
    #[error("no local peak for tau = {0}")]
    EmptyPeaks(f64),
    #[error("branching values closer than the sweep resolution near tau = {0}")]
    Resolution(f64),
    #[error("degenerate droplet component of width {0:e}")]
    Degenerate(f64),
    #[error("peak tracking left the basin at tau = {0}")]
    Tracking(f64),
    #[error("quadrature did not converge on [{a}, {b}] (error estimate {err:e})")]
    Quadrature { a: f64, b: f64, err: f64 },
    #[error("tail mass {ratio:e} outside the windows exceeds the tolerance for j = {j}")]
    TailMass { j: usize, ratio: f64 },
    #[error("pole: factor {0} of the q-product is not positive")]
    Pole(f64),
    #[error("divergent functional: {0}")]
    Divergent(String),
    #[error("no spectral gap: the droplet has a single component")]
    NoGap,
    #[error("identity gate failed: {name} residual {residual:e}")]
    Identity { name: String, residual: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("several significant peaks at j = {0}; use quadrature")]
    MultiPeak(usize),
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("sampler failed for j = {0}")]
    Sampler(usize),
    #[error("degenerate weights in the empirical generating function at s = {0}")]
    DegenerateWeights(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
