use crate::dynamics::Trajectory;
use crate::model::SystemState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate parameters: delta and delta_n are both zero")]
    DegenerateParameters,

    #[error("integration failed at t = {t}: {reason}")]
    Integration {
        t: f64,
        reason: String,
        partial: Box<Trajectory>,
    },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("not converged: {0}")]
    Convergence(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Newton {
        iterations: usize,
        residual: f64,
        best: SystemState,
    },

    #[error("no Hopf crossing in g range [{lo}, {hi}]")]
    HopfNotFound { lo: f64, hi: f64 },

    #[error("no instability: projected equilibrium population {s_z_eq_bar} is not positive")]
    NoInstability { s_z_eq_bar: f64 },

    #[error("response function evaluated on a pole")]
    Singular,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
