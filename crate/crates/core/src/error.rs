use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied parameters. `field` names the offending setting.
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("simulation produced a non-finite value on path {path} at step {step} ({quantity})")]
    Simulation {
        path: usize,
        step: usize,
        quantity: &'static str,
    },

    #[error("coefficient `{coefficient}` is not finite at t={t}, x={x}, x_delay={x_delay}, v={v}, v_delay={v_delay}")]
    Evaluation {
        coefficient: &'static str,
        t: f64,
        x: f64,
        x_delay: f64,
        v: f64,
        v_delay: f64,
    },

    #[error("regression system is singular at time index {time_index} ({basis_size} basis functions)")]
    Regression { time_index: usize, basis_size: usize },

    /// The delayed diffusion sensitivity must stay invertible: |sigma_xd| >= guard.
    #[error("|sigma_xd| = {value:.3e} below the invertibility guard {guard:.1e} on path {path} at step {step}")]
    DelayedDiffusionGuard {
        value: f64,
        guard: f64,
        path: usize,
        step: usize,
    },

    #[error("control value {value} is outside the control domain")]
    Domain { value: f64 },

    #[error("problem structure violated: {0}")]
    Structure(String),

    #[error("reference solution failed: {0}")]
    Oracle(String),

    #[error("expression parse error at column {column}: {message}")]
    Expression { column: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by invalid input rather than by numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Domain { .. } | Error::Expression { .. } | Error::Structure(_)
        )
    }
}
