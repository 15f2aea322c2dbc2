use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("degenerate regression design: {in_support} usable samples for {basis_size} basis functions")]
    DegenerateDesign { in_support: usize, basis_size: usize },

    #[error("gram inverse norm {norm:.3e} exceeds truncation bound {bound:.3e}")]
    Truncation { norm: f64, bound: f64 },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed data: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_param(ok: bool, name: &'static str, value: f64, reason: &'static str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Parameter { name, value, reason })
    }
}
