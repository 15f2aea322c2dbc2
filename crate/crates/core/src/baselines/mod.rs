//! Reference pricers: the transform price for European puts, explicit
//! finite differences on `(S, v)`, and least-squares Monte Carlo on the full
//! state.

pub mod fd;
pub mod heston_cf;
pub mod lsmc;

pub use fd::{fd_price, max_stable_dt, FdConfig, FdExercise, FdSolution};
pub use heston_cf::{heston_call, heston_european_cf, heston_european_put};
pub use lsmc::{lsmc_price, DirectStyle, LsmcConfig, LsmcResult};
