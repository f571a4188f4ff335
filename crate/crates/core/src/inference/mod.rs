//! Exact Gaussian conditioning given θ, deterministic quadrature over θ and
//! mixture summaries of linear functionals.

mod condition;
mod integrate;
mod summarize;

pub use condition::*;
pub use integrate::*;
pub use summarize::*;
