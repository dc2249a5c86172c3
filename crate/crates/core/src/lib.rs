//! Numerical toolkit for complex-coefficient elliptic operators with dynamic
//! (Wentzell-type) boundary conditions on hybrid volume/boundary spaces.

pub mod bellman;
pub mod coefficients;
pub mod ellipticity;
pub mod error;
pub mod flows;
pub mod hybrid;
pub mod linalg;
pub mod operator;
pub mod quadrature;

pub use coefficients::{CoefficientField, ComplexMatrix};
pub use error::{Error, Result};
