//! Ordered Wishart eigenvalue statistics: exact density expansion, nested
//! incomplete-Gamma integrals, joint MGF and eigenvalue means.

mod expansion;
mod mgf;
mod nested;
mod real;

pub use expansion::{expand_ordered_pdf, normalizer_closed_form, Monomial, MonomialExpansion, MAX_N};
pub use mgf::joint_mgf;
pub use nested::{joint_mgf_nested, mean_ordered_eigenvalues, nested_integral, ShiftVector, ESCALATE_RATIO};
pub use real::{CompensatedSum, DoubleDouble, Real};

#[allow(unused_imports)]
pub(crate) use nested::{integral, signed_sum, Rates, Scratch, SumOptions};
