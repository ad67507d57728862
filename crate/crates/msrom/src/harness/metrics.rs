//! Relative error metrics of a reduced solution against the fine reference:
//! energy norm (unit-coefficient stiffness) and L2 norm (mass matrix).

use crate::fem::{CsrMatrix, FieldVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Relative energy-norm error.
    pub e_a: f64,
    /// Relative L2-norm error.
    pub e_2: f64,
}

/// Both relative errors; a zero-norm reference yields absolute errors.
pub fn relative_errors(
    a_unit: &CsrMatrix,
    mass: &CsrMatrix,
    u_fine: &FieldVector,
    u_reduced: &FieldVector,
) -> Metrics {
    let diff = u_fine - u_reduced;
    let safe = |num: f64, den: f64| if den > 0.0 { num / den } else { num };
    Metrics {
        e_a: safe(
            a_unit.quadratic_form(&diff).sqrt(),
            a_unit.quadratic_form(u_fine).sqrt(),
        ),
        e_2: safe(
            mass.quadratic_form(&diff).sqrt(),
            mass.quadratic_form(u_fine).sqrt(),
        ),
    }
}
