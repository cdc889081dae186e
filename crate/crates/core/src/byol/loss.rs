//! The BYOL regression loss and its closed-form gradient in the prediction.

use crate::error::{Error, Result};
use crate::nn::tensor::{dot, l2_norm};

/// Norms below this are treated as degenerate rather than silently clamped.
pub const NORM_FLOOR: f64 = 1e-12;

/// `f(q, z) = 2 - 2 <q, z> / (||q|| ||z||)`, the normalised mean squared
/// error between prediction `q` and (stop-gradient) target `z`. Range [0, 4]:
/// 0 when aligned, 4 when opposite.
pub fn byol_loss(q: &[f64], z: &[f64]) -> Result<f64> {
    if q.len() != z.len() {
        return Err(Error::shape(
            "byol_loss",
            format!("matching lengths, q has {}", q.len()),
            format!("z has {}", z.len()),
        ));
    }
    let (nq, nz) = (l2_norm(q), l2_norm(z));
    check_norm(nq, "q")?;
    check_norm(nz, "z")?;
    Ok(2.0 - 2.0 * dot(q, z) / (nq * nz))
}

/// Gradient of [`byol_loss`] with respect to `q`, with `z` held constant:
///
/// ```text
/// d f / d q = 2 * ( <q,z> * q / (||q||^3 ||z||)  -  z / (||q|| ||z||) )
/// ```
///
/// Always orthogonal to `q` itself (cosine similarity is scale-invariant in
/// `q`, so there is no radial component).
pub fn byol_loss_grad_q(q: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    if q.len() != z.len() {
        return Err(Error::shape(
            "byol_loss_grad_q",
            format!("matching lengths, q has {}", q.len()),
            format!("z has {}", z.len()),
        ));
    }
    let (nq, nz) = (l2_norm(q), l2_norm(z));
    check_norm(nq, "q")?;
    check_norm(nz, "z")?;
    let qz = dot(q, z);
    let coef_q = 2.0 * qz / (nq * nq * nq * nz);
    let coef_z = 2.0 / (nq * nz);
    Ok(q.iter()
        .zip(z)
        .map(|(qi, zi)| coef_q * qi - coef_z * zi)
        .collect())
}

fn check_norm(norm: f64, operand: &str) -> Result<()> {
    if !norm.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite norm for operand {operand}"
        )));
    }
    if norm <= NORM_FLOOR {
        return Err(Error::Numeric(format!(
            "operand {operand} has norm {norm:.3e}, below the {NORM_FLOOR:.0e} floor"
        )));
    }
    Ok(())
}
