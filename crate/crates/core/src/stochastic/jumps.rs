use alloc::vec::Vec;

use super::RngStream;
use crate::model::JumpLaw;
use crate::numeric::LowerTriangular;

/// One jump size per firm, `Z_i ~ N(mean_i, std_i)`. Draws are independent
/// across firms unless a Gaussian-copula factor is supplied.
pub fn sample_jump_sizes(laws: &[JumpLaw], copula: Option<&LowerTriangular>, rng: &mut RngStream) -> Vec<f64> {
    let mut scratch = alloc::vec![0.0; laws.len()];
    let mut out = alloc::vec![0.0; laws.len()];
    sample_jump_sizes_into(laws.iter(), copula, rng, &mut scratch, &mut out);
    out
}

pub fn sample_jump_sizes_into<'a, I>(
    laws: I,
    copula: Option<&LowerTriangular>,
    rng: &mut RngStream,
    scratch: &mut [f64],
    out: &mut [f64],
) where
    I: IntoIterator<Item = &'a JumpLaw>,
{
    for z in scratch.iter_mut() {
        *z = rng.standard_normal();
    }
    match copula {
        Some(factor) => factor.apply(scratch, out),
        None => out.copy_from_slice(scratch),
    }
    for (o, law) in out.iter_mut().zip(laws) {
        *o = law.mean() + law.std_dev() * *o;
    }
}
