//! Hitting distribution of the hyperplane `{x_1 = 0}` by the method of images.

use super::zd::ZdGreen;
use crate::error::{Error, Result};

/// `P_x[walk first leaves {x_1 >= 1} at z]` for `x_1 >= 1`, `z_1 = 0`:
/// `(2d)^{-1} (g(x - z') - g(x - z̄'))` with `z' = z + e_1` and `z̄'` its
/// mirror image `z - e_1`.
pub fn halfspace_exit_prob(zd: &ZdGreen, x: &[i64], z: &[i64]) -> Result<f64> {
    let d = zd.dim();
    if x.len() != d || z.len() != d {
        return Err(Error::Precondition(format!(
            "expected {d}-dimensional sites, got {x:?} and {z:?}"
        )));
    }
    if x[0] < 1 || z[0] != 0 {
        return Err(Error::Precondition(format!(
            "need x_1 >= 1 and z_1 = 0, got x = {x:?}, z = {z:?}"
        )));
    }
    let mut near: Vec<i64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
    let mut far = near.clone();
    near[0] -= 1;
    far[0] += 1;
    Ok((zd.get(&near)? - zd.get(&far)?) / (2.0 * d as f64))
}
