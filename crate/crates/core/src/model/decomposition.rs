use crate::error::{EnvError, Result};
use crate::linalg::{hcat, spd_inverse, spd_solve, symmetrize, SemiOrthBasis};
use nalgebra::DMatrix;

/// `Sigma` split into the regression of `Y_D` on `Y_S`:
/// `phi`, `Sigma_S` and `Sigma_D|S`.
#[derive(Debug, Clone)]
pub struct ConditionalDecomposition {
    pub phi: DMatrix<f64>,
    pub sigma_s: DMatrix<f64>,
    pub sigma_d_given_s: DMatrix<f64>,
}

impl ConditionalDecomposition {
    /// Decomposes `sigma` relative to the design `u` and checks that
    /// reassembly reproduces it.
    pub fn decompose(sigma: &DMatrix<f64>, u: &DMatrix<f64>, u0: &SemiOrthBasis) -> Result<Self> {
        let u0m = u0.matrix();
        let utu_inv = spd_inverse(&(u.transpose() * u), "U^T U")?;
        let w1 = u * &utu_inv;
        // covariance of (Y_D, Y_S)
        let s_dd = w1.transpose() * sigma * &w1;
        let s_ds = w1.transpose() * sigma * u0m;
        let s_ss = symmetrize(&(u0m.transpose() * sigma * u0m));
        let phi = if u0m.ncols() == 0 {
            DMatrix::zeros(u.ncols(), 0)
        } else {
            spd_solve(&s_ss, &s_ds.transpose(), "Sigma_S")?.transpose()
        };
        let sigma_d_given_s = symmetrize(&(s_dd - &phi * s_ds.transpose()));
        let out = ConditionalDecomposition { phi, sigma_s: s_ss, sigma_d_given_s };
        let back = out.assemble(u, u0);
        let scale = sigma.amax().max(1.0);
        if (&back - sigma).amax() > 1e-8 * scale {
            return Err(EnvError::Numerical("conditional decomposition does not reassemble".into()));
        }
        Ok(out)
    }

    pub fn assemble(&self, u: &DMatrix<f64>, u0: &SemiOrthBasis) -> DMatrix<f64> {
        assemble_sigma(u, u0, &self.phi, &self.sigma_s, &self.sigma_d_given_s)
    }
}

/// `Sigma = [U, U_0] Sigma_W [U, U_0]^T` with
/// `Sigma_W = [[Sigma_D|S + phi Sigma_S phi^T, phi Sigma_S], [., Sigma_S]]`.
pub fn assemble_sigma(
    u: &DMatrix<f64>,
    u0: &SemiOrthBasis,
    phi: &DMatrix<f64>,
    sigma_s: &DMatrix<f64>,
    sigma_d_given_s: &DMatrix<f64>,
) -> DMatrix<f64> {
    let k = u.ncols();
    let s = u0.ncols();
    let mut sw = DMatrix::zeros(k + s, k + s);
    let ps = phi * sigma_s;
    sw.view_mut((0, 0), (k, k)).copy_from(&(sigma_d_given_s + &ps * phi.transpose()));
    sw.view_mut((0, k), (k, s)).copy_from(&ps);
    sw.view_mut((k, 0), (s, k)).copy_from(&ps.transpose());
    sw.view_mut((k, k), (s, s)).copy_from(sigma_s);
    let full = hcat(u, u0.matrix());
    symmetrize(&(&full * sw * full.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::complete_basis;
    use approx::assert_relative_eq;

    #[test]
    fn round_trip_for_linear_design() {
        let u = DMatrix::from_row_slice(4, 2, &[1.0, 8.0, 1.0, 10.0, 1.0, 12.0, 1.0, 14.0]);
        let b = DMatrix::from_row_slice(4, 4, &[2.0, 0.3, 0.1, 0.0, 0.3, 1.5, 0.2, 0.1, 0.1, 0.2, 1.0, 0.4, 0.0, 0.1, 0.4, 2.5]);
        let sigma = &b * b.transpose();
        let u0 = complete_basis(&SemiOrthBasis::from_span(&u).unwrap());
        let dec = ConditionalDecomposition::decompose(&sigma, &u, &u0).unwrap();
        assert_relative_eq!(dec.assemble(&u, &u0), sigma, epsilon = 1e-10);
        // Sigma_D|S = (U^T Sigma^-1 U)^-1
        let alt = spd_inverse(&(u.transpose() * spd_inverse(&dec.assemble(&u, &u0), "").unwrap() * &u), "").unwrap();
        assert_relative_eq!(dec.sigma_d_given_s, alt, epsilon = 1e-9);
    }
}
