//! Asymptotic covariances of envelope estimators: the closed form for an
//! unscaled envelope and the generic Jacobian sandwich `H (H^T J H)^+ H^T`.

use crate::error::Result;
use crate::linalg::{commutation, kron, pinv_sym, spd_inverse, symmetrize, vec_of};
use nalgebra::{DMatrix, DVector};

pub(crate) const PINV_CUTOFF: f64 = 1e-10;

/// avar of `sqrt(n) vec(alpha)` for `alpha = Phi eta`,
/// `Sigma = Phi Omega Phi^T + Phi0 Omega0 Phi0^T`.
pub fn envelope_avar(
    sigma_x: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    phi0: &DMatrix<f64>,
    eta: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    omega0: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let k = phi.nrows();
    let p = sigma_x.nrows();
    let u = phi.ncols();
    if u == 0 {
        return Ok(DMatrix::zeros(k * p, k * p));
    }
    let sx_inv = spd_inverse(sigma_x, "Sigma_X")?;
    let first = kron(&sx_inv, &(phi * omega * phi.transpose()));
    if u == k {
        return Ok(symmetrize(&first));
    }
    let o0_inv = spd_inverse(omega0, "Omega_0")?;
    let o_inv = spd_inverse(omega, "Omega")?;
    let m_len = u * (k - u);
    let m = kron(&(eta * sigma_x * eta.transpose()), &o0_inv) + kron(omega, &o0_inv)
        + kron(&o_inv, omega0)
        - DMatrix::identity(m_len, m_len) * 2.0;
    let left = kron(&eta.transpose(), phi0);
    let second = &left * pinv_sym(&m, PINV_CUTOFF) * left.transpose();
    Ok(symmetrize(&(first + second)))
}

/// Parameters of a (possibly scaled) envelope in `k` response coordinates:
/// `alpha = D Theta eta`, `Sigma = D (Theta Omega Theta^T + Theta0 Omega0 Theta0^T) D`
/// with `D = diag(d)`, `d_1 = 1`.
pub struct EnvelopeParams<'a> {
    pub theta: &'a DMatrix<f64>,
    pub theta0: &'a DMatrix<f64>,
    pub eta: &'a DMatrix<f64>,
    pub omega: &'a DMatrix<f64>,
    pub omega0: &'a DMatrix<f64>,
    /// Diagonal of `D`; `None` means `D = I` with no scale parameters.
    pub d: Option<&'a DVector<f64>>,
}

impl EnvelopeParams<'_> {
    fn dmat(&self) -> DMatrix<f64> {
        let k = self.theta.nrows();
        match self.d {
            Some(d) => DMatrix::from_diagonal(d),
            None => DMatrix::identity(k, k),
        }
    }

    fn core(&self) -> DMatrix<f64> {
        self.theta * self.omega * self.theta.transpose() + self.theta0 * self.omega0 * self.theta0.transpose()
    }

    pub fn alpha(&self) -> DMatrix<f64> {
        self.dmat() * self.theta * self.eta
    }

    pub fn sigma(&self) -> DMatrix<f64> {
        let d = self.dmat();
        symmetrize(&(&d * self.core() * &d))
    }

    /// `d (vec alpha, vec Sigma) / d xi` with
    /// `xi = (d_2..d_k, vec eta, vec Theta, vec Omega, vec Omega0)`.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let k = self.theta.nrows();
        let u = self.theta.ncols();
        let p = self.eta.ncols();
        let d = self.dmat();
        let c = self.core();
        let n_d = if self.d.is_some() { k - 1 } else { 0 };
        let widths = [n_d, u * p, k * u, u * u, (k - u) * (k - u)];
        let total: usize = widths.iter().sum();
        let (ra, rs) = (k * p, k * k);
        let mut h = DMatrix::zeros(ra + rs, total);
        let mut col = 0;
        let theta_eta = self.theta * self.eta;
        for j in 1..=n_d {
            let mut e = DMatrix::zeros(k, k);
            e[(j, j)] = 1.0;
            h.view_mut((0, col), (ra, 1)).copy_from(&vec_of(&(&e * &theta_eta)));
            let ds = &e * &c * &d + &d * &c * &e;
            h.view_mut((ra, col), (rs, 1)).copy_from(&vec_of(&ds));
            col += 1;
        }
        // eta
        let d_theta = &d * self.theta;
        h.view_mut((0, col), (ra, u * p)).copy_from(&kron(&DMatrix::identity(p, p), &d_theta));
        col += u * p;
        // Theta
        let dd = kron(&d, &d);
        h.view_mut((0, col), (ra, k * u)).copy_from(&kron(&self.eta.transpose(), &d));
        let ik = DMatrix::identity(k, k);
        let t0o0t0 = self.theta0 * self.omega0 * self.theta0.transpose();
        let inner = kron(&(self.theta * self.omega), &ik) - kron(self.theta, &t0o0t0);
        let sym = DMatrix::identity(k * k, k * k) + commutation(k, k);
        h.view_mut((ra, col), (rs, k * u)).copy_from(&(&dd * sym * inner));
        col += k * u;
        // Omega
        h.view_mut((ra, col), (rs, u * u)).copy_from(&(&dd * kron(self.theta, self.theta)));
        col += u * u;
        // Omega0
        h.view_mut((ra, col), (rs, (k - u) * (k - u))).copy_from(&(&dd * kron(self.theta0, self.theta0)));
        h
    }
}

/// Upper `kp x kp` block of `H (H^T J H)^+ H^T` with
/// `J = diag(Sigma_X (x) Sigma^{-1}, 1/2 Sigma^{-1} (x) Sigma^{-1})`.
pub fn jacobian_sandwich(h: &DMatrix<f64>, sigma_x: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = sigma.nrows();
    let p = sigma_x.nrows();
    let s_inv = spd_inverse(sigma, "Sigma")?;
    let ja = kron(sigma_x, &s_inv);
    let js = kron(&s_inv, &s_inv) * 0.5;
    let j = crate::linalg::block_diag(&ja, &js);
    let info = symmetrize(&(h.transpose() * &j * h));
    let full = h * pinv_sym(&info, PINV_CUTOFF) * h.transpose();
    Ok(symmetrize(&full.view((0, 0), (k * p, k * p)).into_owned()))
}

/// `(I_p (x) U) A (I_p (x) U^T)`: maps avar of `vec(alpha)` to avar of `vec(U alpha)`.
pub fn lift_avar(avar_alpha: &DMatrix<f64>, u: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let l = kron(&DMatrix::identity(p, p), u);
    symmetrize(&(&l * avar_alpha * l.transpose()))
}
