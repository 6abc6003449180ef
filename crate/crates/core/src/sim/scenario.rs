use crate::error::{EnvError, Result};
use crate::estimators::avar::{envelope_avar, lift_avar};
use crate::linalg::{complete_matrix, kron, spd_inverse, symmetrize, SemiOrthBasis};
use crate::model::{assemble_sigma, ConditionalDecomposition, Dataset};
use crate::serde_mat::{mat, opt_mat};
use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    S1,
    S2,
    EcmStar,
    BiasSweep,
    NullTest,
    Custom,
}

impl std::str::FromStr for ScenarioId {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "s1" => ScenarioId::S1,
            "s2" => ScenarioId::S2,
            "ecm_star" | "ecm" => ScenarioId::EcmStar,
            "bias_sweep" | "bias" => ScenarioId::BiasSweep,
            "null_test" | "null" => ScenarioId::NullTest,
            "custom" => ScenarioId::Custom,
            other => return Err(EnvError::InvalidSpec(format!("unknown scenario '{other}'"))),
        })
    }
}

/// Covariance of the predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorCorr {
    /// `X ~ N(0, C C^T)` with standard normal `C`.
    FactorModel,
    /// Unit variances and common correlation `rho`.
    CompoundSymmetric(f64),
}

/// How the responses are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// `Y ~ N(beta X, Gamma Omega Gamma^T + Gamma0 Omega0 Gamma0^T)` with a
    /// random orthogonal `(Gamma, Gamma0)`, `beta = Gamma K1 K2` and
    /// `U = (Gamma K1, Gamma0 (I_q2, 0)^T)`.
    Envelope,
    /// `Y_S ~ N(0, I)`, `Y_D | Y_S ~ N(alpha X + phi Y_S, Sigma_D|S)` with
    /// `Sigma_D|S = Omega (+) Omega0` in the leading coordinates, random `U`
    /// and `Y = U Y_D + U0 Y_S`.
    Conditional,
}

/// Parameters of a simulated design. `q` is the column count of `U`;
/// under the conditional generator `u` and the eigenvalue lists refer to
/// `Sigma_D|S` (sizes `u` and `q - u`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario_id: ScenarioId,
    pub generator: Generator,
    pub n: usize,
    pub r: usize,
    pub p: usize,
    pub u: usize,
    pub q: usize,
    pub q1: usize,
    pub omega_eigs: Vec<f64>,
    pub omega0_eigs: Vec<f64>,
    pub predictor_corr: PredictorCorr,
    /// Multiplies the generated `eta`.
    pub signal_scale: f64,
    /// Conditional generator only: loading of the first envelope direction
    /// on the last coordinate of `Y_D`. Zero keeps the trailing `q - u` rows
    /// of `alpha` at zero.
    #[serde(default)]
    pub tail_loading: f64,
    pub seed: u64,
}

fn rep(v: f64, n: usize) -> Vec<f64> {
    vec![v; n]
}

impl ScenarioSpec {
    pub fn s1(seed: u64) -> Self {
        let (r, u, q1) = (20, 6, 4);
        let mut omega = rep(0.5, u - q1);
        omega.extend(rep(1.5, q1));
        ScenarioSpec {
            scenario_id: ScenarioId::S1,
            generator: Generator::Envelope,
            n: 5000,
            r,
            p: 8,
            u,
            q: 15,
            q1,
            omega_eigs: omega,
            omega0_eigs: rep(50.0, r - u),
            predictor_corr: PredictorCorr::FactorModel,
            signal_scale: 1.0,
            tail_loading: 0.0,
            seed,
        }
    }

    pub fn s2(seed: u64) -> Self {
        let mut s = Self::s1(seed);
        s.scenario_id = ScenarioId::S2;
        s.q = 6;
        let mut omega = rep(50.0, s.u - s.q1);
        omega.extend(rep(0.5, s.q1));
        s.omega_eigs = omega;
        s.omega0_eigs = rep(0.5, s.r - s.u);
        s
    }

    /// Scenario 1 parameters, used with `U = O (I_k, 0)^T` for a grid of `k`.
    pub fn bias_sweep(seed: u64) -> Self {
        let mut s = Self::s1(seed);
        s.scenario_id = ScenarioId::BiasSweep;
        s
    }

    pub fn ecm_star(seed: u64) -> Self {
        let (u, q) = (3, 15);
        ScenarioSpec {
            scenario_id: ScenarioId::EcmStar,
            generator: Generator::Conditional,
            n: 5000,
            r: 20,
            p: 8,
            u,
            q,
            q1: u,
            omega_eigs: rep(0.5, u),
            omega0_eigs: rep(50.0, q - u),
            predictor_corr: PredictorCorr::FactorModel,
            signal_scale: 1.0,
            tail_loading: 0.0,
            seed,
        }
    }

    /// Small conditional design whose trailing `q - u` rows of `alpha` are zero.
    pub fn null_test(seed: u64) -> Self {
        ScenarioSpec {
            scenario_id: ScenarioId::NullTest,
            generator: Generator::Conditional,
            n: 2000,
            r: 6,
            p: 2,
            u: 1,
            q: 3,
            q1: 1,
            omega_eigs: vec![1.0],
            omega0_eigs: vec![4.0, 4.0],
            predictor_corr: PredictorCorr::FactorModel,
            signal_scale: 1.0,
            tail_loading: 0.0,
            seed,
        }
    }

    pub fn preset(id: ScenarioId, seed: u64) -> Result<Self> {
        Ok(match id {
            ScenarioId::S1 => Self::s1(seed),
            ScenarioId::S2 => Self::s2(seed),
            ScenarioId::EcmStar => Self::ecm_star(seed),
            ScenarioId::BiasSweep => Self::bias_sweep(seed),
            ScenarioId::NullTest => Self::null_test(seed),
            ScenarioId::Custom => {
                return Err(EnvError::InvalidSpec("custom scenarios need explicit parameters".into()))
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EnvError::InvalidSpec(m));
        if self.n < 2 || self.r == 0 || self.p == 0 {
            return bad(format!("need n >= 2, r >= 1, p >= 1 (n={}, r={}, p={})", self.n, self.r, self.p));
        }
        if self.n <= self.p + self.r {
            return bad(format!("n = {} too small for r = {}, p = {}", self.n, self.r, self.p));
        }
        if self.q == 0 || self.q > self.r {
            return bad(format!("q = {} must lie in 1..={}", self.q, self.r));
        }
        if let PredictorCorr::CompoundSymmetric(rho) = self.predictor_corr {
            if !(0.0..1.0).contains(&rho) {
                return bad(format!("compound-symmetric rho = {rho} outside [0, 1)"));
            }
        }
        if self.omega_eigs.iter().chain(&self.omega0_eigs).any(|&e| !(e > 0.0 && e.is_finite())) {
            return bad("eigenvalues must be positive".into());
        }
        match self.generator {
            Generator::Envelope => {
                if self.u == 0 || self.u > self.r {
                    return bad(format!("u = {} must lie in 1..={}", self.u, self.r));
                }
                if self.q1 == 0 || self.q1 > self.u.min(self.q) {
                    return bad(format!("q1 = {} must lie in 1..=min(u, q)", self.q1));
                }
                if self.q - self.q1 > self.r - self.u {
                    return bad(format!("q - q1 = {} exceeds r - u = {}", self.q - self.q1, self.r - self.u));
                }
                if self.omega_eigs.len() != self.u || self.omega0_eigs.len() != self.r - self.u {
                    return bad(format!("eigenvalue lists must have sizes ({}, {})", self.u, self.r - self.u));
                }
            }
            Generator::Conditional => {
                if self.u == 0 || self.u > self.q {
                    return bad(format!("u = {} must lie in 1..={}", self.u, self.q));
                }
                if self.omega_eigs.len() != self.u || self.omega0_eigs.len() != self.q - self.u {
                    return bad(format!("eigenvalue lists must have sizes ({}, {})", self.u, self.q - self.u));
                }
            }
        }
        Ok(())
    }
}

/// True parameters of a design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Truth {
    #[serde(with = "mat")]
    pub beta: DMatrix<f64>,
    #[serde(with = "mat")]
    pub sigma: DMatrix<f64>,
    #[serde(with = "mat")]
    pub sigma_x: DMatrix<f64>,
    /// Within-subject design `U` (`r x q`) with `beta = U alpha`.
    #[serde(with = "mat")]
    pub design: DMatrix<f64>,
    #[serde(with = "mat")]
    pub alpha: DMatrix<f64>,
    /// Orthogonal `(Gamma, Gamma0)` of the envelope generator (`r x r`).
    #[serde(with = "opt_mat", default)]
    pub rotation: Option<DMatrix<f64>>,
    /// Envelope basis of `beta` in `R^r` for the envelope generator.
    #[serde(with = "opt_mat", default)]
    pub gamma: Option<DMatrix<f64>>,
    /// Envelope basis of `alpha` in `R^q` for the conditional generator.
    #[serde(with = "opt_mat", default)]
    pub phi: Option<DMatrix<f64>>,
    #[serde(with = "opt_mat", default)]
    pub phi0: Option<DMatrix<f64>>,
    #[serde(with = "mat")]
    pub eta: DMatrix<f64>,
    #[serde(with = "mat")]
    pub omega: DMatrix<f64>,
    #[serde(with = "mat")]
    pub omega0: DMatrix<f64>,
    /// Coefficients of `Y_S` in `Y_D | Y_S` for the conditional generator.
    #[serde(with = "opt_mat", default)]
    pub ys_coef: Option<DMatrix<f64>>,
}

/// A design fixed by the seed: predictors and true parameters. Responses
/// are drawn per replicate.
#[derive(Debug, Clone)]
pub struct Design {
    pub spec: ScenarioSpec,
    pub x: DMatrix<f64>,
    pub truth: Truth,
    chol: DMatrix<f64>,
    u0: DMatrix<f64>,
    chol_d_given_s: DMatrix<f64>,
}

/// Stream reserved for the design draw; replicate `i` uses stream `i + 1`.
const DESIGN_STREAM: u64 = 0;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal_matrix<R: Rng>(rng: &mut R, nrows: usize, ncols: usize) -> DMatrix<f64> {
    // filled in column-major order
    DMatrix::from_fn(nrows, ncols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_orthogonal<R: Rng>(rng: &mut R, r: usize) -> DMatrix<f64> {
    let a = normal_matrix(rng, r, r);
    let qr = a.qr();
    let (mut q, rr) = (qr.q(), qr.r());
    // sign fix so Q is Haar distributed
    for j in 0..r {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn lower_chol(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Cholesky::new(symmetrize(m))
        .map(|c| c.l())
        .ok_or_else(|| EnvError::NonPositiveDefinite { what: what.into() })
}

impl Design {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = stream_rng(spec.seed, DESIGN_STREAM);
        let (n, r, p, u, q) = (spec.n, spec.r, spec.p, spec.u, spec.q);
        let sigma_x = match spec.predictor_corr {
            PredictorCorr::FactorModel => {
                let c = normal_matrix(&mut rng, p, p);
                symmetrize(&(&c * c.transpose()))
            }
            PredictorCorr::CompoundSymmetric(rho) => {
                DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
            }
        };
        let lx = lower_chol(&sigma_x, "Sigma_X")?;
        let x = normal_matrix(&mut rng, n, p) * lx.transpose();
        let omega = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(spec.omega_eigs.clone()));
        let omega0 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(spec.omega0_eigs.clone()));

        let (truth, u0, chol_d_given_s) = match spec.generator {
            Generator::Envelope => {
                let o = random_orthogonal(&mut rng, r);
                let k1 = normal_matrix(&mut rng, u, spec.q1);
                let k2 = normal_matrix(&mut rng, spec.q1, p) * spec.signal_scale;
                let gamma = o.columns(0, u).into_owned();
                let gamma0 = o.columns(u, r - u).into_owned();
                let eta = &k1 * &k2;
                let beta = &gamma * &eta;
                let sigma = symmetrize(&(&gamma * &omega * gamma.transpose() + &gamma0 * &omega0 * gamma0.transpose()));
                let q2 = q - spec.q1;
                let design = crate::linalg::hcat(&(&gamma * &k1), &gamma0.columns(0, q2).into_owned());
                let mut alpha = DMatrix::zeros(q, p);
                alpha.rows_mut(0, spec.q1).copy_from(&k2);
                let truth = Truth {
                    beta,
                    sigma,
                    sigma_x,
                    design,
                    alpha,
                    rotation: Some(o),
                    gamma: Some(gamma),
                    phi: None,
                    phi0: None,
                    eta,
                    omega,
                    omega0,
                    ys_coef: None,
                };
                (truth, DMatrix::zeros(r, 0), DMatrix::zeros(0, 0))
            }
            Generator::Conditional => {
                let eta = normal_matrix(&mut rng, u, p) * spec.signal_scale;
                let design = normal_matrix(&mut rng, r, q);
                let ys_coef = normal_matrix(&mut rng, q, r - q);
                let mut phi = DMatrix::<f64>::identity(q, u);
                if spec.tail_loading != 0.0 {
                    phi[(q - 1, 0)] = spec.tail_loading;
                    phi.column_mut(0).normalize_mut();
                }
                let phi0 = complete_matrix(&phi).into_matrix();
                let alpha = &phi * &eta;
                let sigma_d_given_s = symmetrize(&(&phi * &omega * phi.transpose() + &phi0 * &omega0 * phi0.transpose()));
                let u0 = complete_matrix(&design);
                let sigma = assemble_sigma(&design, &u0, &ys_coef, &DMatrix::identity(r - q, r - q), &sigma_d_given_s);
                let beta = &design * &alpha;
                let chol = lower_chol(&sigma_d_given_s, "Sigma_D|S")?;
                let truth = Truth {
                    beta,
                    sigma,
                    sigma_x,
                    design,
                    alpha,
                    rotation: None,
                    gamma: None,
                    phi: Some(phi),
                    phi0: Some(phi0),
                    eta,
                    omega,
                    omega0,
                    ys_coef: Some(ys_coef),
                };
                (truth, u0.into_matrix(), chol)
            }
        };
        let chol = lower_chol(&truth.sigma, "Sigma")?;
        Ok(Design { spec: spec.clone(), x, truth, chol, u0, chol_d_given_s })
    }

    /// Responses for replicate `rep`; depends only on `(seed, rep)`.
    pub fn responses(&self, rep: u64) -> DMatrix<f64> {
        let mut rng = stream_rng(self.spec.seed, rep + 1);
        let (n, r) = (self.spec.n, self.spec.r);
        let t = &self.truth;
        match self.spec.generator {
            Generator::Envelope => {
                let e = normal_matrix(&mut rng, n, r) * self.chol.transpose();
                &self.x * t.beta.transpose() + e
            }
            Generator::Conditional => {
                let q = self.spec.q;
                let ys = normal_matrix(&mut rng, n, r - q);
                let e = normal_matrix(&mut rng, n, q) * self.chol_d_given_s.transpose();
                let phi_s = t.ys_coef.as_ref().expect("conditional truth");
                let yd = &self.x * t.alpha.transpose() + &ys * phi_s.transpose() + e;
                yd * t.design.transpose() + ys * self.u0.transpose()
            }
        }
    }

    pub fn dataset(&self, rep: u64) -> Result<Dataset> {
        Dataset::new(self.responses(rep), self.x.clone())
    }

    /// Theoretical avars of `sqrt(n) vec(beta_hat)` at the true parameters:
    /// `(um, cm, envelope)` where the envelope is `em` for the envelope
    /// generator and `ecm` for the conditional one.
    pub fn theoretical_avars(&self) -> Result<TheoreticalAvar> {
        let t = &self.truth;
        let p = self.spec.p;
        let sx_inv = spd_inverse(&t.sigma_x, "Sigma_X")?;
        let um = kron(&sx_inv, &t.sigma);
        let u_orth = SemiOrthBasis::from_span(&t.design)?;
        let u0 = crate::linalg::complete_basis(&u_orth);
        let dec = ConditionalDecomposition::decompose(&t.sigma, &t.design, &u0)?;
        let cm_alpha = kron(&sx_inv, &dec.sigma_d_given_s);
        let cm = lift_avar(&cm_alpha, &t.design, p);
        let env = match self.spec.generator {
            Generator::Envelope => {
                let o = t.rotation.as_ref().expect("envelope truth");
                let u = self.spec.u;
                let g0 = o.columns(u, self.spec.r - u).into_owned();
                envelope_avar(&t.sigma_x, t.gamma.as_ref().unwrap(), &g0, &t.eta, &t.omega, &t.omega0)?
            }
            Generator::Conditional => {
                let phi = t.phi.as_ref().expect("conditional truth");
                let phi0 = t.phi0.as_ref().expect("conditional truth");
                let a = envelope_avar(&t.sigma_x, phi, phi0, &t.eta, &t.omega, &t.omega0)?;
                lift_avar(&a, &t.design, p)
            }
        };
        let mean = |m: &DMatrix<f64>| m.diagonal().mean();
        Ok(TheoreticalAvar { um: mean(&um), cm: mean(&cm), envelope: mean(&env) })
    }
}

/// Mean diagonal of the theoretical avar of `sqrt(n) vec(beta_hat)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalAvar {
    pub um: f64,
    pub cm: f64,
    pub envelope: f64,
}

/// Dataset for replicate `rep` of `spec` together with the true parameters.
pub fn generate_scenario(spec: &ScenarioSpec, rep: u64) -> Result<(Dataset, Truth)> {
    let d = Design::new(spec)?;
    let data = d.dataset(rep)?;
    Ok((data, d.truth))
}
