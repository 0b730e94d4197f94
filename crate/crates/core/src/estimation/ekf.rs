//! Parameter EKF and dual EKF on `nalgebra` dynamic matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues below this (before re-symmetrization) count as loss of PSD.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::Argument(format!(
                "covariance is {}x{}, mean has {n} entries",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let b = Self { mean, covariance };
        b.check_psd()?;
        Ok(b.symmetrized())
    }

    pub fn from_diag(mean: &[f64], variances: &[f64]) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_diagonal(&DVector::from_column_slice(variances)),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.covariance + self.covariance.transpose()) * 0.5;
        sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    fn check_psd(&self) -> Result<()> {
        if self.covariance.iter().any(|v| !v.is_finite()) || self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite belief".into()));
        }
        let lambda = self.min_eigenvalue();
        if lambda < -PSD_TOL * self.covariance.amax().max(1.0) {
            return Err(Error::Numerical(format!("covariance lost PSD (min eigenvalue {lambda:e})")));
        }
        Ok(())
    }

    fn symmetrized(mut self) -> Self {
        self.covariance = (&self.covariance + self.covariance.transpose()) * 0.5;
        self
    }
}

fn check_square(m: &DMatrix<f64>, n: usize, what: &str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Argument(format!("{what} must be {n}x{n}, got {}x{}", m.nrows(), m.ncols())));
    }
    Ok(())
}

fn invert_innovation(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    s.clone().try_inverse().ok_or_else(|| {
        Error::Numerical(format!("singular innovation covariance (max entry {:e})", s.amax()))
    })
}

/// Kalman measurement update shared by every filter here. Joseph form keeps
/// the covariance PSD under rounding.
fn measurement_update(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    c: &DMatrix<f64>,
    innovation: &DVector<f64>,
    r_meas: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let s = c * cov * c.transpose() + r_meas;
    let gain = cov * c.transpose() * invert_innovation(&s)?;
    let n = mean.len();
    let ikc = DMatrix::identity(n, n) - &gain * c;
    let cov_new = &ikc * cov * ikc.transpose() + &gain * r_meas * gain.transpose();
    Ok((mean + &gain * innovation, cov_new, gain))
}

/// One parameter-EKF step: random-walk prediction `Σ⁻ = Σ + Σ_r`, then an
/// update against `y` with `C = ∂G/∂θ` evaluated at the prediction.
pub fn ekf_param_step<G, J>(
    belief: &GaussianBelief,
    y: &DVector<f64>,
    measurement_fn: G,
    jacobian_fn: J,
    sigma_r: &DMatrix<f64>,
    sigma_meas: &DMatrix<f64>,
) -> Result<GaussianBelief>
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let n = belief.dim();
    check_square(sigma_r, n, "Σ_r")?;
    check_square(sigma_meas, y.len(), "measurement covariance")?;
    let cov_pred = &belief.covariance + sigma_r;
    let c = jacobian_fn(&belief.mean);
    if c.nrows() != y.len() || c.ncols() != n {
        return Err(Error::Argument(format!("jacobian is {}x{}, expected {}x{n}", c.nrows(), c.ncols(), y.len())));
    }
    let innovation = y - measurement_fn(&belief.mean);
    let (mean, covariance, _) = measurement_update(&belief.mean, &cov_pred, &c, &innovation, sigma_meas)?;
    GaussianBelief { mean, covariance }.checked()
}

impl GaussianBelief {
    fn checked(self) -> Result<Self> {
        self.check_psd()?;
        Ok(self.symmetrized())
    }
}

/// Discrete model `x⁺ = F(x, u, θ)`, `y = G(x, u, θ)` with its Jacobians.
pub trait DualModel {
    type Input: Copy;
    fn transition(&self, x: &DVector<f64>, u: Self::Input, theta: &DVector<f64>) -> DVector<f64>;
    /// `∂F/∂x`
    fn a(&self, x: &DVector<f64>, u: Self::Input, theta: &DVector<f64>) -> DMatrix<f64>;
    /// `∂F/∂θ`
    fn f_theta(&self, x: &DVector<f64>, u: Self::Input, theta: &DVector<f64>) -> DMatrix<f64>;
    fn output(&self, x: &DVector<f64>, u: Self::Input, theta: &DVector<f64>) -> DVector<f64>;
    /// `∂G/∂x`
    fn c_x(&self, x: &DVector<f64>, u: Self::Input, theta: &DVector<f64>) -> DMatrix<f64>;
    /// Direct part of `∂G/∂θ`.
    fn c_theta(&self, x: &DVector<f64>, u: Self::Input, theta: &DVector<f64>) -> DMatrix<f64>;
    /// Keeps estimates inside the model's physical domain before evaluation.
    fn project(&self, _x: &mut DVector<f64>, _theta: &mut DVector<f64>) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct DekfNoise {
    /// Parameter random-walk covariance.
    pub sigma_r: DMatrix<f64>,
    /// State process covariance.
    pub sigma_w: DMatrix<f64>,
    /// Measurement covariance.
    pub sigma_v: DMatrix<f64>,
}

/// Dual EKF: one filter for the state, one for the parameters, coupled
/// through the recursively propagated sensitivity `dx/dθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dekf {
    pub params: GaussianBelief,
    pub state: GaussianBelief,
    /// `dx̂/dθ` after the latest state update.
    pub dx_dtheta: DMatrix<f64>,
}

impl Dekf {
    pub fn new(params: GaussianBelief, state: GaussianBelief) -> Self {
        let dx_dtheta = DMatrix::zeros(state.dim(), params.dim());
        Self {
            params,
            state,
            dx_dtheta,
        }
    }

    /// One step with input `u_prev` driving `x(k−1) → x(k)` and measurement
    /// `y` taken at input `u`. With `update_params = false` only the state
    /// filter runs; the sensitivity is still propagated.
    pub fn step<M: DualModel>(
        &mut self,
        model: &M,
        u_prev: M::Input,
        u: M::Input,
        y: &DVector<f64>,
        noise: &DekfNoise,
        update_params: bool,
    ) -> Result<()> {
        let (nx, np) = (self.state.dim(), self.params.dim());
        check_square(&noise.sigma_r, np, "Σ_r")?;
        check_square(&noise.sigma_w, nx, "Σ_w")?;
        check_square(&noise.sigma_v, y.len(), "Σ_v")?;

        // parameter prediction
        let theta = self.params.mean.clone();
        let cov_theta = if update_params {
            &self.params.covariance + &noise.sigma_r
        } else {
            self.params.covariance.clone()
        };

        // state prediction
        let x_prev = &self.state.mean;
        let a = model.a(x_prev, u_prev, &theta);
        let mut x_pred = model.transition(x_prev, u_prev, &theta);
        let mut theta_eval = theta.clone();
        model.project(&mut x_pred, &mut theta_eval);
        let cov_x_pred = &a * &self.state.covariance * a.transpose() + &noise.sigma_w;
        let dxp_dtheta = model.f_theta(x_prev, u_prev, &theta) + &a * &self.dx_dtheta;

        // state update
        let c_x = model.c_x(&x_pred, u, &theta_eval);
        let innovation = y - model.output(&x_pred, u, &theta_eval);
        let (mut x_new, cov_x, k_x) = measurement_update(&x_pred, &cov_x_pred, &c_x, &innovation, &noise.sigma_v)?;

        // parameter update with the total derivative dG/dθ
        let c_theta = model.c_theta(&x_pred, u, &theta_eval) + &c_x * &dxp_dtheta;
        let mut theta_new = theta;
        let mut cov_theta_new = cov_theta;
        if update_params {
            let (t, c, _) = measurement_update(&theta_new, &cov_theta_new, &c_theta, &innovation, &noise.sigma_v)?;
            theta_new = t;
            cov_theta_new = c;
        }
        self.dx_dtheta = dxp_dtheta - &k_x * &c_theta;
        model.project(&mut x_new, &mut theta_new);

        self.state = GaussianBelief {
            mean: x_new,
            covariance: cov_x,
        }
        .checked()?;
        self.params = GaussianBelief {
            mean: theta_new,
            covariance: cov_theta_new,
        }
        .checked()?;
        Ok(())
    }
}

/// Free-function form of [`Dekf::step`].
pub fn dekf_step<M: DualModel>(
    filter: &mut Dekf,
    model: &M,
    u_prev: M::Input,
    u: M::Input,
    y: &DVector<f64>,
    noise: &DekfNoise,
) -> Result<()> {
    filter.step(model, u_prev, u, y, noise, true)
}
