//! Linear Kalman-filter oracles for the EKF/DEKF code and a finite-difference
//! Jacobian check. Each returns the largest deviation it saw.

use hev_sic::battery::OcvCurve;
use hev_sic::estimation::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `x⁺ = a·x + b·u`, `y = [x, θ]`: state and parameter never interact, so
/// the DEKF must reproduce a joint Kalman filter over `[x, θ]`.
struct Decoupled {
    a: f64,
    b: f64,
}

impl DualModel for Decoupled {
    type Input = f64;
    fn transition(&self, x: &DVector<f64>, u: f64, _t: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.a * x[0] + self.b * u)
    }
    fn a(&self, _x: &DVector<f64>, _u: f64, _t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.a)
    }
    fn f_theta(&self, _x: &DVector<f64>, _u: f64, _t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }
    fn output(&self, x: &DVector<f64>, _u: f64, t: &DVector<f64>) -> DVector<f64> {
        DVector::from_column_slice(&[x[0], t[0]])
    }
    fn c_x(&self, _x: &DVector<f64>, _u: f64, _t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[1.0, 0.0])
    }
    fn c_theta(&self, _x: &DVector<f64>, _u: f64, _t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0])
    }
}

/// `x⁺ = a·x + θ·u`, `y = c·x + d·u`.
struct InputGain {
    a: f64,
    c: f64,
    d: f64,
}

impl DualModel for InputGain {
    type Input = f64;
    fn transition(&self, x: &DVector<f64>, u: f64, t: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.a * x[0] + t[0] * u)
    }
    fn a(&self, _x: &DVector<f64>, _u: f64, _t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.a)
    }
    fn f_theta(&self, _x: &DVector<f64>, u: f64, _t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, u)
    }
    fn output(&self, x: &DVector<f64>, u: f64, _t: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.c * x[0] + self.d * u)
    }
    fn c_x(&self, _x: &DVector<f64>, _u: f64, _t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.c)
    }
    fn c_theta(&self, _x: &DVector<f64>, _u: f64, _t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }
}

/// DEKF on [`Decoupled`] against the joint filter, 50 steps.
pub fn dekf_vs_joint_kf() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = Decoupled { a: 0.9, b: 0.5 };
    let (w, r_walk) = (1e-3, 1e-4);
    let noise = DekfNoise {
        sigma_r: DMatrix::from_element(1, 1, r_walk),
        sigma_w: DMatrix::from_element(1, 1, w),
        sigma_v: DMatrix::from_diagonal(&DVector::from_column_slice(&[4e-2, 9e-2])),
    };
    let mut f = Dekf::new(
        GaussianBelief::from_diag(&[0.3], &[2.0]).unwrap(),
        GaussianBelief::from_diag(&[-1.0], &[1.0]).unwrap(),
    );
    let a = DMatrix::from_diagonal(&DVector::from_column_slice(&[m.a, 1.0]));
    let q = DMatrix::from_diagonal(&DVector::from_column_slice(&[w, r_walk]));
    let r = noise.sigma_v.clone();
    let mut mean = DVector::from_column_slice(&[-1.0, 0.3]);
    let mut p = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 2.0]));
    let (mut u_prev, mut worst) = (0.0, 0.0f64);
    for _ in 0..50 {
        let u: f64 = rng.gen_range(-2.0..2.0);
        let y = DVector::from_column_slice(&[rng.gen_range(-3.0..3.0), rng.gen_range(0.0..1.0)]);
        f.step(&m, u_prev, u, &y, &noise, true).unwrap();

        let pred = DVector::from_column_slice(&[m.a * mean[0] + m.b * u_prev, mean[1]]);
        let pp = &a * &p * a.transpose() + &q;
        let k = &pp * (&pp + &r).try_inverse().unwrap();
        mean = &pred + &k * (&y - &pred);
        p = (DMatrix::identity(2, 2) - &k) * &pp;
        u_prev = u;

        worst = worst
            .max((f.state.mean[0] - mean[0]).abs())
            .max((f.params.mean[0] - mean[1]).abs())
            .max((f.state.covariance[(0, 0)] - p[(0, 0)]).abs())
            .max((f.params.covariance[(0, 0)] - p[(1, 1)]).abs());
    }
    worst
}

/// DEKF with a zero-variance parameter against a scalar state KF, 50 steps.
pub fn frozen_dekf_vs_state_kf() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = InputGain { a: 0.95, c: -1.3, d: 0.2 };
    let theta = 0.7;
    let noise = DekfNoise {
        sigma_r: DMatrix::zeros(1, 1),
        sigma_w: DMatrix::from_element(1, 1, 1e-3),
        sigma_v: DMatrix::from_element(1, 1, 1e-2),
    };
    let mut f = Dekf::new(
        GaussianBelief::from_diag(&[theta], &[0.0]).unwrap(),
        GaussianBelief::from_diag(&[0.5], &[0.3]).unwrap(),
    );
    let (mut x, mut p, mut u_prev, mut worst) = (0.5, 0.3, 0.0, 0.0f64);
    for _ in 0..50 {
        let u: f64 = rng.gen_range(-2.0..2.0);
        let y: f64 = rng.gen_range(-2.0..2.0);
        f.step(&m, u_prev, u, &DVector::from_element(1, y), &noise, true).unwrap();

        let xp = m.a * x + theta * u_prev;
        let pp = m.a * m.a * p + 1e-3;
        let k = pp * m.c / (m.c * m.c * pp + 1e-2);
        x = xp + k * (y - m.c * xp - m.d * u);
        p = (1.0 - k * m.c) * pp;
        u_prev = u;

        worst = worst
            .max((f.state.mean[0] - x).abs())
            .max((f.state.covariance[(0, 0)] - p).abs())
            .max((f.params.mean[0] - theta).abs());
    }
    worst
}

/// Parameter EKF with no random walk and a linear measurement against the
/// closed-form Gaussian posterior after 60 updates.
pub fn param_ekf_vs_batch_posterior() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m0 = DVector::from_column_slice(&[0.1, -0.4]);
    let p0 = DMatrix::from_diagonal(&DVector::from_column_slice(&[3.0, 0.5]));
    let r = 0.04;
    let mut b = GaussianBelief::new(m0.clone(), p0.clone()).unwrap();
    let info0 = p0.try_inverse().unwrap();
    let (mut info, mut rhs) = (info0.clone(), &info0 * &m0);
    for _ in 0..60 {
        let c = DMatrix::from_row_slice(1, 2, &[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
        let y = DVector::from_element(1, rng.gen_range(-1.0..1.0));
        b = ekf_param_step(&b, &y, |t| &c * t, |_| c.clone(), &DMatrix::zeros(2, 2), &DMatrix::from_element(1, 1, r)).unwrap();
        info += c.transpose() * &c / r;
        rhs += c.transpose() * &y / r;
    }
    let cov = info.try_inverse().unwrap();
    let mean = &cov * rhs;
    (&b.mean - &mean).amax().max((&b.covariance - &cov).amax())
}

fn rel_gap(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Largest relative gap between a model's Jacobians and central differences.
pub fn jacobian_gap<M: DualModel<Input = f64>>(
    m: &M,
    sample: impl Fn(&mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>, f64),
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (x, th, u) = sample(&mut rng);
        let (a, ft, cx, ct) = (m.a(&x, u, &th), m.f_theta(&x, u, &th), m.c_x(&x, u, &th), m.c_theta(&x, u, &th));
        for j in 0..x.len() {
            let h = 1e-6 * x[j].abs().max(1e-3);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let df = (m.transition(&xp, u, &th) - m.transition(&xm, u, &th)) / (2.0 * h);
            let dg = (m.output(&xp, u, &th) - m.output(&xm, u, &th)) / (2.0 * h);
            for i in 0..x.len() {
                worst = worst.max(rel_gap(a[(i, j)], df[i]));
            }
            worst = worst.max(rel_gap(cx[(0, j)], dg[0]));
        }
        for j in 0..th.len() {
            let h = 1e-6 * th[j].abs();
            let (mut tp, mut tm) = (th.clone(), th.clone());
            tp[j] += h;
            tm[j] -= h;
            let df = (m.transition(&x, u, &tp) - m.transition(&x, u, &tm)) / (2.0 * h);
            let dg = (m.output(&x, u, &tp) - m.output(&x, u, &tm)) / (2.0 * h);
            for i in 0..x.len() {
                worst = worst.max(rel_gap(ft[(i, j)], df[i]));
            }
            worst = worst.max(rel_gap(ct[(0, j)], dg[0]));
        }
    }
    worst
}

pub fn full_model_jacobian_gap() -> f64 {
    let m = FullCellModel {
        curve: OcvCurve::default(),
        dt: 0.2,
        eta: 0.98,
    };
    jacobian_gap(&m, |r| {
        (
            DVector::from_column_slice(&[r.gen_range(-0.2..0.2), r.gen_range(0.1..0.9)]),
            DVector::from_column_slice(&[
                r.gen_range(0.01..0.2),
                r.gen_range(0.005..0.1),
                r.gen_range(2.0..40.0),
                r.gen_range(1.0..4.0),
            ]),
            r.gen_range(-10.0..10.0),
        )
    })
}

pub fn capacity_model_jacobian_gap() -> f64 {
    let m = CapacityModel {
        curve: OcvCurve::default(),
        dt: 0.2,
        eta: 0.98,
        r_s: 0.1,
        r_t: 0.03,
        tau: 15.0,
    };
    jacobian_gap(&m, |r| {
        (
            DVector::from_column_slice(&[r.gen_range(-0.2..0.2), r.gen_range(0.1..0.9)]),
            DVector::from_element(1, r.gen_range(1.0..4.0)),
            r.gen_range(-10.0..10.0),
        )
    })
}

/// Smallest covariance eigenvalue over a 3000-step concurrent DEKF run on
/// random data.
pub fn dekf_min_eigenvalue() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = FullCellModel {
        curve: OcvCurve::default(),
        dt: 0.2,
        eta: 0.98,
    };
    let t = ConcurrentTuning::default();
    let mut f = Dekf::new(
        GaussianBelief::from_diag(&[0.02, 0.01, 10.0, 2.0], &t.param_p0).unwrap(),
        GaussianBelief::from_diag(&[0.0, 0.5], &t.state_p0).unwrap(),
    );
    let noise = DekfNoise {
        sigma_r: DMatrix::from_diagonal(&DVector::from_column_slice(&t.param_sigma_r)),
        sigma_w: DMatrix::from_diagonal(&DVector::from_column_slice(&t.sigma_w)),
        sigma_v: DMatrix::from_element(1, 1, 1e-4),
    };
    let (mut u_prev, mut lowest) = (0.0, f64::INFINITY);
    for k in 0..3000 {
        let u: f64 = rng.gen_range(-8.0..8.0);
        let y = DVector::from_element(1, rng.gen_range(3.4..3.9));
        f.step(&model, u_prev, u, &y, &noise, k % 10 == 9).unwrap();
        lowest = lowest.min(f.state.min_eigenvalue()).min(f.params.min_eigenvalue());
        u_prev = u;
    }
    lowest
}
