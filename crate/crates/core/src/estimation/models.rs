//! Cell models in the form the estimators consume.

use nalgebra::{DMatrix, DVector};

use super::ekf::DualModel;
use crate::battery::OcvCurve;

const R_FLOOR: f64 = 1e-4;
const Q_FLOOR_AH: f64 = 0.05;

fn decay(dt: f64, tau: f64) -> f64 {
    (-dt / tau).exp()
}

/// Bilinear recursion for the RC-branch current on filtered data,
/// `i_2(k) = α(i(k) + i(k−1)) − β i_2(k−1)`, with its τ-sensitivity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BranchCurrent {
    pub i2: f64,
    pub di2_dtau: f64,
    pub i_prev: f64,
}

impl BranchCurrent {
    pub fn coefficients(dt: f64, tau: f64) -> (f64, f64) {
        let d = dt + 2.0 * tau;
        (dt / d, (dt - 2.0 * tau) / d)
    }

    /// Advances with the current sample `i` and time constant `tau`.
    pub fn advance(&mut self, i: f64, dt: f64, tau: f64) {
        let (alpha, beta) = Self::coefficients(dt, tau);
        let d = dt + 2.0 * tau;
        let dalpha = -2.0 * dt / (d * d);
        let dbeta = -4.0 * dt / (d * d);
        let s = i + self.i_prev;
        let i2 = alpha * s - beta * self.i2;
        self.di2_dtau = dalpha * s - dbeta * self.i2 - beta * self.di2_dtau;
        self.i2 = i2;
        self.i_prev = i;
    }
}

/// Step-3 model: state `[V_C, z]`, parameter `[Q_b]` (Ah), resistances and
/// time constant fixed. Input is the cell current (discharge positive).
#[derive(Debug, Clone, Copy)]
pub struct CapacityModel {
    pub curve: OcvCurve,
    pub dt: f64,
    pub eta: f64,
    pub r_s: f64,
    pub r_t: f64,
    pub tau: f64,
}

impl DualModel for CapacityModel {
    type Input = f64;

    fn transition(&self, x: &DVector<f64>, u: f64, theta: &DVector<f64>) -> DVector<f64> {
        let e = decay(self.dt, self.tau);
        DVector::from_column_slice(&[
            e * x[0] + self.r_t * (1.0 - e) * u,
            x[1] - self.eta * self.dt * u / (3600.0 * theta[0]),
        ])
    }

    fn a(&self, _x: &DVector<f64>, _u: f64, _theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[decay(self.dt, self.tau), 0.0, 0.0, 1.0])
    }

    fn f_theta(&self, _x: &DVector<f64>, u: f64, theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 1, &[0.0, self.eta * self.dt * u / (3600.0 * theta[0] * theta[0])])
    }

    fn output(&self, x: &DVector<f64>, u: f64, _theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.curve.eval(x[1]) - x[0] - self.r_s * u)
    }

    fn c_x(&self, x: &DVector<f64>, _u: f64, _theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[-1.0, self.curve.slope(x[1])])
    }

    fn c_theta(&self, _x: &DVector<f64>, _u: f64, _theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }

    fn project(&self, x: &mut DVector<f64>, theta: &mut DVector<f64>) {
        x[1] = self.curve.clamp(x[1]);
        theta[0] = theta[0].max(Q_FLOOR_AH);
    }
}

/// Full model for the concurrent DEKF: state `[V_C, z]`, parameters
/// `[R_s, R_t, τ, Q_b]`.
#[derive(Debug, Clone, Copy)]
pub struct FullCellModel {
    pub curve: OcvCurve,
    pub dt: f64,
    pub eta: f64,
}

impl DualModel for FullCellModel {
    type Input = f64;

    fn transition(&self, x: &DVector<f64>, u: f64, th: &DVector<f64>) -> DVector<f64> {
        let e = decay(self.dt, th[2]);
        DVector::from_column_slice(&[
            e * x[0] + th[1] * (1.0 - e) * u,
            x[1] - self.eta * self.dt * u / (3600.0 * th[3]),
        ])
    }

    fn a(&self, _x: &DVector<f64>, _u: f64, th: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[decay(self.dt, th[2]), 0.0, 0.0, 1.0])
    }

    fn f_theta(&self, x: &DVector<f64>, u: f64, th: &DVector<f64>) -> DMatrix<f64> {
        let e = decay(self.dt, th[2]);
        let de_dtau = e * self.dt / (th[2] * th[2]);
        DMatrix::from_row_slice(
            2,
            4,
            &[
                0.0,
                (1.0 - e) * u,
                de_dtau * (x[0] - th[1] * u),
                0.0,
                0.0,
                0.0,
                0.0,
                self.eta * self.dt * u / (3600.0 * th[3] * th[3]),
            ],
        )
    }

    fn output(&self, x: &DVector<f64>, u: f64, th: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.curve.eval(x[1]) - x[0] - th[0] * u)
    }

    fn c_x(&self, x: &DVector<f64>, _u: f64, _th: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[-1.0, self.curve.slope(x[1])])
    }

    fn c_theta(&self, _x: &DVector<f64>, u: f64, _th: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 4, &[-u, 0.0, 0.0, 0.0])
    }

    fn project(&self, x: &mut DVector<f64>, th: &mut DVector<f64>) {
        x[1] = self.curve.clamp(x[1]);
        th[0] = th[0].max(R_FLOOR);
        th[1] = th[1].max(R_FLOOR);
        th[2] = th[2].max(self.dt);
        th[3] = th[3].max(Q_FLOOR_AH);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-3)
    }

    fn check_model<M: DualModel<Input = f64>>(m: &M, nx: usize, sample: impl Fn(&mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>, f64)) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (x, th, u) = sample(&mut rng);
            let (a, ft, cx, ct) = (m.a(&x, u, &th), m.f_theta(&x, u, &th), m.c_x(&x, u, &th), m.c_theta(&x, u, &th));
            for j in 0..nx {
                let h = 1e-6 * x[j].abs().max(1e-3);
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[j] += h;
                xm[j] -= h;
                let df = (m.transition(&xp, u, &th) - m.transition(&xm, u, &th)) / (2.0 * h);
                let dg = (m.output(&xp, u, &th) - m.output(&xm, u, &th)) / (2.0 * h);
                for i in 0..nx {
                    assert!(rel_close(a[(i, j)], df[i], 1e-5));
                }
                assert!(rel_close(cx[(0, j)], dg[0], 1e-5));
            }
            for j in 0..th.len() {
                let h = 1e-6 * th[j].abs();
                let (mut tp, mut tm) = (th.clone(), th.clone());
                tp[j] += h;
                tm[j] -= h;
                let df = (m.transition(&x, u, &tp) - m.transition(&x, u, &tm)) / (2.0 * h);
                let dg = (m.output(&x, u, &tp) - m.output(&x, u, &tm)) / (2.0 * h);
                for i in 0..nx {
                    assert!(rel_close(ft[(i, j)], df[i], 1e-5), "f_theta[{i},{j}] {} vs {}", ft[(i, j)], df[i]);
                }
                assert!(rel_close(ct[(0, j)], dg[0], 1e-5));
            }
        }
    }

    #[test]
    fn capacity_model_jacobians() {
        let m = CapacityModel {
            curve: OcvCurve::default(),
            dt: 0.2,
            eta: 0.98,
            r_s: 0.1,
            r_t: 0.03,
            tau: 15.0,
        };
        check_model(&m, 2, |r| {
            (
                DVector::from_column_slice(&[r.gen_range(-0.2..0.2), r.gen_range(0.1..0.9)]),
                DVector::from_element(1, r.gen_range(1.0..4.0)),
                r.gen_range(-10.0..10.0),
            )
        });
    }

    #[test]
    fn full_model_jacobians() {
        let m = FullCellModel {
            curve: OcvCurve::default(),
            dt: 0.2,
            eta: 0.98,
        };
        check_model(&m, 2, |r| {
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
        });
    }

    #[test]
    fn branch_sensitivity_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let dt = [0.2, 1.0][rng.gen_range(0..2)];
            let tau: f64 = rng.gen_range(2.0..40.0);
            let input: Vec<f64> = (0..50).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let run = |t: f64| {
                let mut b = BranchCurrent::default();
                for &i in &input {
                    b.advance(i, dt, t);
                }
                b
            };
            let h = 1e-6 * tau;
            let fd = (run(tau + h).i2 - run(tau - h).i2) / (2.0 * h);
            assert!(rel_close(run(tau).di2_dtau, fd, 1e-5));
        }
    }

    #[test]
    fn branch_current_tracks_dc() {
        let mut b = BranchCurrent::default();
        for _ in 0..2000 {
            b.advance(2.0, 0.2, 15.0);
        }
        assert!((b.i2 - 2.0).abs() < 1e-9);
    }
}
