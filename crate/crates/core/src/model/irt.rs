use super::math::{half_cauchy_dlog, half_cauchy_lpdf, log1p_exp, normal_lpdf, sigmoid};
use super::LogDensity;
use crate::{Error, Result};

const SCALE_PRIOR: f64 = 2.0;
const MU_B_SD: f64 = 5.0;

/// Two-parameter logistic item response model.
///
/// `y_ij ~ BernoulliLogit(a_j (theta_i - b_j))` for student `i` and question
/// `j`. Parameters, in order:
/// `[log_sigma_theta, theta_1..I, log_sigma_a, log_a_1..J, mu_b, log_sigma_b, b_1..J]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Irt2pl {
    students: usize,
    questions: usize,
    y: Vec<f64>,
}

impl Irt2pl {
    pub fn new(students: usize, questions: usize, y: Vec<Vec<u8>>) -> Result<Self> {
        if y.len() != students || y.iter().any(|r| r.len() != questions) {
            return Err(Error::InvalidData(format!("IRT responses must be {students} x {questions}")));
        }
        let y = y.into_iter().flatten().map(f64::from).collect();
        Ok(Self { students, questions, y })
    }

    fn offsets(&self) -> (usize, usize, usize, usize, usize, usize) {
        let theta = 1;
        let log_sigma_a = theta + self.students;
        let log_a = log_sigma_a + 1;
        let mu_b = log_a + self.questions;
        let log_sigma_b = mu_b + 1;
        let b = log_sigma_b + 1;
        (theta, log_sigma_a, log_a, mu_b, log_sigma_b, b)
    }
}

/// Adds `sum_i N(x_i | mean, exp(log_sd))` and returns the derivative with
/// respect to `log_sd`; writes `d/dx_i` into `grad_x` and `d/dmean` into the
/// returned tuple.
fn normal_block(x: &[f64], mean: f64, log_sd: f64, grad_x: &mut [f64]) -> (f64, f64, f64) {
    let sd = log_sd.exp();
    let inv_var = (-2.0 * log_sd).exp();
    let mut lp = 0.0;
    let mut d_mean = 0.0;
    let mut d_log_sd = 0.0;
    for (g, &v) in grad_x.iter_mut().zip(x) {
        let dev = v - mean;
        lp += normal_lpdf(v, mean, sd);
        *g = -dev * inv_var;
        d_mean += dev * inv_var;
        d_log_sd += dev * dev * inv_var - 1.0;
    }
    (lp, d_mean, d_log_sd)
}

impl LogDensity for Irt2pl {
    fn dim(&self) -> usize {
        self.students + 2 * self.questions + 4
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.log_density_grad(theta, &mut g)
    }

    fn log_density_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let (o_theta, o_lsa, o_la, o_mub, o_lsb, o_b) = self.offsets();
        let (i_n, j_n) = (self.students, self.questions);
        let log_sigma_theta = params[0];
        let ability = &params[o_theta..o_theta + i_n];
        let log_sigma_a = params[o_lsa];
        let log_a = &params[o_la..o_la + j_n];
        let mu_b = params[o_mub];
        let log_sigma_b = params[o_lsb];
        let b = &params[o_b..o_b + j_n];

        let mut lp = 0.0;

        // scale hyperpriors with log-Jacobians
        for (idx, ls) in [(0, log_sigma_theta), (o_lsa, log_sigma_a), (o_lsb, log_sigma_b)] {
            let s = ls.exp();
            lp += half_cauchy_lpdf(s, SCALE_PRIOR) + ls;
            grad[idx] = 1.0 + half_cauchy_dlog(s, SCALE_PRIOR);
        }

        let (l, _, d) = normal_block(ability, 0.0, log_sigma_theta, &mut grad[o_theta..o_theta + i_n]);
        lp += l;
        grad[0] += d;

        // lognormal(a | 0, sigma_a) with the log-Jacobian is normal on log a
        let (l, _, d) = normal_block(log_a, 0.0, log_sigma_a, &mut grad[o_la..o_la + j_n]);
        lp += l;
        grad[o_lsa] += d;

        lp += normal_lpdf(mu_b, 0.0, MU_B_SD);
        grad[o_mub] = -mu_b / (MU_B_SD * MU_B_SD);
        let (l, dm, d) = normal_block(b, mu_b, log_sigma_b, &mut grad[o_b..o_b + j_n]);
        lp += l;
        grad[o_mub] += dm;
        grad[o_lsb] += d;

        let a: Vec<f64> = log_a.iter().map(|v| v.exp()).collect();
        for (i, &ab) in ability.iter().enumerate() {
            let row = &self.y[i * j_n..(i + 1) * j_n];
            let mut d_ability = 0.0;
            for j in 0..j_n {
                let eta = a[j] * (ab - b[j]);
                lp += row[j] * eta - log1p_exp(eta);
                let resid = row[j] - sigmoid(eta);
                d_ability += resid * a[j];
                grad[o_b + j] -= resid * a[j];
                grad[o_la + j] += resid * eta;
            }
            grad[o_theta + i] += d_ability;
        }
        lp
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["log_sigma_theta".to_string()];
        names.extend((1..=self.students).map(|i| format!("theta_{i}")));
        names.push("log_sigma_a".into());
        names.extend((1..=self.questions).map(|j| format!("log_a_{j}")));
        names.push("mu_b".into());
        names.push("log_sigma_b".into());
        names.extend((1..=self.questions).map(|j| format!("b_{j}")));
        names
    }
}
