//! Synthetic data from the joint choice/outcome model with known truth.
//!
//! Covariates: `z = (const, z1..zK)` and `x = (x1..xL)`, all standard normal
//! apart from the constant. With a labor block, earnings and hours are
//! generated per alternative from `z1..zK` and one shifter each
//! (`earn_shift`, `hours_shift`), and the true normalized wage enters utility
//! with coefficient 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Exclusions, LaborData, LaborSchema, Schema};
use crate::error::{Error, Result};
use crate::ghk::{GhkConfig, MnpKernel};
use crate::stats_core::{bivariate_normal_cdf, dot, quantile_unchecked, std_normal_cdf, Matrix, RngStream};
use crate::unobs_test::{draw_latent, EpsDistribution, LatentCovSpec};

const DGP_STREAM: u64 = 0x6467_7000;
const IMPLIED_STREAM: u64 = 0x6467_7001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceErrors {
    #[default]
    Normal,
    /// Independent standard Gumbel errors (multinomial logit); needs ρ* = 0 and a = 0.
    Gumbel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaborDgp {
    pub earnings_kappa: Vec<f64>,
    pub hours_kappa: Vec<f64>,
    /// Coefficients on z1..zK.
    #[serde(default)]
    pub earnings_delta: Vec<f64>,
    #[serde(default)]
    pub hours_delta: Vec<f64>,
    #[serde(default)]
    pub earnings_lambda: f64,
    #[serde(default)]
    pub hours_lambda: f64,
    #[serde(default)]
    pub earnings_noise: f64,
    #[serde(default)]
    pub hours_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    pub alternatives: usize,
    #[serde(default = "one")]
    pub z_covariates: usize,
    #[serde(default = "one")]
    pub x_covariates: usize,
    /// One row per alternative over (const, z1..zK); the base row must be zero.
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub tau: Vec<f64>,
    pub latent: LatentCovSpec,
    #[serde(default)]
    pub eps_distribution: EpsDistribution,
    #[serde(default)]
    pub choice_errors: ChoiceErrors,
    #[serde(default)]
    pub labor: Option<LaborDgp>,
    /// One-based; defaults to the last alternative.
    #[serde(default)]
    pub base_alternative: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl DgpConfig {
    /// A J-alternative design with one z and one x covariate and moderate effects.
    pub fn standard(n: usize, alternatives: usize, rho_star: Vec<f64>, seed: u64) -> Self {
        let j = alternatives;
        let beta = (0..j)
            .map(|k| {
                if k + 1 == j {
                    vec![0.0, 0.0]
                } else {
                    let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                    vec![0.3 * s - 0.1 * k as f64, s * (0.8 - 0.15 * k as f64)]
                }
            })
            .collect();
        let tau = (0..j).map(|k| [0.4, -0.3, 0.1, 0.25, -0.15][k % 5]).collect();
        Self {
            n,
            alternatives: j,
            z_covariates: 1,
            x_covariates: 1,
            beta,
            gamma: vec![0.7],
            tau,
            latent: LatentCovSpec { rho_star, a: 0.0, mean_eps: 0.0, means: Vec::new() },
            eps_distribution: EpsDistribution::Normal,
            choice_errors: ChoiceErrors::Normal,
            labor: None,
            base_alternative: None,
            seed,
        }
    }

    /// Earnings/hours block whose wage ratios differ by alternative.
    pub fn with_labor(mut self) -> Self {
        let j = self.alternatives;
        let k = self.z_covariates;
        self.labor = Some(LaborDgp {
            earnings_kappa: (0..j).map(|a| 3.0 + 0.4 * a as f64).collect(),
            hours_kappa: (0..j).map(|a| 2.0 + 0.1 * ((a * 7) % 3) as f64).collect(),
            earnings_delta: vec![0.3; k],
            hours_delta: vec![0.1; k],
            earnings_lambda: 0.5,
            hours_lambda: 0.2,
            earnings_noise: 0.5,
            hours_noise: 0.2,
        });
        self
    }

    pub fn base(&self) -> usize {
        self.base_alternative.unwrap_or(self.alternatives).saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.alternatives;
        let bad = |m: String| Err(Error::Config(m));
        if j < 2 {
            return bad("dgp needs at least two alternatives".into());
        }
        if self.n == 0 {
            return bad("dgp needs n >= 1".into());
        }
        if self.x_covariates == 0 || self.z_covariates == 0 {
            return bad("dgp needs at least one z and one x covariate".into());
        }
        if let Some(b) = self.base_alternative {
            if b == 0 || b > j {
                return bad(format!("base_alternative {b} outside 1..={j}"));
            }
        }
        if self.beta.len() != j || self.beta.iter().any(|r| r.len() != self.z_covariates + 1) {
            return bad(format!("beta must be {j} rows of {} values", self.z_covariates + 1));
        }
        if self.beta[self.base()].iter().any(|&b| b != 0.0) {
            return bad("the base alternative's beta row must be zero".into());
        }
        if self.gamma.len() != self.x_covariates || self.tau.len() != j || self.latent.alternatives() != j {
            return bad("gamma, tau or latent spec has the wrong length".into());
        }
        self.latent.factor()?;
        let lo = -1.0 / (j as f64 - 1.0);
        if !(self.latent.a > lo && self.latent.a < 1.0) {
            return bad(format!("exchangeable correlation {} outside ({lo}, 1)", self.latent.a));
        }
        if self.choice_errors == ChoiceErrors::Gumbel
            && (self.latent.a != 0.0 || self.latent.rho_star.iter().any(|&r| r != 0.0))
        {
            return bad("Gumbel choice errors require rho_star = 0 and a = 0".into());
        }
        if let Some(l) = &self.labor {
            if l.earnings_kappa.len() != j || l.hours_kappa.len() != j {
                return bad("labor kappa vectors need one value per alternative".into());
            }
            for d in [&l.earnings_delta, &l.hours_delta] {
                if !d.is_empty() && d.len() != self.z_covariates {
                    return bad("labor delta vectors need one value per z covariate".into());
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        let zs: Vec<String> = (1..=self.z_covariates).map(|k| format!("z{k}")).collect();
        let mut z = vec!["const".to_string()];
        z.extend(zs.iter().cloned());
        Schema {
            choice: "choice".into(),
            outcome: "outcome".into(),
            alternatives: self.alternatives,
            base_alternative: self.base_alternative,
            z,
            x: (1..=self.x_covariates).map(|k| format!("x{k}")).collect(),
            wage: Vec::new(),
            labor: self.labor.as_ref().map(|_| LaborSchema {
                earnings: "earnings".into(),
                hours: "hours".into(),
                covariates: zs,
                earnings_extra: vec!["earn_shift".into()],
                hours_extra: vec!["hours_shift".into()],
            }),
            proxy: Vec::new(),
            group: None,
        }
    }
}

/// Latent draws behind a simulated dataset; never written with the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub eps: Vec<f64>,
    /// n×J utility errors.
    pub u: Matrix,
    /// n×J systematic utilities V_ij (wage, covariates and means).
    pub v: Matrix,
    /// n×J true normalized wages (zero without a labor block).
    pub wage: Matrix,
}

struct RowDraw {
    z: Vec<f64>,
    x: Vec<f64>,
    shifts: [f64; 2],
    u: Vec<f64>,
    v: Vec<f64>,
    wage: Vec<f64>,
    eps: f64,
    choice: usize,
    outcome: u8,
    earnings: f64,
    hours: f64,
}

fn true_labor(l: &LaborDgp, z: &[f64], shifts: [f64; 2], alt: usize) -> (f64, f64) {
    let dz = |d: &[f64]| if d.is_empty() { 0.0 } else { dot(d, &z[1..]) };
    let w = l.earnings_kappa[alt] + dz(&l.earnings_delta) + l.earnings_lambda * shifts[0];
    let h = l.hours_kappa[alt] + dz(&l.hours_delta) + l.hours_lambda * shifts[1];
    (w, h)
}

fn draw_row(cfg: &DgpConfig, factor: &Matrix, stream: &RngStream, i: usize) -> Result<RowDraw> {
    let j = cfg.alternatives;
    let mut cur = stream.substream(i as u64).cursor();
    let mut z = vec![1.0];
    z.extend((0..cfg.z_covariates).map(|_| cur.next_normal()));
    let x: Vec<f64> = (0..cfg.x_covariates).map(|_| cur.next_normal()).collect();
    let shifts = [cur.next_normal(), cur.next_normal()];
    let mut eta = vec![0.0; j + 1];
    let mut u = vec![0.0; j];
    let mut eps = draw_latent(factor, cfg.eps_distribution, &mut cur, &mut eta, &mut u);
    if cfg.choice_errors == ChoiceErrors::Gumbel {
        for k in 0..j {
            // Map the normal draw through its own CDF to keep one draw per slot.
            let neg_log_p = if eta[k] < 0.0 {
                -std_normal_cdf(eta[k]).max(1e-300).ln()
            } else {
                -(-std_normal_cdf(-eta[k])).ln_1p()
            };
            u[k] = -neg_log_p.max(1e-300).ln();
        }
    }
    eps += cfg.latent.mean_eps;
    let mut wage = vec![0.0; j];
    if let Some(l) = &cfg.labor {
        for (a, w) in wage.iter_mut().enumerate() {
            let (e, h) = true_labor(l, &z, shifts, a);
            if !(h > 0.0) {
                return Err(Error::Config(format!("true expected hours non-positive for row {i}")));
            }
            *w = e / h;
        }
    }
    let v: Vec<f64> = (0..j).map(|k| wage[k] + dot(&z, &cfg.beta[k]) + cfg.latent.mean(k)).collect();
    let choice = (0..j)
        .max_by(|&a, &b| (v[a] + u[a]).total_cmp(&(v[b] + u[b])).then(b.cmp(&a)))
        .unwrap_or(0);
    let index = dot(&x, &cfg.gamma) + cfg.tau[choice];
    let outcome = u8::from(index + eps > 0.0);
    let (mut earnings, mut hours) = (0.0, 0.0);
    if let Some(l) = &cfg.labor {
        let (e, h) = true_labor(l, &z, shifts, choice);
        earnings = e + l.earnings_noise * cur.next_normal();
        hours = h + l.hours_noise * cur.next_normal();
    }
    Ok(RowDraw { z, x, shifts, u, v, wage, eps, choice, outcome, earnings, hours })
}

/// Draw a dataset and its truth record; identical configs give identical output.
pub fn simulate_dgp(cfg: &DgpConfig) -> Result<(Dataset, TruthRecord)> {
    cfg.validate()?;
    let factor = cfg.latent.factor()?;
    let stream = RngStream::new(cfg.seed, DGP_STREAM);
    let rows: Vec<RowDraw> = (0..cfg.n)
        .into_par_iter()
        .map(|i| draw_row(cfg, &factor, &stream, i))
        .collect::<Result<_>>()?;
    let n = cfg.n;
    let j = cfg.alternatives;
    let kz = cfg.z_covariates;
    let schema = cfg.schema();
    let labor = cfg.labor.as_ref().map(|_| LaborData {
        earnings: rows.iter().map(|r| r.earnings).collect(),
        hours: rows.iter().map(|r| r.hours).collect(),
        covariates: Matrix::from_fn(n, kz, |i, k| rows[i].z[k + 1]),
        earnings_extra: Matrix::from_fn(n, 1, |i, _| rows[i].shifts[0]),
        hours_extra: Matrix::from_fn(n, 1, |i, _| rows[i].shifts[1]),
    });
    let data = Dataset {
        z: Matrix::from_fn(n, kz + 1, |i, k| rows[i].z[k]),
        x: Matrix::from_fn(n, cfg.x_covariates, |i, k| rows[i].x[k]),
        choice: rows.iter().map(|r| r.choice).collect(),
        outcome: rows.iter().map(|r| r.outcome).collect(),
        wage: None,
        labor,
        proxy: None,
        group: None,
        exclusions: Exclusions::from_schema(&schema),
        schema,
        source_lines: Vec::new(),
        dropped_lines: Vec::new(),
    };
    let truth = TruthRecord {
        eps: rows.iter().map(|r| r.eps).collect(),
        u: Matrix::from_fn(n, j, |i, k| rows[i].u[k]),
        v: Matrix::from_fn(n, j, |i, k| rows[i].v[k]),
        wage: Matrix::from_fn(n, j, |i, k| rows[i].wage[k]),
    };
    Ok((data, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n: usize,
    pub cov_eps_u: Vec<f64>,
    pub cov_eps_u_se: Vec<f64>,
    /// Cov(ε, ξ_c) over all rows with ξ_c = max_{k≠c} y_k − u_c, one entry per c.
    pub cov_eps_xi: Vec<f64>,
    pub cov_eps_xi_se: Vec<f64>,
    /// Cov(ε, ξ) at each row's realized choice.
    pub cov_eps_xi_chosen: f64,
    pub cov_eps_xi_chosen_se: f64,
    /// Row c: frequency with which each alternative is runner-up when c is chosen.
    pub second_place: Matrix,
    pub chosen_counts: Vec<usize>,
}

fn sample_cov(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let cov = prods.iter().sum::<f64>() / (n - 1.0);
    let var = prods.iter().map(|p| (p - cov).powi(2)).sum::<f64>() / (n - 1.0);
    (cov, (var / n).sqrt())
}

/// Sample moments of the latent draws that the test's identities speak about.
pub fn empirical_moments(data: &Dataset, truth: &TruthRecord) -> Result<MomentReport> {
    let n = data.n();
    let j = data.alternatives();
    if truth.eps.len() != n || truth.u.rows() != n || truth.u.cols() != j || n < 2 {
        return Err(Error::Shape("truth record does not match the dataset".into()));
    }
    let y = |i: usize, k: usize| truth.v[(i, k)] + truth.u[(i, k)];
    let mut cov_eps_u = Vec::with_capacity(j);
    let mut cov_eps_u_se = Vec::with_capacity(j);
    let mut cov_eps_xi = Vec::with_capacity(j);
    let mut cov_eps_xi_se = Vec::with_capacity(j);
    for c in 0..j {
        let (v, s) = sample_cov(&truth.eps, &truth.u.column(c));
        cov_eps_u.push(v);
        cov_eps_u_se.push(s);
        let xi: Vec<f64> = (0..n)
            .map(|i| (0..j).filter(|&k| k != c).map(|k| y(i, k)).fold(f64::NEG_INFINITY, f64::max) - truth.u[(i, c)])
            .collect();
        let (v, s) = sample_cov(&truth.eps, &xi);
        cov_eps_xi.push(v);
        cov_eps_xi_se.push(s);
    }
    let mut counts = Matrix::zeros(j, j);
    let mut chosen_counts = vec![0usize; j];
    let mut xi_chosen = Vec::with_capacity(n);
    for i in 0..n {
        let c = data.choice[i];
        let (second, ymax) = (0..j)
            .filter(|&k| k != c)
            .map(|k| (k, y(i, k)))
            .fold((usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        counts[(c, second)] += 1.0;
        chosen_counts[c] += 1;
        xi_chosen.push(ymax - truth.u[(i, c)]);
    }
    let second_place = Matrix::from_fn(j, j, |c, k| {
        if chosen_counts[c] == 0 {
            0.0
        } else {
            counts[(c, k)] / chosen_counts[c] as f64
        }
    });
    let (xc, xs) = sample_cov(&truth.eps, &xi_chosen);
    Ok(MomentReport {
        n,
        cov_eps_u,
        cov_eps_u_se,
        cov_eps_xi,
        cov_eps_xi_se,
        cov_eps_xi_chosen: xc,
        cov_eps_xi_chosen_se: xs,
        second_place,
        chosen_counts,
    })
}

/// CDF of ξ_j = max_{k≠j}(V_k + u_k) − u_j at `t` for one individual.
fn xi_cdf(cfg: &DgpConfig, kernel: Option<&MnpKernel>, v: &[f64], alt: usize, t: f64, obs: u64) -> f64 {
    let j = cfg.alternatives;
    let others: Vec<usize> = (0..j).filter(|&k| k != alt).collect();
    if cfg.choice_errors == ChoiceErrors::Gumbel {
        let lse = {
            let m = others.iter().map(|&k| v[k]).fold(f64::NEG_INFINITY, f64::max);
            m + others.iter().map(|&k| (v[k] - m).exp()).sum::<f64>().ln()
        };
        return 1.0 / (1.0 + (-(t - lse)).exp());
    }
    let s = (2.0 - 2.0 * cfg.latent.a).sqrt();
    match j {
        2 => std_normal_cdf((t - v[others[0]]) / s),
        3 => bivariate_normal_cdf((t - v[others[0]]) / s, (t - v[others[1]]) / s, 0.5).unwrap_or(f64::NAN),
        _ => {
            let mut shifted = v.to_vec();
            shifted[alt] = t;
            let ghk = GhkConfig { num_draws: 500, antithetic: true, master_seed: cfg.seed ^ IMPLIED_STREAM };
            kernel.map_or(f64::NAN, |k| k.prob(&shifted, alt, &ghk, &ghk.stream_for(obs)))
        }
    }
}

/// Corr(ε, Φ⁻¹(F₂(ξ_j))) for each alternative, the correlation a Gaussian
/// copula fit targets, computed on `mc_draws` fresh individuals.
pub fn implied_copula_rho(cfg: &DgpConfig, mc_draws: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    if mc_draws < 2 {
        return Err(Error::Domain("need at least two draws".into()));
    }
    let j = cfg.alternatives;
    let factor = cfg.latent.factor()?;
    let kernel = if j > 3 { Some(MnpKernel::exchangeable(j, cfg.latent.a)?) } else { None };
    let stream = RngStream::new(cfg.seed, IMPLIED_STREAM);
    let rows: Vec<(f64, Vec<f64>)> = (0..mc_draws)
        .into_par_iter()
        .map(|i| {
            let r = draw_row(cfg, &factor, &stream, i)?;
            let y: Vec<f64> = (0..j).map(|k| r.v[k] + r.u[k]).collect();
            let g = (0..j)
                .map(|a| {
                    let xi = (0..j).filter(|&k| k != a).map(|k| y[k]).fold(f64::NEG_INFINITY, f64::max) - r.u[a];
                    let p = xi_cdf(cfg, kernel.as_ref(), &r.v, a, xi, i as u64).clamp(1e-12, 1.0 - 1e-12);
                    quantile_unchecked(p)
                })
                .collect();
            Ok((r.eps, g))
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let me = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let ve = rows.iter().map(|r| (r.0 - me).powi(2)).sum::<f64>();
    Ok((0..j)
        .map(|a| {
            let mg = rows.iter().map(|r| r.1[a]).sum::<f64>() / n;
            let vg = rows.iter().map(|r| (r.1[a] - mg).powi(2)).sum::<f64>();
            let c = rows.iter().map(|r| (r.0 - me) * (r.1[a] - mg)).sum::<f64>();
            c / (ve * vg).sqrt()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_symmetric_design() {
        let j = 3;
        let mut cfg = DgpConfig::standard(100_000, j, vec![0.0; j], 5);
        cfg.beta = vec![vec![0.0, 0.0]; j];
        cfg.gamma = vec![0.0];
        cfg.tau = vec![0.0; j];
        cfg.latent.a = 0.3;
        let (d, t) = simulate_dgp(&cfg).unwrap();
        let n = d.n() as f64;
        for k in 0..j {
            let share = d.choice.iter().filter(|&&c| c == k).count() as f64 / n;
            assert!((share - 1.0 / 3.0).abs() < 0.01, "share {share}");
            let u = t.u.column(k);
            let (c, _) = sample_cov(&t.eps, &u);
            assert!(c.abs() < 0.01);
        }
        let rate = d.outcome.iter().map(|&m| f64::from(m)).sum::<f64>() / n;
        assert!((rate - 0.5).abs() < 0.01);
        let m = empirical_moments(&d, &t).unwrap();
        for k in 0..j {
            assert!(m.cov_eps_xi[k].abs() < 3.0 * m.cov_eps_xi_se[k]);
            assert!((m.second_place.row(k).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(m.second_place[(k, k)], 0.0);
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let cfg = DgpConfig::standard(300, 3, vec![0.5, 0.0, 0.0], 9).with_labor();
        let (a, ta) = simulate_dgp(&cfg).unwrap();
        let (b, tb) = simulate_dgp(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert!(a.labor.is_some());
        let mut bad = cfg.clone();
        bad.latent.rho_star = vec![0.95, 0.95, -0.95];
        bad.latent.a = 0.5;
        assert!(matches!(simulate_dgp(&bad), Err(Error::Config(_))));
        let mut bad = cfg.clone();
        bad.beta[2] = vec![1.0, 0.0];
        assert!(matches!(simulate_dgp(&bad), Err(Error::Config(_))));
        let mut g = DgpConfig::standard(10, 3, vec![0.2, 0.0, 0.0], 1);
        g.choice_errors = ChoiceErrors::Gumbel;
        assert!(matches!(simulate_dgp(&g), Err(Error::Config(_))));
    }

    #[test]
    fn truth_never_reaches_the_csv() {
        let cfg = DgpConfig::standard(20, 3, vec![0.3, 0.0, 0.0], 2);
        let (d, _) = simulate_dgp(&cfg).unwrap();
        let mut buf = Vec::new();
        super::super::dataset::write_dataset(&mut buf, &d).unwrap();
        let head = String::from_utf8(buf).unwrap();
        let header = head.lines().next().unwrap();
        assert_eq!(header, "choice,outcome,const,z1,x1");
    }

    #[test]
    fn implied_rho_is_zero_under_independence() {
        let cfg = DgpConfig::standard(10, 3, vec![0.0; 3], 4);
        let r = implied_copula_rho(&cfg, 50_000).unwrap();
        assert!(r.iter().all(|v| v.abs() < 0.02), "{r:?}");
        let cfg = DgpConfig::standard(10, 3, vec![0.5, 0.0, 0.0], 4);
        let r = implied_copula_rho(&cfg, 50_000).unwrap();
        assert!(r[0] < -0.2 && r[1] > 0.05 && r[2] > 0.05, "{r:?}");
    }
}
