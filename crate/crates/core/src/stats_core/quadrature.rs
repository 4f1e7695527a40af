use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gauss–Legendre rule on the reference interval [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Gauss–Legendre nodes by Newton iteration on P_n.
    pub fn gauss_legendre(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Domain("quadrature order must be positive".into()));
        }
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// ∫_lo^hi f(t) dt by affine map of the reference rule.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

/// Legendre polynomial P_n(x) and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats_core::normal::std_normal_pdf;

    #[test]
    fn polynomials_integrate_exactly() {
        let rule = QuadratureRule::gauss_legendre(10).unwrap();
        // exact for degree <= 19
        let v = rule.integrate(-1.0, 2.0, |t| t.powi(19) - 3.0 * t.powi(4));
        let exact = (2f64.powi(20) - 1.0) / 20.0 - 3.0 * (2f64.powi(5) + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-8 * exact.abs());
    }

    #[test]
    fn weights_positive_and_density_integrates_to_one() {
        for order in [40, 80] {
            let rule = QuadratureRule::gauss_legendre(order).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            assert!((rule.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
            let mass = rule.integrate(-8.0, 8.0, std_normal_pdf);
            assert!((mass - 1.0).abs() < 1e-8, "order {order}: {mass}");
        }
    }

    #[test]
    fn nodes_symmetric_sorted() {
        let rule = QuadratureRule::gauss_legendre(7).unwrap();
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(rule.nodes[3].abs() < 1e-15);
        assert!((rule.nodes[0] + rule.nodes[6]).abs() < 1e-15);
    }
}
