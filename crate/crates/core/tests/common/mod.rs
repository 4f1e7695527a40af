// Independent reference computations for the integration tests. Nothing here
// calls the library's own normal CDF, quantile or bivariate routines.
#![allow(dead_code)]

pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Φ from the positive-term series φ(x)·Σ x^(2n+1)/(2n+1)!! near the centre
/// and a Lentz continued fraction for the Mills ratio in the tails.
pub fn cdf(x: f64) -> f64 {
    if x.abs() < 5.0 {
        let (mut term, mut sum, mut n) = (x, x, 0.0);
        while term.abs() > 1e-18 * sum.abs().max(1e-300) {
            n += 1.0;
            term *= x * x / (2.0 * n + 1.0);
            sum += term;
        }
        return 0.5 + phi(x) * sum;
    }
    let t = x.abs();
    // R(t) = 1/(t + 1/(t + 2/(t + 3/(t + ...))))
    let tiny = 1e-300;
    let mut f = t;
    let mut c = t;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64;
        d = t + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = t + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    let tail = phi(t) / f;
    if x < 0.0 { tail } else { 1.0 - tail }
}

fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of f over [a, b].
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    // Start from a few panels so narrow features are not missed.
    let panels = 16;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let lo = a + k as f64 * h;
            let hi = lo + h;
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = h / 6.0 * (fa + 4.0 * fm + fb);
            simpson_step(&f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 40)
        })
        .sum()
}

/// Density of a centred bivariate normal with variances s11, s22 and covariance s12.
pub fn bvn_density(x: f64, y: f64, s11: f64, s12: f64, s22: f64) -> f64 {
    let det = s11 * s22 - s12 * s12;
    let q = (s22 * x * x - 2.0 * s12 * x * y + s11 * y * y) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

/// P(X ≤ b1, Y ≤ b2) by nested adaptive quadrature of the density.
pub fn bvn_orthant(b1: f64, b2: f64, s11: f64, s12: f64, s22: f64) -> f64 {
    let lo1 = -12.0 * s11.sqrt();
    let lo2 = -12.0 * s22.sqrt();
    adaptive_simpson(
        |x| adaptive_simpson(|y| bvn_density(x, y, s11, s12, s22), lo2, b2, 1e-12),
        lo1,
        b1,
        1e-10,
    )
}

/// Standard bivariate normal CDF with correlation rho by nested quadrature.
pub fn bvn_cdf(x: f64, y: f64, rho: f64) -> f64 {
    bvn_orthant(x, y, 1.0, rho, 1.0)
}

/// Multinomial logit probabilities.
pub fn logit_probs(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Small deterministic generator for test inputs (SplitMix64).
pub struct TestRng(pub u64);

impl TestRng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Box–Muller.
    pub fn normal(&mut self) -> f64 {
        let (u, v) = (self.uniform(), self.uniform());
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}
