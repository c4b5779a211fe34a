//! Gauss-Legendre rules and spectral integration matrices on an interval.

use std::f64::consts::PI;

/// Legendre polynomials `P_0..=P_n` at `x`.
fn legendre_all(n: usize, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; n + 1];
    p[0] = 1.0;
    if n >= 1 {
        p[1] = x;
    }
    for k in 1..n {
        p[k + 1] = ((2 * k + 1) as f64 * x * p[k] - k as f64 * p[k - 1]) / (k + 1) as f64;
    }
    p
}

/// `(P_n(x), P_n'(x))`.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let p = legendre_all(n, x);
    let d = n as f64 * (x * p[n] - p[n - 1]) / (x * x - 1.0);
    (p[n], d)
}

/// Gauss-Legendre rule with `m` nodes on `[a, b]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    reference: Vec<f64>,
    a: f64,
    b: f64,
}

impl GaussLegendre {
    pub fn new(m: usize, a: f64, b: f64) -> Self {
        assert!(m >= 1, "need at least one node");
        let mut reference = vec![0.0; m];
        let mut ref_weights = vec![0.0; m];
        if m == 1 {
            reference[0] = 0.0;
            ref_weights[0] = 2.0;
        } else {
            for i in 0..m.div_ceil(2) {
                let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
                for _ in 0..100 {
                    let (p, d) = legendre_with_derivative(m, x);
                    let dx = p / d;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        break;
                    }
                }
                let (_, d) = legendre_with_derivative(m, x);
                let w = 2.0 / ((1.0 - x * x) * d * d);
                reference[i] = -x;
                reference[m - 1 - i] = x;
                ref_weights[i] = w;
                ref_weights[m - 1 - i] = w;
            }
        }
        let half = 0.5 * (b - a);
        GaussLegendre {
            nodes: reference.iter().map(|x| a + half * (x + 1.0)).collect(),
            weights: ref_weights.iter().map(|w| half * w).collect(),
            reference,
            a,
            b,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, w)| w * f(x)).sum()
    }

    /// `M[a][b] = ∫_{lo}^{s_a} ℓ_b(u) du` for the Lagrange basis `ℓ_b` on the
    /// nodes, so `Σ_b M[a][b] f(s_b) ≈ ∫_{lo}^{s_a} f`.
    pub fn cumulative_from_start(&self) -> Vec<Vec<f64>> {
        let m = self.len();
        let half = 0.5 * (self.b - self.a);
        let at_nodes: Vec<Vec<f64>> = self.reference.iter().map(|&x| legendre_all(m, x)).collect();
        let ref_weights: Vec<f64> = self.weights.iter().map(|w| w / half).collect();
        (0..m)
            .map(|a| {
                let pa = &at_nodes[a];
                let xa = self.reference[a];
                (0..m)
                    .map(|b| {
                        let pb = &at_nodes[b];
                        // ℓ_b = Σ_k w_b P_k(x_b) P_k (2k+1)/2 and
                        // ∫_{-1}^{x} P_k = (P_{k+1}(x) - P_{k-1}(x)) / (2k+1).
                        let mut s = 0.5 * (xa + 1.0);
                        for k in 1..m {
                            s += 0.5 * pb[k] * (pa[k + 1] - pa[k - 1]);
                        }
                        half * ref_weights[b] * s
                    })
                    .collect()
            })
            .collect()
    }

    /// `M[a][b] = ∫_{s_a}^{hi} ℓ_b(u) du`.
    pub fn cumulative_to_end(&self) -> Vec<Vec<f64>> {
        self.cumulative_from_start()
            .into_iter()
            .map(|row| row.iter().zip(&self.weights).map(|(v, w)| w - v).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for m in [1, 2, 5, 12, 40, 96] {
            let rule = GaussLegendre::new(m, -0.3, 1.7);
            for deg in 0..(2 * m).min(30) {
                let exact = (1.7f64.powi(deg as i32 + 1) - (-0.3f64).powi(deg as i32 + 1)) / (deg + 1) as f64;
                let got = rule.integrate(|x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-12 * exact.abs().max(1.0), "m={m} deg={deg}");
            }
            assert!((rule.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn nodes_sorted_inside() {
        let rule = GaussLegendre::new(17, 0.0, 0.5);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(rule.nodes[0] > 0.0 && rule.nodes[16] < 0.5);
        assert!((rule.nodes[8] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cumulative_matrices() {
        let rule = GaussLegendre::new(20, 0.0, 0.5);
        let from_start = rule.cumulative_from_start();
        let to_end = rule.cumulative_to_end();
        for (a, &s) in rule.nodes.iter().enumerate() {
            let f = |u: f64| (3.0 * u).exp();
            let forward: f64 = (0..20).map(|b| from_start[a][b] * f(rule.nodes[b])).sum();
            let backward: f64 = (0..20).map(|b| to_end[a][b] * f(rule.nodes[b])).sum();
            assert!((forward - ((3.0 * s).exp() - 1.0) / 3.0).abs() < 1e-14);
            assert!((backward - ((1.5f64).exp() - (3.0 * s).exp()) / 3.0).abs() < 1e-14);
        }
    }
}
