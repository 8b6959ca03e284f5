//! Quadrature on the reference tetrahedron and triangle.
//!
//! Points are stored in barycentric coordinates and weights are normalized
//! to sum to one, so an integral over a simplex `K` is `|K| * sum(w_q f(x_q))`.
//! All rules here have positive weights.

#[derive(Debug, Clone, PartialEq)]
pub struct TetRule {
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TetRule {
    /// 14-point rule exact for polynomials of degree 5.
    pub fn degree5() -> Self {
        let mut points = Vec::with_capacity(14);
        let mut weights = Vec::with_capacity(14);
        for (a, w) in [
            (0.092_735_250_310_891_226_402, 0.012_248_840_519_393_658_257),
            (0.310_885_919_263_300_609_80, 0.018_781_320_953_002_641_800),
        ] {
            let b = 1.0 - 3.0 * a;
            for k in 0..4 {
                let mut p = [a; 4];
                p[k] = b;
                points.push(p);
                weights.push(6.0 * w);
            }
        }
        let a = 0.045_503_704_125_649_649_492;
        let b = 0.5 - a;
        for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
            let mut p = [b; 4];
            p[i] = a;
            p[j] = a;
            points.push(p);
            weights.push(6.0 * 0.007_091_003_462_846_911_073);
        }
        Self { points, weights }
    }

    /// Collapsed (Duffy) tensor Gauss-Legendre rule exact for degree `degree`.
    pub fn collapsed(degree: usize) -> Self {
        let (gu, wu) = gauss_legendre_unit((degree + 4) / 2);
        let (gv, wv) = gauss_legendre_unit((degree + 3) / 2);
        let (gw, ww) = gauss_legendre_unit((degree + 2) / 2);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (u, a) in gu.iter().zip(&wu) {
            for (v, b) in gv.iter().zip(&wv) {
                for (w, c) in gw.iter().zip(&ww) {
                    let x = *u;
                    let y = v * (1.0 - u);
                    let z = w * (1.0 - u) * (1.0 - v);
                    points.push([1.0 - x - y - z, x, y, z]);
                    weights.push(6.0 * a * b * c * (1.0 - u).powi(2) * (1.0 - v));
                }
            }
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl TriangleRule {
    /// 6-point rule exact for degree 4.
    pub fn degree4() -> Self {
        let mut points = Vec::with_capacity(6);
        let mut weights = Vec::with_capacity(6);
        for (a, w) in [
            (0.445_948_490_915_965, 0.223_381_589_678_011),
            (0.091_576_213_509_771, 0.109_951_743_655_322),
        ] {
            for k in 0..3 {
                let mut p = [a; 3];
                p[k] = 1.0 - 2.0 * a;
                points.push(p);
                weights.push(w);
            }
        }
        Self { points, weights }
    }

    pub fn collapsed(degree: usize) -> Self {
        let (gu, wu) = gauss_legendre_unit((degree + 3) / 2);
        let (gv, wv) = gauss_legendre_unit((degree + 2) / 2);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (u, a) in gu.iter().zip(&wu) {
            for (v, b) in gv.iter().zip(&wv) {
                let x = *u;
                let y = v * (1.0 - u);
                points.push([1.0 - x - y, x, y]);
                weights.push(2.0 * a * b * (1.0 - u));
            }
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = n.max(1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Exact mean of `x^a y^b z^c` over the reference tetrahedron.
    fn tet_monomial_mean(a: usize, b: usize, c: usize) -> f64 {
        6.0 * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
    }

    fn tri_monomial_mean(a: usize, b: usize) -> f64 {
        2.0 * factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    fn check_tet(rule: &TetRule, degree: usize) {
        assert!(rule.weights.iter().all(|&w| w > 0.0));
        for a in 0..=degree {
            for b in 0..=degree - a {
                for c in 0..=degree - a - b {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32) * p[3].powi(c as i32))
                        .sum();
                    let exact = tet_monomial_mean(a, b, c);
                    assert!((q - exact).abs() < 1e-14, "({a},{b},{c}): {q} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..8 {
            let (x, w) = gauss_legendre_unit(n);
            for k in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((q - 1.0 / (k + 1) as f64).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn tet_rules_are_exact() {
        check_tet(&TetRule::degree5(), 5);
        for d in [2, 4, 5, 8] {
            check_tet(&TetRule::collapsed(d), d);
        }
    }

    #[test]
    fn triangle_rules_are_exact() {
        for (rule, degree) in [(TriangleRule::degree4(), 4), (TriangleRule::collapsed(6), 6)] {
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            for a in 0..=degree {
                for b in 0..=degree - a {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32))
                        .sum();
                    assert!((q - tri_monomial_mean(a, b)).abs() < 1e-13, "({a},{b})");
                }
            }
        }
    }
}
