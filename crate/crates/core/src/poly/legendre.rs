/// Monomial coefficients of the Legendre polynomial `P_n` on `[-1, 1]`,
/// index = power. Built from the three-term recurrence
/// `n P_n = (2n-1) x P_{n-1} - (n-1) P_{n-2}`.
pub fn legendre_monomial_coeffs(n: u32) -> Vec<f64> {
    let n = n as usize;
    let mut prev = vec![1.0]; // P_0
    if n == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 1.0]; // P_1
    for k in 2..=n {
        let mut next = vec![0.0; k + 1];
        let a = (2 * k - 1) as f64 / k as f64;
        let b = (k - 1) as f64 / k as f64;
        for (p, &c) in cur.iter().enumerate() {
            next[p + 1] += a * c;
        }
        for (p, &c) in prev.iter().enumerate() {
            next[p] -= b * c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// Coefficients of `sqrt((2n+1)/2) * P_n`, unit L2 norm on `[-1, 1]`.
pub fn normalized_legendre_coeffs(n: u32) -> Vec<f64> {
    let scale = ((2 * n + 1) as f64 / 2.0).sqrt();
    legendre_monomial_coeffs(n)
        .into_iter()
        .map(|c| c * scale)
        .collect()
}

/// `int_{-1}^{1} u^p du`.
pub fn unit_moment(p: u32) -> f64 {
    if p % 2 == 1 {
        0.0
    } else {
        2.0 / (p + 1) as f64
    }
}

/// Evaluates `(P_n(x), P_n'(x))` by the recurrence; cheaper and better
/// conditioned than going through monomial coefficients.
fn legendre_value_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut pm = 1.0;
    let mut p = x;
    for k in 2..=n {
        let next = ((2 * k - 1) as f64 * x * p - (k - 1) as f64 * pm) / k as f64;
        pm = p;
        p = next;
    }
    let dp = n as f64 * (x * p - pm) / (x * x - 1.0);
    (p, dp)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, exact for polynomials of
/// degree `2n - 1`. Nodes come out ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one quadrature node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_value_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (_, d2) = legendre_value_derivative(n, x);
                dp = d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        // middle node is exactly zero by symmetry
        nodes[n / 2] = 0.0;
        let (_, dp) = legendre_value_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (dp * dp);
    }
    (nodes, weights)
}
