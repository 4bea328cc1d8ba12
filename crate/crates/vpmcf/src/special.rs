//! Scalar special functions and quadrature building blocks shared by the
//! geometry modules: Lanczos gamma, unit-sphere areas, Legendre polynomials
//! with derivatives, runtime Gauss-Legendre rules, an adaptive integrator,
//! and Fornberg finite-difference weights.

/// Lanczos approximation (g = 7, 9 coefficients), accurate to well over
/// twelve significant digits on the positive real axis.
pub fn gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = COEF[0];
        let t = x + G + 0.5;
        for (i, &c) in COEF.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

/// Surface area of the unit n-sphere, `omega_n = 2 pi^((n+1)/2) / Gamma((n+1)/2)`.
pub fn unit_sphere_area(n: usize) -> f64 {
    let half = (n as f64 + 1.0) / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / gamma(half)
}

/// Legendre polynomial `P_l(x)` by the three-term recurrence.
pub fn legendre_p(l: usize, x: f64) -> f64 {
    legendre_p012(l, x).0
}

/// `(P_l, P_l', P_l'')` at `x`, all by stable recurrences valid on [-1, 1]
/// including the endpoints: `P'_{l+1} = P'_{l-1} + (2l+1) P_l` and the same
/// relation one derivative up.
pub fn legendre_p012(l: usize, x: f64) -> (f64, f64, f64) {
    let mut p = [1.0, x];
    let mut dp = [0.0, 1.0];
    let mut d2p = [0.0, 0.0];
    if l == 0 {
        return (1.0, 0.0, 0.0);
    }
    if l == 1 {
        return (x, 1.0, 0.0);
    }
    for k in 1..l {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p[1] - kf * p[0]) / (kf + 1.0);
        let dp_next = dp[0] + (2.0 * kf + 1.0) * p[1];
        let d2p_next = d2p[0] + (2.0 * kf + 1.0) * dp[1];
        p = [p[1], p_next];
        dp = [dp[1], dp_next];
        d2p = [d2p[1], d2p_next];
    }
    (p[1], dp[1], d2p[1])
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1],
/// computed at runtime by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-based initial guess for the i-th root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp, _) = legendre_p012(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp, _) = legendre_p012(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Adaptive integration of `f` over [a, b] with an embedded Gauss pair
/// (G7 inside G15, both generated at runtime) and interval bisection.
/// Converges to the requested relative tolerance for smooth integrands.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let (n7, w7) = gauss_legendre(7);
    let (n15, w15) = gauss_legendre(15);
    let scale = {
        // Crude magnitude estimate to make the relative tolerance meaningful.
        let coarse = gauss_on(f, a, b, &n15, &w15).abs();
        if coarse > 0.0 {
            coarse
        } else {
            1.0
        }
    };
    let mut total = 0.0;
    let mut stack = vec![(a, b, 60u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let coarse = gauss_on(f, lo, hi, &n7, &w7);
        let fine = gauss_on(f, lo, hi, &n15, &w15);
        if (fine - coarse).abs() <= rel_tol * scale * 0.5 || depth == 0 {
            total += fine;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth - 1));
            stack.push((mid, hi, depth - 1));
        }
    }
    total
}

fn gauss_on<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Fornberg's algorithm: weights of the finite-difference approximation to
/// the `m`-th derivative at `x0` from samples at `grid` points. Exact for
/// polynomials of degree `grid.len() - 1`.
pub fn fd_weights(x0: f64, grid: &[f64], m: usize) -> Vec<f64> {
    let n = grid.len();
    assert!(n > m);
    // c[k][j]: weight of grid[j] for the k-th derivative.
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = grid[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = grid[i] - x0;
        for j in 0..i {
            let c3 = grid[i] - grid[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c.swap_remove(m)
}
