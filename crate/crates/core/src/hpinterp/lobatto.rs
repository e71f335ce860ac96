//! Gauss–Lobatto nodes on [0, 1].

/// Legendre polynomial P_n and its derivative at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        0.5 * (n * (n + 1)) as f64 * x.powi(n as i32 + 1)
    } else {
        n as f64 * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, dp)
}

/// The n+1 Lobatto nodes 0 = v₁ < … < v_{n+1} = 1: the endpoints and the
/// zeros of P_n′ mapped from [−1, 1].
///
/// Zeros are found by Newton's method on P_n′ with deflation of the zeros
/// already found, then symmetrized.
pub fn lobatto_nodes(n: usize) -> Vec<f64> {
    assert!(n >= 1, "Lobatto nodes need n >= 1");
    let nn = (n * (n + 1)) as f64;
    let mut roots: Vec<f64> = Vec::with_capacity(n.saturating_sub(1));
    for i in 1..n {
        let mut x = -(std::f64::consts::PI * i as f64 / n as f64).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            // (1−x²)P″ = 2xP′ − n(n+1)P
            let ddp = (2.0 * x * dp - nn * p) / (1.0 - x * x);
            let deflate: f64 = roots.iter().map(|r| 1.0 / (x - r)).sum();
            let step = dp / (ddp - dp * deflate);
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        roots.push(x);
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    let m = roots.len();
    let sym: Vec<f64> = (0..m).map(|i| 0.5 * (roots[i] - roots[m - 1 - i])).collect();
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    out.extend(sym.iter().map(|t| 0.5 * (1.0 + t)));
    out.push(1.0);
    out
}
