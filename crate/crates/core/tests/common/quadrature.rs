//! Brute-force quadrature used as an independent oracle for the analytic
//! integrals.

use unite_core::o3::rsh::spherical_harmonics;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
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
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Integrate `f` over R^3 in spherical coordinates around `center`, radius
/// truncated at `rmax`.
pub fn integrate_3d(center: [f64; 3], rmax: f64, f: impl Fn([f64; 3]) -> f64) -> f64 {
    let radial = gauss_legendre(120);
    let polar = gauss_legendre(12);
    let nphi = 16;
    let mut total = 0.0;
    for &(xr, wr) in &radial {
        let r = 0.5 * rmax * (xr + 1.0);
        let wr = 0.5 * rmax * wr * r * r;
        for &(ct, wt) in &polar {
            let st = (1.0 - ct * ct).sqrt();
            for k in 0..nphi {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / nphi as f64;
                let p = [
                    center[0] + r * st * phi.cos(),
                    center[1] + r * st * phi.sin(),
                    center[2] + r * ct,
                ];
                total += wr * wt * (2.0 * std::f64::consts::PI / nphi as f64) * f(p);
            }
        }
    }
    total
}

/// Value of the normalized shell function `N r^l Y_lm exp(-a r^2)` at `p`.
pub fn shell_value(l: usize, m_index: usize, a: f64, center: [f64; 3], norm: f64, p: [f64; 3]) -> f64 {
    let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let ang = if r2 == 0.0 {
        if l == 0 { 1.0 } else { 0.0 }
    } else {
        spherical_harmonics(l, d).unwrap()[m_index]
    };
    norm * r2.sqrt().powi(l as i32) * ang * (-a * r2).exp()
}
