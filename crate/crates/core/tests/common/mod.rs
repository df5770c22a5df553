#![allow(dead_code)]

//! Oracles that share no code with the library: plain bisection, Gaussian
//! elimination, brute-force quadrature and direct trapezoidal sums.

use quench_control::config::{Config, Setup};
use quench_control::grid::{Field, Trajectory};
use quench_control::nonlocal::Kernel;

pub fn setup(text: &str) -> Setup {
    Config::parse(text).unwrap().build().unwrap()
}

pub const TRIVIAL: &str = "\
rho0 = constant:0.5
mu0 = constant:0.0
control = constant:0.0
potential_c = 0
kernel = zero
rho_target = constant:0.5
mu_target = constant:0.0
";

/// Root of `r + s (ln r - ln(1 - r)) = b` by bisection on `(0, 1)`.
pub fn bisect_resolvent(b: f64, s: f64) -> f64 {
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    for _ in 0..2000 {
        let mid = lo + (hi - lo) / 2.0;
        if mid == lo || mid == hi {
            break;
        }
        if mid + s * (mid / (1.0 - mid)).ln() > b {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo + (hi - lo) / 2.0
}

/// Cell centres of a 1D or 2D grid.
pub fn centres(f: &Field) -> Vec<(f64, f64)> {
    let g = f.grid();
    let (nx, ny) = (g.cells(0), g.cells(1));
    let hx = g.length(0) / nx as f64;
    let hy = g.length(1) / ny as f64;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let y = if g.dim() == 2 { (j as f64 + 0.5) * hy } else { 0.0 };
            out.push(((i as f64 + 0.5) * hx, y));
        }
    }
    out
}

pub fn cell_volume(f: &Field) -> f64 {
    let g = f.grid();
    let mut v = g.length(0) / g.cells(0) as f64;
    if g.dim() == 2 {
        v *= g.length(1) / g.cells(1) as f64;
    }
    v
}

/// Brute-force midpoint quadrature of `int k(|x - y|) f(y) dy`.
pub fn brute_convolution(kernel: &Kernel, f: &Field) -> Vec<f64> {
    let c = centres(f);
    let vol = cell_volume(f);
    c.iter()
        .map(|&(xa, ya)| {
            c.iter()
                .zip(f.values())
                .map(|(&(xb, yb), &v)| kernel.eval(((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt()) * v * vol)
                .sum()
        })
        .collect()
}

pub fn dot(a: &Field, b: &Field) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>() * cell_volume(a)
}

/// Trapezoidal space-time inner product.
pub fn dot_q(a: &Trajectory, b: &Trajectory) -> f64 {
    let nt = a.time().steps();
    let tau = a.time().horizon() / nt as f64;
    (0..=nt)
        .map(|n| {
            let w = if n == 0 || n == nt { 0.5 * tau } else { tau };
            w * dot(a.snapshot(n), b.snapshot(n))
        })
        .sum()
}

pub fn norm_q(a: &Trajectory) -> f64 {
    dot_q(a, a).sqrt()
}

pub fn lp_q(a: &Trajectory, p: f64) -> f64 {
    let nt = a.time().steps();
    let tau = a.time().horizon() / nt as f64;
    let vol = cell_volume(a.snapshot(0));
    let s: f64 = (0..=nt)
        .map(|n| {
            let w = if n == 0 || n == nt { 0.5 * tau } else { tau };
            w * vol * a.snapshot(n).values().iter().map(|v| v.abs().powf(p)).sum::<f64>()
        })
        .sum();
    s.powf(1.0 / p)
}

pub fn diff(a: &Trajectory, b: &Trajectory) -> Trajectory {
    a.zip_map(b, |x, y| x - y).unwrap()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// Subdifferential of the indicator of `[0, 1]`.
pub fn sign_ok(r: f64, xi: f64) -> bool {
    (r == 0.0 && xi <= 0.0) || (r == 1.0 && xi >= 0.0) || (r > 0.0 && r < 1.0 && xi == 0.0)
}

/// Dense solve by Gaussian elimination with partial pivoting.
pub fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).fold(c, |best, r| if a[r][c].abs() > a[best][c].abs() { r } else { best });
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// `[a, b, c]` in scientific notation with `digits` decimals.
pub fn sci(v: &[f64], digits: usize) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.digits$e}")).collect();
    format!("[{}]", items.join(", "))
}
