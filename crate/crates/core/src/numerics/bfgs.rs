//! Dense BFGS with a backtracking Armijo line search.
//!
//! The inverse-Hessian approximation starts at the identity, is rescaled by
//! `s·y / y·y` after the first accepted step, and is only updated when the
//! curvature condition `s·y > 0` holds. Accepted iterates strictly decrease
//! the objective.

/// Objective returning `(f(x), ∇f(x))`.
pub trait Objective {
    fn eval(&mut self, x: &[f64]) -> (f64, Vec<f64>);
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    fn eval(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        self(x)
    }
}

#[derive(Clone, Debug)]
pub struct BfgsOptions {
    pub max_iters: usize,
    /// Stop once `max |∇f| < grad_tol`.
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub backtrack: f64,
    pub max_line_search: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-10,
            c1: 1e-4,
            backtrack: 0.5,
            max_line_search: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_max_norm: f64,
    /// Number of accepted steps.
    pub iterations: usize,
    pub converged: bool,
}

pub fn bfgs_minimize<O: Objective>(
    f: O,
    x0: &[f64],
    max_iters: usize,
    grad_tol: f64,
) -> BfgsResult {
    bfgs_minimize_with(
        f,
        x0,
        &BfgsOptions {
            max_iters,
            grad_tol,
            ..BfgsOptions::default()
        },
    )
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

struct InverseHessian {
    n: usize,
    h: Vec<f64>,
    is_identity: bool,
}

impl InverseHessian {
    fn identity(n: usize) -> Self {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        Self {
            n,
            h,
            is_identity: true,
        }
    }

    fn reset(&mut self) {
        *self = Self::identity(self.n);
    }

    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| -dot(&self.h[i * n..(i + 1) * n], g))
            .collect()
    }

    /// `H <- (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`.
    fn update(&mut self, s: &[f64], y: &[f64], sy: f64) {
        let n = self.n;
        if self.is_identity {
            let yy = dot(y, y);
            if yy > 0.0 {
                let scale = sy / yy;
                self.h.iter_mut().for_each(|v| *v *= scale);
            }
        }
        let rho = 1.0 / sy;
        let hy: Vec<f64> = (0..n)
            .map(|i| dot(&self.h[i * n..(i + 1) * n], y))
            .collect();
        let yhy = dot(y, &hy);
        let coeff = (1.0 + rho * yhy) * rho;
        for i in 0..n {
            for j in 0..n {
                self.h[i * n + j] += coeff * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
            }
        }
        self.is_identity = false;
    }
}

pub fn bfgs_minimize_with<O: Objective>(mut f: O, x0: &[f64], opts: &BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f.eval(&x);
    if !fx.is_finite() || !all_finite(&g) {
        return BfgsResult {
            x,
            f: fx,
            grad_max_norm: f64::NAN,
            iterations: 0,
            converged: false,
        };
    }

    let mut h = InverseHessian::identity(n);
    let mut iterations = 0;
    let mut broke_down = false;

    while iterations < opts.max_iters && max_norm(&g) >= opts.grad_tol {
        let mut d = h.direction(&g);
        let mut slope = dot(&g, &d);
        if slope.is_nan() || slope >= 0.0 {
            h.reset();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut step = line_search(&mut f, &x, fx, &d, slope, opts);
        if step.is_none() && !h.is_identity {
            h.reset();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
            step = line_search(&mut f, &x, fx, &d, slope, opts);
        }
        let Some((x_new, f_new, g_new)) = step else {
            break;
        };
        if !all_finite(&g_new) {
            broke_down = true;
            break;
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            h.update(&s, &y, sy);
        }

        x = x_new;
        fx = f_new;
        g = g_new;
        iterations += 1;
    }

    let grad_max_norm = max_norm(&g);
    BfgsResult {
        x,
        f: fx,
        grad_max_norm,
        iterations,
        converged: !broke_down && grad_max_norm < opts.grad_tol,
    }
}

fn line_search<O: Objective>(
    f: &mut O,
    x: &[f64],
    fx: f64,
    d: &[f64],
    slope: f64,
    opts: &BfgsOptions,
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    let mut alpha = 1.0;
    for _ in 0..opts.max_line_search {
        let trial: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
        let (ft, gt) = f.eval(&trial);
        if ft.is_finite() && ft <= fx + opts.c1 * alpha * slope && ft < fx {
            return Some((trial, ft, gt));
        }
        alpha *= opts.backtrack;
    }
    None
}
