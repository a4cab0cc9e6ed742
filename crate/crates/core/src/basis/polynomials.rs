//! Polynomial recurrences evaluated together with first and second derivatives.

use std::ops::{Add, Mul, Sub};

/// Value, gradient and Hessian of a bivariate function at one point:
/// `[v, ∂x, ∂y, ∂xx, ∂xy, ∂yy]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet(pub [f64; 6]);

impl Jet {
    pub const ZERO: Jet = Jet([0.0; 6]);
    pub const ONE: Jet = Jet([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

    pub fn constant(c: f64) -> Self {
        Jet([c, 0.0, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn x(x: f64) -> Self {
        Jet([x, 1.0, 0.0, 0.0, 0.0, 0.0])
    }

    pub fn y(y: f64) -> Self {
        Jet([y, 0.0, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    pub fn gradient(&self) -> [f64; 2] {
        [self.0[1], self.0[2]]
    }

    /// `(∂xx, ∂xy, ∂yy)`
    pub fn hessian(&self) -> [f64; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn scale(self, s: f64) -> Self {
        Jet(self.0.map(|c| c * s))
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Jet) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += s * b;
        }
    }

    /// Product of a function of x only (`[v, d, dd]`) and a function of y only.
    pub fn tensor(fx: [f64; 3], fy: [f64; 3]) -> Self {
        Jet([
            fx[0] * fy[0],
            fx[1] * fy[0],
            fx[0] * fy[1],
            fx[2] * fy[0],
            fx[1] * fy[1],
            fx[0] * fy[2],
        ])
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut r = self;
        for (a, b) in r.0.iter_mut().zip(o.0) {
            *a += b;
        }
        r
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        let mut r = self;
        for (a, b) in r.0.iter_mut().zip(o.0) {
            *a -= b;
        }
        r
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let [a, ax, ay, axx, axy, ayy] = self.0;
        let [b, bx, by, bxx, bxy, byy] = o.0;
        Jet([
            a * b,
            ax * b + a * bx,
            ay * b + a * by,
            axx * b + 2.0 * ax * bx + a * bxx,
            axy * b + ax * by + ay * bx + a * bxy,
            ayy * b + 2.0 * ay * by + a * byy,
        ])
    }
}

/// Shifted Legendre polynomials `p_i(t) = P_i(2t - 1)` on `[0,1]` for
/// `i = 0..out.len()`, each as `[value, first, second derivative]`.
///
/// `p_i = (1/i!) dⁱ/dtⁱ (t² - t)ⁱ`, so `∫₀¹ p_i p_j = δ_ij / (2i + 1)`.
pub fn shifted_legendre(t: f64, out: &mut [[f64; 3]]) {
    if out.is_empty() {
        return;
    }
    out[0] = [1.0, 0.0, 0.0];
    if out.len() == 1 {
        return;
    }
    let s = 2.0 * t - 1.0;
    out[1] = [s, 2.0, 0.0];
    for n in 1..out.len() - 1 {
        let a = (2 * n + 1) as f64;
        let b = n as f64;
        let c = (n + 1) as f64;
        let [p, dp, ddp] = out[n];
        let [q, dq, ddq] = out[n - 1];
        out[n + 1] = [
            (a * s * p - b * q) / c,
            (a * (2.0 * p + s * dp) - b * dq) / c,
            (a * (4.0 * dp + s * ddp) - b * ddq) / c,
        ];
    }
}

/// Orthonormal Dubiner polynomials on the unit triangle `{x, y ≥ 0, x + y ≤ 1}`,
/// indexed by `(p, q)` with `p + q ≤ degree`, written in graded order
/// (total degree ascending, `p` descending).
pub fn dubiner(x: f64, y: f64, degree: usize, out: &mut Vec<Jet>) {
    out.clear();
    let xj = Jet::x(x);
    let yj = Jet::y(y);
    // S_p = (1-y)^p P_p((2x + y - 1)/(1 - y)), a polynomial in x and y.
    let arg = xj.scale(2.0) + yj - Jet::ONE;
    let one_minus_y = Jet::ONE - yj;
    let omy2 = one_minus_y * one_minus_y;
    let mut scaled = Vec::with_capacity(degree + 1);
    scaled.push(Jet::ONE);
    if degree >= 1 {
        scaled.push(arg);
    }
    for p in 1..degree {
        let a = (2 * p + 1) as f64 / (p + 1) as f64;
        let b = p as f64 / (p + 1) as f64;
        let next = (arg * scaled[p]).scale(a) - (omy2 * scaled[p - 1]).scale(b);
        scaled.push(next);
    }
    let b = yj.scale(2.0) - Jet::ONE;
    let mut jacobi = Vec::with_capacity(degree + 1);
    for d in 0..=degree {
        for p in (0..=d).rev() {
            let q = d - p;
            jacobi_alpha0(2 * p + 1, &b, q, &mut jacobi);
            let norm = (2.0 * (2 * p + 1) as f64 * (p + q + 1) as f64).sqrt();
            out.push((scaled[p] * jacobi[q]).scale(norm));
        }
    }
}

/// Jacobi polynomials `P_n^{(α,0)}(b)` for `n = 0..=n_max`.
fn jacobi_alpha0(alpha: usize, b: &Jet, n_max: usize, out: &mut Vec<Jet>) {
    out.clear();
    out.push(Jet::ONE);
    if n_max == 0 {
        return;
    }
    let a = alpha as f64;
    out.push((b.scale(a + 2.0) + Jet::constant(a)).scale(0.5));
    for n in 2..=n_max {
        let nf = n as f64;
        let s = 2.0 * nf + a;
        let c0 = 2.0 * nf * (nf + a) * (s - 2.0);
        let c1 = (s - 1.0) * s * (s - 2.0);
        let c2 = (s - 1.0) * a * a;
        let c3 = 2.0 * (nf + a - 1.0) * (nf - 1.0) * s;
        let next = (b.scale(c1) + Jet::constant(c2)) * out[n - 1] - out[n - 2].scale(c3);
        out.push(next.scale(1.0 / c0));
    }
}

/// Number of bivariate polynomials of total degree at most `k`: `C(k+2, 2)`.
pub fn total_degree_dim(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

/// Exponents `(a, b)` of the monomials `x^a y^b`, `a + b ≤ k`, in graded
/// order: total degree ascending, ties by exponent of x descending.
pub fn graded_exponents(k: usize) -> Vec<(usize, usize)> {
    let mut e = Vec::with_capacity(total_degree_dim(k));
    for d in 0..=k {
        for a in (0..=d).rev() {
            e.push((a, d - a));
        }
    }
    e
}
