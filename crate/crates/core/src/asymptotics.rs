//! Dirichlet-sum oracles for the log-power asymptotics of the contour
//! integrals behind the second-moment laws.
//!
//! Every oracle takes the arithmetic factor `g` to be identically 1. The
//! kernels `x^s/s^(j+1)` then become sharp log-power cutoffs
//! `(log x)^j/j!` on `x > 1`, so the sums are finite and evaluated exactly up
//! to floating rounding.

use std::collections::HashMap;
use std::ops::{Add, Div, Mul, Sub};

use serde::Serialize;

use crate::arith::SieveTable;
use crate::{Error, KahanSum, Result};

/// `sum_{n >= 1} e^(-4 pi n/V)/n = -log(1 - e^(-4 pi/V))`.
pub fn i1_oracle(v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Domain(format!("V = {v} must be positive")));
    }
    Ok(-(-(-4.0 * std::f64::consts::PI / v).exp_m1()).ln())
}

/// Parameter bounds for the oracles.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleGuard {
    /// Largest `M` accepted by [`i2_oracle`].
    pub max_m: f64,
    /// Largest length accepted by [`i3_full_oracle`].
    pub max_length: f64,
    /// Largest number of terms in the Möbius sum of [`i3_full_oracle`].
    pub max_cells: usize,
}

impl Default for OracleGuard {
    fn default() -> Self {
        Self {
            max_m: 1e8,
            max_length: 1e7,
            max_cells: 50_000_000,
        }
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `F_j(x) = sum_{k^2 < x} (1/k) (log(x/k^2))^j / j!`, the `zeta(1 + 2s)` kernel sum.
fn f_kernel(x: f64, j: u32, inv_fact: f64, logs: &[f64]) -> f64 {
    if x <= 1.0 {
        return 0.0;
    }
    let lx = x.ln();
    let mut s = 0.0;
    let mut k = 1usize;
    while k < logs.len() && ((k * k) as f64) < x {
        s += (lx - 2.0 * logs[k]).powi(j as i32) / k as f64;
        k += 1;
    }
    s * inv_fact
}

/// Prefix sums `S_i(K) = sum_{k <= K} (log k)^i / k` for evaluating `F_j` in
/// `O(j)` through the binomial expansion of `(log x - 2 log k)^j`.
struct KernelSums {
    prefix: Vec<Vec<f64>>,
    inv_fact: Vec<f64>,
}

impl KernelSums {
    fn new(xmax: f64, jmax: u32) -> Self {
        let kmax = xmax.sqrt().ceil() as usize + 1;
        let mut prefix = vec![vec![0.0; kmax + 1]; jmax as usize + 1];
        for (i, row) in prefix.iter_mut().enumerate() {
            let mut acc = KahanSum::new();
            for k in 1..=kmax {
                acc.add((k as f64).ln().powi(i as i32) / k as f64);
                row[k] = acc.value();
            }
        }
        Self {
            prefix,
            inv_fact: (0..=jmax).map(|j| 1.0 / factorial(j)).collect(),
        }
    }

    /// `F_j(x)`.
    fn eval(&self, x: f64, j: u32) -> f64 {
        if x <= 1.0 {
            return 0.0;
        }
        // largest k with k^2 < x
        let mut k = x.sqrt() as usize;
        while k > 0 && ((k * k) as f64) >= x {
            k -= 1;
        }
        while (((k + 1) * (k + 1)) as f64) < x {
            k += 1;
        }
        let lx = x.ln();
        let mut s = 0.0;
        let mut binom = 1.0;
        for i in 0..=j {
            s += binom * lx.powi((j - i) as i32) * (-2f64).powi(i as i32) * self.prefix[i as usize][k];
            binom = binom * (j - i) as f64 / (i + 1) as f64;
        }
        s * self.inv_fact[j as usize]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct I2Report {
    pub m: f64,
    pub j1: u32,
    pub j2: u32,
    pub value: f64,
    /// `(1/4) (log M)^J / ((j1+1)! (j2+1)! J)`, `J = j1 + j2 + 3`.
    pub closed_denominator: f64,
    /// `(1/4) (log M)^J (j1+1)! (j2+1)! / J`, the same constant with the factorials in the numerator.
    pub closed_numerator: f64,
    pub ratio_denominator: f64,
    pub ratio_numerator: f64,
    pub rounding_bound: f64,
}

/// `sum_{n, k, l} (1/(n k l)) (log(M/(k^2 n)))^j1 (log(M/(l^2 n)))^j2 / (j1! j2!)`
/// over both logarithms positive: the expansion of
/// `zeta(1+s1+s2) zeta(1+2 s1) zeta(1+2 s2) M^(s1+s2) / (s1^(j1+1) s2^(j2+1))`.
pub fn i2_oracle(m: f64, j1: u32, j2: u32, guard: &OracleGuard) -> Result<I2Report> {
    if !(m > 0.0) {
        return Err(Error::Domain(format!("M = {m} must be positive")));
    }
    if m > guard.max_m {
        return Err(Error::Cost(format!("M = {m} exceeds {}", guard.max_m)));
    }
    let kmax = m.sqrt().ceil() as usize + 1;
    let logs: Vec<f64> = (0..=kmax).map(|k| (k.max(1) as f64).ln()).collect();
    let (if1, if2) = (1.0 / factorial(j1), 1.0 / factorial(j2));
    let mut s = KahanSum::new();
    let mut abs = 0.0;
    let mut n = 1usize;
    while (n as f64) < m {
        let x = m / n as f64;
        let t = f_kernel(x, j1, if1, &logs) * f_kernel(x, j2, if2, &logs) / n as f64;
        s.add(t);
        abs += t.abs();
        n += 1;
    }
    let value = s.value();
    let big = j1 + j2 + 3;
    let lm = m.ln().powi(big as i32) / 4.0 / big as f64;
    let fac = factorial(j1 + 1) * factorial(j2 + 1);
    let closed_denominator = lm / fac;
    let closed_numerator = lm * fac;
    Ok(I2Report {
        m,
        j1,
        j2,
        value,
        closed_denominator,
        closed_numerator,
        ratio_denominator: value / closed_denominator,
        ratio_numerator: value / closed_numerator,
        rounding_bound: 64.0 * f64::EPSILON * abs,
    })
}

/// Field operations used by the closed forms, so they can be checked over the
/// rationals.
pub trait Scalar:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
    fn from_int(n: i64) -> Self;
}

impl Scalar for f64 {
    fn from_int(n: i64) -> Self {
        n as f64
    }
}

fn pow<T: Scalar>(x: &T, e: u32) -> T {
    (0..e).fold(T::from_int(1), |acc, _| acc * x.clone())
}

fn binom(n: u32, k: u32) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

fn fact_int(n: u32) -> i64 {
    (1..=n as i64).product()
}

/// Closed forms of the two `s`-integrals left after the `v1` residue, with
/// `M_i = X^beta_i` and `g(0) = 1`:
///
/// `I2 = L^(j1+j2-1)/((j1-1)!(j2-1)!) sum_k C(j2-1,k) (b2-b1)^k b1^(j1+j2-k-1)/(j1+j2-k-1)`,
///
/// `I3 = L^(j1+j2)/(j1! j2!) (j2 sum_{k<j2} C(j2-1,k) (b2-b1)^k b1^(j1+j2-k)/(j1+j2-k)
///       + j1 sum_{k<=j2} C(j2,k) (b2-b1)^k b1^(j1+j2-k)/(j1+j2-k))`, `L = log X`.
pub fn i2_i3_closed<T: Scalar>(beta1: T, beta2: T, j1: u32, j2: u32, log_x: T) -> Result<(T, T)> {
    if j1 == 0 || j2 == 0 {
        return Err(Error::Domain("j1 and j2 must be positive".into()));
    }
    let d = beta2.clone() - beta1.clone();
    let int = T::from_int;
    let mut s2 = int(0);
    for k in 0..j2 {
        let e = j1 + j2 - k - 1;
        s2 = s2 + int(binom(j2 - 1, k)) * pow(&d, k) * pow(&beta1, e) / int(e as i64);
    }
    let i2 = pow(&log_x, j1 + j2 - 1) * s2 / int(fact_int(j1 - 1) * fact_int(j2 - 1));
    let mut a = int(0);
    for k in 0..j2 {
        let e = j1 + j2 - k;
        a = a + int(binom(j2 - 1, k)) * pow(&d, k) * pow(&beta1, e) / int(e as i64);
    }
    let mut b = int(0);
    for k in 0..=j2 {
        let e = j1 + j2 - k;
        b = b + int(binom(j2, k)) * pow(&d, k) * pow(&beta1, e) / int(e as i64);
    }
    let i3 = pow(&log_x, j1 + j2) * (int(j2 as i64) * a + int(j1 as i64) * b)
        / int(fact_int(j1) * fact_int(j2));
    Ok((i2, i3))
}

/// `sum_{n <= M1} (1/n) (log(M1/n))^(j1-1) (log(M2/n))^(j2-1) / ((j1-1)!(j2-1)!)`,
/// the sum that the `I2` closed form integrates.
pub fn i2_direct_sum(m1: f64, m2: f64, j1: u32, j2: u32) -> Result<f64> {
    if j1 == 0 || j2 == 0 || !(m1 >= 1.0) || m2 < m1 {
        return Err(Error::Domain("need j1, j2 >= 1 and 1 <= M1 <= M2".into()));
    }
    let mut s = KahanSum::new();
    let mut n = 1usize;
    while n as f64 <= m1 {
        let nf = n as f64;
        s.add((m1 / nf).ln().powi(j1 as i32 - 1) * (m2 / nf).ln().powi(j2 as i32 - 1) / nf);
        n += 1;
    }
    Ok(s.value() / (factorial(j1 - 1) * factorial(j2 - 1)))
}

#[derive(Debug, Clone, Serialize)]
pub struct I3Report {
    pub v1: f64,
    pub v2: f64,
    pub m1: f64,
    pub m2: f64,
    pub j1: u32,
    pub j2: u32,
    pub mobius: bool,
    pub value: f64,
    /// The sums are finite, so nothing is truncated.
    pub truncation_bound: f64,
    pub rounding_bound: f64,
    /// Error bounds above 10% of `|value|`.
    pub inconclusive: bool,
    pub terms: u64,
}

/// Exact multi-sum for the four-variable integral with `g = 1`:
///
/// `sum mu(a) mu(b) mu(c) mu(d)/(a b c d) H(min(V1/(a c), V2/(b d))) G(M1/(a b), M2/(c d))`
///
/// with `a, b, c, d` the Möbius variables of `1/zeta(1+s1+v1)`, `1/zeta(1+s1+v2)`,
/// `1/zeta(1+s2+v1)`, `1/zeta(1+s2+v2)`, `H(z) = sum_{u < z} 1/u` from
/// `zeta(1+v1+v2)` and the sharp `V` cutoffs, and
/// `G(x, y) = sum_n (1/n) F_j1(x/n) F_j2(y/n)`. With `mobius = false` every
/// Möbius weight except `mu(1)` is replaced by 0.
pub fn i3_full_oracle(
    v1: f64,
    v2: f64,
    m1: f64,
    m2: f64,
    j1: u32,
    j2: u32,
    mobius: bool,
    guard: &OracleGuard,
) -> Result<I3Report> {
    for (name, x) in [("V1", v1), ("V2", v2), ("M1", m1), ("M2", m2)] {
        if !(x >= 1.0) {
            return Err(Error::Domain(format!("{name} = {x} must be >= 1")));
        }
        if x > guard.max_length {
            return Err(Error::Cost(format!("{name} = {x} exceeds {}", guard.max_length)));
        }
    }
    if j1 == 0 || j2 == 0 {
        return Err(Error::Domain("j1 and j2 must be positive".into()));
    }
    // t1 = a b < M1, t2 = c d < M2
    let t1max = below(m1);
    let t2max = below(m2);
    let top = t1max.max(t2max).max(below(v1)).max(below(v2)).max(2);
    let sieve = SieveTable::new(top);
    let mu: Vec<i8> = if mobius {
        sieve.mobius_table()
    } else {
        (0..=top).map(|m| (m == 1) as i8).collect()
    };
    let sqf: Vec<usize> = (1..=top).filter(|&m| mu[m] != 0).collect();
    let harmonic = {
        let hmax = below(v1.max(v2)) + 1;
        let mut h = vec![0.0; hmax + 1];
        let mut k = KahanSum::new();
        for u in 1..=hmax {
            k.add(1.0 / u as f64);
            h[u] = k.value();
        }
        h
    };
    // H(z) with u < z
    let h_of = |z: f64| harmonic[below(z).min(harmonic.len() - 1)];

    let kern = KernelSums::new(m1.max(m2), j1.max(j2));
    let mut g_cache: HashMap<(usize, usize), f64> = HashMap::new();
    let mut g_of = |t1: usize, t2: usize| -> f64 {
        *g_cache.entry((t1, t2)).or_insert_with(|| {
            let (x, y) = (m1 / t1 as f64, m2 / t2 as f64);
            let mut s = KahanSum::new();
            let mut n = 1usize;
            while (n as f64) < x && (n as f64) < y {
                let nf = n as f64;
                s.add(kern.eval(x / nf, j1) * kern.eval(y / nf, j2) / nf);
                n += 1;
            }
            s.value()
        })
    };
    let mut total = KahanSum::new();
    let mut abs = 0.0;
    let mut terms = 0u64;
    for &a in &sqf {
        if a > t1max || a as f64 >= v1 {
            break;
        }
        for &b in &sqf {
            if a * b > t1max || b as f64 >= v2 {
                break;
            }
            for &c in &sqf {
                if c > t2max || (a * c) as f64 >= v1 {
                    break;
                }
                for &d in &sqf {
                    if c * d > t2max || (b * d) as f64 >= v2 {
                        break;
                    }
                    let h = h_of((v1 / (a * c) as f64).min(v2 / (b * d) as f64));
                    if h == 0.0 {
                        continue;
                    }
                    let g = g_of(a * b, c * d);
                    if terms as usize >= guard.max_cells {
                        return Err(Error::Cost(format!(
                            "more than {} terms in the Möbius sum",
                            guard.max_cells
                        )));
                    }
                    if g == 0.0 {
                        continue;
                    }
                    let sign = (mu[a] * mu[b] * mu[c] * mu[d]) as f64;
                    let t = sign * h * g / (a * b * c * d) as f64;
                    total.add(t);
                    abs += t.abs();
                    terms += 1;
                }
            }
        }
    }
    let value = total.value();
    let rounding_bound = 128.0 * f64::EPSILON * abs;
    Ok(I3Report {
        v1,
        v2,
        m1,
        m2,
        j1,
        j2,
        mobius,
        value,
        truncation_bound: 0.0,
        rounding_bound,
        inconclusive: rounding_bound > 0.1 * value.abs(),
        terms,
    })
}

/// Largest integer strictly below `x`.
fn below(x: f64) -> usize {
    let c = x.ceil();
    if c > 0.0 {
        c as usize - 1
    } else {
        0
    }
}

/// [`i3_full_oracle`] along `V_i = X^alpha_i`, `M_i = X^beta_i` over an `X` grid.
#[derive(Debug, Clone, Serialize)]
pub struct I3Growth {
    /// `[alpha1, alpha2, beta1, beta2]`.
    pub ray: [f64; 4],
    pub j1: u32,
    pub j2: u32,
    /// `j1 + j2 + 3` when `alpha1 = alpha2`, else `j1 + j2`.
    pub expected_exponent: f64,
    pub points: Vec<I3Report>,
    pub fit: LogPowerFit,
    pub inconclusive: bool,
}

pub fn i3_growth(
    ray: [f64; 4],
    xs: &[f64],
    j1: u32,
    j2: u32,
    guard: &OracleGuard,
) -> Result<I3Growth> {
    if xs.len() < 2 {
        return Err(Error::Precondition("need at least two X values".into()));
    }
    let [a1, a2, b1, b2] = ray;
    let mut points = Vec::new();
    for &x in xs {
        points.push(i3_full_oracle(
            x.powf(a1),
            x.powf(a2),
            x.powf(b1),
            x.powf(b2),
            j1,
            j2,
            true,
            guard,
        )?);
    }
    let log_x: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let values: Vec<f64> = points.iter().map(|p| p.value).collect();
    let fit = log_power_fit(&log_x, &values);
    let base = (j1 + j2) as f64;
    Ok(I3Growth {
        ray,
        j1,
        j2,
        expected_exponent: if a1 == a2 { base + 3.0 } else { base },
        inconclusive: points.iter().any(|p| p.inconclusive),
        points,
        fit,
    })
}

/// Least-squares fit of `log y = log c + e log(log X)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LogPowerFit {
    pub exponent: f64,
    pub coefficient: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits `y ~ c (log X)^e` given `log X` values; `NaN` if any `y <= 0`.
pub fn log_power_fit(log_x: &[f64], y: &[f64]) -> LogPowerFit {
    let pts: Vec<(f64, f64)> = log_x.iter().zip(y).map(|(l, v)| (l.ln(), v.ln())).collect();
    let n = pts.len();
    if n < 2 || pts.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return LogPowerFit {
            exponent: f64::NAN,
            coefficient: f64::NAN,
            r_squared: f64::NAN,
            points: n,
        };
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let e = sxy / sxx;
    LogPowerFit {
        exponent: e,
        coefficient: (my - e * mx).exp(),
        r_squared: if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 },
        points: n,
    }
}

/// `log(oracle(M^2)/oracle(M))/log 2`, the log-power seen by squaring `M`.
pub fn doubling_exponent(v_small: f64, v_large: f64) -> f64 {
    (v_large / v_small).ln() / 2f64.ln()
}
