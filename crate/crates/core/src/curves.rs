//! Per-curve data for `E_{a,b}: y^2 = x^3 + ax + b`.
//!
//! Coefficients are the integers `a(n) = lambda(n) sqrt(n)`. At `p = 2` every
//! member of the family has additive reduction, so `a(2^k) = 0` for `k >= 1`.

use serde::Serialize;

use crate::arith::{self, gcd, legendre_table, Factorization, SieveTable};
use crate::{Error, KahanSum, Result};

/// The pair `(a, b)` with `a, b >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct CurveParams {
    pub a: i64,
    pub b: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CurveInvariants {
    /// `D = 4a^3 + 27b^2`; the discriminant is `-16 D`.
    pub d: i128,
    pub in_s: bool,
    pub d_squarefree: bool,
    pub gcd_ab: i64,
}

impl CurveParams {
    pub fn new(a: i64, b: i64) -> Result<Self> {
        if a < 1 || b < 1 {
            return Err(Error::Domain(format!("curve ({a},{b}): need a, b >= 1")));
        }
        Ok(Self { a, b })
    }

    /// `D = 4a^3 + 27b^2`.
    pub fn disc_core(&self) -> i128 {
        let (a, b) = (self.a as i128, self.b as i128);
        4 * a * a * a + 27 * b * b
    }

    /// `Delta = -16 D`.
    pub fn discriminant(&self) -> i128 {
        -16 * self.disc_core()
    }

    pub fn disc_factorization(&self) -> Factorization {
        arith::factorize(self.disc_core() as u64)
    }

    pub fn invariants(&self) -> CurveInvariants {
        CurveInvariants {
            d: self.disc_core(),
            in_s: in_family_s(self),
            d_squarefree: self.disc_factorization().is_squarefree(),
            gcd_ab: gcd(self.a as u64, self.b as u64) as i64,
        }
    }

    /// `p | Delta`, i.e. `p = 2` or `p | D`.
    pub fn is_bad_prime(&self, p: u64) -> bool {
        p == 2 || self.disc_core() % p as i128 == 0
    }
}

/// Membership in `S`: `b` odd and no prime with `p^2 | a` and `p^3 | b`.
pub fn in_family_s(c: &CurveParams) -> bool {
    if c.b % 2 == 0 {
        return false;
    }
    let g = gcd(c.a as u64, c.b as u64);
    arith::factorize(g)
        .primes()
        .all(|p| !(c.a as u64).is_multiple_of(p * p) || !(c.b as u64).is_multiple_of(p * p * p))
}

/// `-sum_x ((x^3 + alpha x + beta)/p)` for residues `alpha, beta` and the
/// Legendre table `chi` of the odd prime `p`.
pub fn trace_mod_p(alpha: u64, beta: u64, p: u64, chi: &[i8]) -> i64 {
    // f(x+1) - f(x) = 3x^2 + 3x + 1 + alpha, stepped by finite differences.
    let mut f = beta % p;
    let mut d1 = (1 + alpha) % p;
    let mut d2 = 6 % p;
    let mut s = 0i64;
    for _ in 0..p {
        s += chi[f as usize] as i64;
        f += d1;
        if f >= p {
            f -= p;
        }
        d1 += d2;
        if d1 >= p {
            d1 -= p;
        }
        d2 += 6 % p;
        if d2 >= p {
            d2 -= p;
        }
    }
    -s
}

/// `a(p)`; 0 at `p = 2`. `p` must be prime.
pub fn a_p(c: &CurveParams, p: u64) -> i64 {
    if p == 2 {
        return 0;
    }
    let chi = legendre_table(p);
    trace_mod_p(
        c.a.rem_euclid(p as i64) as u64,
        c.b.rem_euclid(p as i64) as u64,
        p,
        &chi,
    )
}

/// `a(p^k)` from `a(p)`: the Euler-factor recurrence at good primes, `a(p)^k` at bad ones.
pub fn prime_power_coeff(ap: i64, p: u64, k: u32, bad: bool) -> i64 {
    if bad {
        return ap.pow(k);
    }
    let (mut prev, mut cur) = (0i64, 1i64);
    for _ in 0..k {
        (prev, cur) = (cur, ap * cur - p as i64 * prev);
    }
    cur
}

pub fn a_pk(c: &CurveParams, p: u64, k: u32) -> i64 {
    if k == 0 {
        return 1;
    }
    prime_power_coeff(a_p(c, p), p, k, c.is_bad_prime(p))
}

/// `a(n)` by multiplicativity.
pub fn a_n(c: &CurveParams, n: u64) -> i64 {
    arith::factorize(n)
        .factors
        .iter()
        .map(|&(p, k)| a_pk(c, p, k))
        .product()
}

/// `psi_Delta(d)`: 1 when `gcd(d, Delta) = 1`, else 0.
pub fn psi_delta(c: &CurveParams, d: u64) -> i64 {
    let g = arith::gcd_i128(d as i128, 2 * c.disc_core());
    i64::from(g == 1)
}

/// Prime-power structure of every `n <= bound`, shared by all coefficient
/// assemblies over the same range.
#[derive(Debug, Clone)]
pub struct DivisorPlan {
    spf: Vec<u32>,
    /// Largest power of `spf[n]` dividing `n`.
    ppow: Vec<u32>,
    primes: Vec<u32>,
}

impl DivisorPlan {
    pub fn new(bound: usize) -> Self {
        let sieve = SieveTable::new(bound.max(1));
        let len = bound.max(1) + 1;
        let mut spf = vec![0u32; len];
        let mut ppow = vec![0u32; len];
        ppow[1] = 1;
        spf[1] = 1;
        for n in 2..len {
            let p = sieve.spf(n);
            spf[n] = p;
            let m = n / p as usize;
            ppow[n] = if m.is_multiple_of(p as usize) { ppow[m] * p } else { p };
        }
        Self {
            spf,
            ppow,
            primes: sieve.primes().to_vec(),
        }
    }

    pub fn bound(&self) -> usize {
        self.spf.len() - 1
    }

    pub fn primes(&self) -> &[u32] {
        &self.primes
    }

    pub fn spf(&self, n: usize) -> u32 {
        self.spf[n]
    }

    pub fn prime_power_part(&self, n: usize) -> u32 {
        self.ppow[n]
    }

    /// Fills `out[n] = a(n)` for `1 <= n < out.len()` given `a(p)` and the bad-prime test.
    pub fn assemble<F, B>(&self, out: &mut [i64], ap: F, bad: B)
    where
        F: Fn(u32) -> i64,
        B: Fn(u32) -> bool,
    {
        assert!(out.len() <= self.spf.len());
        if out.len() > 1 {
            out[1] = 1;
        }
        for n in 2..out.len() {
            let p = self.spf[n];
            let q = self.ppow[n] as usize;
            out[n] = if q != n {
                out[q] * out[n / q]
            } else if n == p as usize {
                ap(p)
            } else if p == 2 {
                0
            } else if bad(p) {
                out[p as usize] * out[n / p as usize]
            } else {
                let pu = p as usize;
                out[pu] * out[n / pu] - p as i64 * out[n / (pu * pu)]
            };
        }
    }
}

/// Exact coefficients `a(n)` of one curve for `n <= bound`.
#[derive(Debug, Clone, Serialize)]
pub struct CoeffSeries {
    pub owner: CurveParams,
    /// `table[n] = a(n)`; index 0 unused.
    pub table: Vec<i64>,
}

impl CoeffSeries {
    pub fn new(c: CurveParams, bound: usize) -> Self {
        let plan = DivisorPlan::new(bound);
        Self::with_plan(c, &plan, bound)
    }

    pub fn with_plan(c: CurveParams, plan: &DivisorPlan, bound: usize) -> Self {
        let mut table = vec![0i64; bound + 1];
        plan.assemble(&mut table, |p| a_p(&c, p as u64), |p| c.is_bad_prime(p as u64));
        Self { owner: c, table }
    }

    pub fn bound(&self) -> usize {
        self.table.len() - 1
    }

    pub fn get(&self, n: usize) -> i64 {
        self.table[n]
    }

    pub fn lambda(&self, n: usize) -> f64 {
        self.table[n] as f64 / (n as f64).sqrt()
    }
}

/// `rho(m)` in exact form `numer / sqrt(sqrt_den)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RhoValue {
    pub numer: i64,
    pub sqrt_den: u64,
}

impl RhoValue {
    pub fn value(&self) -> f64 {
        self.numer as f64 / (self.sqrt_den as f64).sqrt()
    }
}

/// Coefficients of `1/L`: `rho(m l^2) = mu(m) lambda(m)` when `ml` is squarefree
/// and `gcd(l, Delta) = 1`, and 0 otherwise.
pub fn rho_m(c: &CurveParams, m: u64) -> RhoValue {
    let mut m0 = 1u64;
    let mut numer = 1i64;
    for &(p, e) in &arith::factorize(m).factors {
        match e {
            1 => {
                m0 *= p;
                numer *= -a_p(c, p);
            }
            2 if !c.is_bad_prime(p) => {}
            _ => return RhoValue { numer: 0, sqrt_den: 1 },
        }
    }
    RhoValue {
        numer,
        sqrt_den: m0,
    }
}

/// Root-number proof identity for squarefree `D`: returns
/// `(prod_{p | D} a(p), chi_4(b) (-1)^a (a / 3b))`.
pub fn root_number_identity(c: &CurveParams) -> Result<(i64, i64)> {
    let f = c.disc_factorization();
    if !f.is_squarefree() {
        return Err(Error::Precondition(format!(
            "D = {} is not squarefree for ({},{})",
            c.disc_core(),
            c.a,
            c.b
        )));
    }
    let lhs: i64 = f.primes().map(|p| a_p(c, p)).product();
    let chi4 = if c.b % 4 == 1 { 1 } else { -1 };
    let sign = if c.a % 2 == 0 { 1 } else { -1 };
    let rhs = chi4 * sign * arith::jacobi(c.a as i128, 3 * c.b as i128)? as i64;
    Ok((lhs, rhs))
}

/// Smoothing kernel of the approximate functional equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum CutoffKernel {
    /// `G(t) = 1`, giving `Y(u) = exp(-u)`.
    #[default]
    Exponential,
}

impl CutoffKernel {
    #[inline]
    pub fn y(&self, u: f64) -> f64 {
        match self {
            CutoffKernel::Exponential => (-u).exp(),
        }
    }
}

/// Largest allowed bound on the omitted tail of `L_T`.
pub const TAIL_TOLERANCE: f64 = 1e-10;

/// Bound on `sum_{n > nmax} |lambda(n)|/sqrt(n) Y(2 pi n/T)` using
/// `|a(n)| <= d(n) sqrt(n)` and `d(n) <= 2 sqrt(n)`.
pub fn kernel_tail_bound(t: f64, nmax: usize) -> f64 {
    let q = (-std::f64::consts::TAU / t).exp();
    2.0 * q.powf(nmax as f64 + 1.0) / (1.0 - q)
}

/// Smallest `nmax` meeting both the kernel cutoff `Y(2 pi nmax/T) < 1e-12` and
/// the tail bound `<= 1e-10`.
pub fn required_nmax(t: f64) -> usize {
    let w = std::f64::consts::TAU / t;
    let q = (-w).exp();
    let guess = ((2.0 / (TAIL_TOLERANCE * (1.0 - q))).ln() / w).max(12.0 * 10f64.ln() / w);
    let mut n = (guess.floor() as usize).max(1);
    while kernel_tail_bound(t, n) > TAIL_TOLERANCE || (-w * n as f64).exp() >= 1e-12 {
        n += 1;
    }
    n
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PartialSum {
    pub value: f64,
    pub nmax: usize,
    pub tail_bound: f64,
}

/// `L_T = sum_{n <= nmax} lambda(n)/sqrt(n) Y(2 pi n/T) = sum a(n)/n Y(2 pi n/T)`.
pub fn partial_sum_l(
    series: &CoeffSeries,
    t: f64,
    kernel: CutoffKernel,
    nmax: usize,
) -> Result<PartialSum> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("T must be positive, got {t}")));
    }
    let w = std::f64::consts::TAU / t;
    let tail = kernel_tail_bound(t, nmax);
    if kernel.y(w * nmax as f64) >= 1e-12 || tail > TAIL_TOLERANCE {
        return Err(Error::TruncationInsufficient(format!(
            "nmax = {nmax} for T = {t}; need at least {}",
            required_nmax(t)
        )));
    }
    if nmax > series.bound() {
        return Err(Error::TruncationInsufficient(format!(
            "series holds {} coefficients, nmax = {nmax}",
            series.bound()
        )));
    }
    let mut s = KahanSum::new();
    for n in 1..=nmax {
        let an = series.table[n];
        if an != 0 {
            s.add(an as f64 / n as f64 * kernel.y(w * n as f64));
        }
    }
    Ok(PartialSum {
        value: s.value(),
        nmax,
        tail_bound: tail,
    })
}

/// Mollifier length and smoothing polynomial `P(x) = sum_j poly[j] x^j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MollifierSpec {
    pub length: f64,
    pub poly: Vec<f64>,
}

impl MollifierSpec {
    /// Requires `P(0) = 0` and `P(1) = 1`.
    pub fn new(length: f64, poly: Vec<f64>) -> Result<Self> {
        let s = Self::unnormalized(length, poly)?;
        let p1: f64 = s.poly.iter().sum();
        if (p1 - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("P(1) = {p1}, expected 1")));
        }
        Ok(s)
    }

    /// Only `P(0) = 0` is enforced.
    pub fn unnormalized(length: f64, poly: Vec<f64>) -> Result<Self> {
        if !(length >= 1.0) {
            return Err(Error::Domain(format!("mollifier length {length} < 1")));
        }
        if poly.first().copied().unwrap_or(0.0) != 0.0 {
            return Err(Error::Domain("P(0) must be 0".into()));
        }
        Ok(Self { length, poly })
    }

    pub fn p(&self, x: f64) -> f64 {
        self.poly.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// `w[m] = P(log(M/m)/log M)` for `1 <= m <= M`; `M <= 1` keeps only `m = 1`
    /// with weight `P(1)`.
    pub fn weights(&self) -> Vec<f64> {
        let top = self.length.floor() as usize;
        let lm = self.length.ln();
        let mut w = vec![0.0; top + 1];
        for (m, wm) in w.iter_mut().enumerate().skip(1) {
            *wm = if lm <= 0.0 {
                self.p(1.0)
            } else {
                self.p((self.length / m as f64).ln() / lm)
            };
        }
        w
    }
}

/// `M(E) = sum_{m <= M} rho(m)/sqrt(m) P(log(M/m)/log M)` from a coefficient
/// table covering `m <= M` and precomputed `weights`.
pub fn mollifier_value<B: Fn(u32) -> bool>(
    table: &[i64],
    plan: &DivisorPlan,
    weights: &[f64],
    bad: B,
    scratch: &mut Vec<f64>,
) -> f64 {
    let top = weights.len().saturating_sub(1);
    assert!(top < table.len() && top <= plan.bound());
    scratch.clear();
    scratch.resize(top + 1, 0.0);
    if top >= 1 {
        scratch[1] = 1.0;
    }
    let mut s = KahanSum::new();
    if top >= 1 {
        s.add(weights[1]);
    }
    // r(m) = rho(m)/sqrt(m): r(p) = -a(p)/p, r(p^2) = psi(p)/p, r(p^k) = 0 for k >= 3.
    for m in 2..=top {
        let p = plan.spf(m);
        let q = plan.prime_power_part(m) as usize;
        let r = if q != m {
            scratch[q] * scratch[m / q]
        } else if m == p as usize {
            -(table[m] as f64) / m as f64
        } else if m == (p as usize) * (p as usize) {
            if bad(p) {
                0.0
            } else {
                1.0 / p as f64
            }
        } else {
            0.0
        };
        scratch[m] = r;
        if r != 0.0 {
            s.add(r * weights[m]);
        }
    }
    s.value()
}

/// Candidate conductors `2^alpha 3^beta prod_{p | D, p > 3} p` for a curve with
/// `gcd(a, b) = 1` and squarefree `D`, with `alpha` in `1..=8`.
pub fn conductor_candidates(c: &CurveParams) -> Result<Vec<u64>> {
    let inv = c.invariants();
    if inv.gcd_ab != 1 || !inv.d_squarefree {
        return Err(Error::Precondition(format!(
            "({},{}) needs gcd(a,b) = 1 and squarefree D",
            c.a, c.b
        )));
    }
    let f = c.disc_factorization();
    let odd: u64 = f.primes().filter(|&p| p > 3).product();
    let betas: Vec<u32> = if inv.d % 3 == 0 { (1..=5).collect() } else { vec![0] };
    let mut out = Vec::new();
    for alpha in 1..=8u32 {
        for &beta in &betas {
            out.push(2u64.pow(alpha) * 3u64.pow(beta) * odd);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct AfeCandidate {
    pub conductor: u64,
    pub epsilon: i8,
    pub values: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AfeSearch {
    pub conductor: u64,
    pub epsilon: i8,
    pub central_value: f64,
    pub variance: f64,
    /// Largest deviation of `R(U)` from the mean across the grid.
    pub spread: f64,
    /// Smallest competitor variance divided by the winner's.
    pub separation: f64,
    pub candidates: Vec<AfeCandidate>,
}

/// Default variance threshold, relative to `max(mean^2, 1)`.
pub const AFE_VARIANCE_THRESHOLD: f64 = 1e-6;

/// For each `(N, eps)` evaluates `R(U) = L_U + eps L_{N/U}` on
/// `U in {sqrt(N)/4, sqrt(N)/2, sqrt(N), 2 sqrt(N), 4 sqrt(N)}` and returns the pair
/// with the smallest variance across the grid.
pub fn afe_consistency_search(
    c: &CurveParams,
    candidates: &[u64],
    threshold: f64,
) -> Result<AfeSearch> {
    let odd_rad: u64 = c.disc_factorization().primes().filter(|&p| p > 3).product();
    if candidates.is_empty() {
        return Err(Error::Precondition("no conductor candidates".into()));
    }
    for &n in candidates {
        if n == 0 || n % odd_rad != 0 {
            return Err(Error::Precondition(format!(
                "candidate {n} is not divisible by the odd radical {odd_rad} of the discriminant"
            )));
        }
    }
    let nmax_top = candidates
        .iter()
        .map(|&n| required_nmax(4.0 * (n as f64).sqrt()))
        .max()
        .unwrap();
    let series = CoeffSeries::new(*c, nmax_top);
    let kernel = CutoffKernel::Exponential;
    let l = |t: f64| -> Result<f64> {
        Ok(partial_sum_l(&series, t, kernel, required_nmax(t))?.value)
    };
    let mut table = Vec::new();
    for &n in candidates {
        let root = (n as f64).sqrt();
        let grid = [root / 4.0, root / 2.0, root, 2.0 * root, 4.0 * root];
        let mut lu = Vec::new();
        let mut lv = Vec::new();
        for &u in &grid {
            lu.push(l(u)?);
            lv.push(l(n as f64 / u)?);
        }
        for eps in [1i8, -1] {
            let values: Vec<f64> = lu
                .iter()
                .zip(&lv)
                .map(|(x, y)| x + eps as f64 * y)
                .collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let variance =
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
            table.push(AfeCandidate {
                conductor: n,
                epsilon: eps,
                values,
                mean,
                variance,
            });
        }
    }
    let best = table
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.variance.total_cmp(&y.1.variance))
        .map(|(i, _)| i)
        .unwrap();
    let w = &table[best];
    let runner_up = table
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != best)
        .map(|(_, t)| t.variance)
        .fold(f64::INFINITY, f64::min);
    let scale = w.mean.powi(2).max(1.0);
    if w.variance / scale >= threshold {
        return Err(Error::AmbiguousConductor(format!(
            "best candidate N = {} eps = {} has relative variance {:.3e}",
            w.conductor,
            w.epsilon,
            w.variance / scale
        )));
    }
    Ok(AfeSearch {
        conductor: w.conductor,
        epsilon: w.epsilon,
        central_value: w.mean,
        variance: w.variance,
        spread: w
            .values
            .iter()
            .map(|v| (v - w.mean).abs())
            .fold(0.0, f64::max),
        separation: runner_up / w.variance.max(f64::MIN_POSITIVE),
        candidates: table.clone(),
    })
}
