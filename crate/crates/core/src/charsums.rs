//! Complete character sums over residue classes `(alpha, beta)`.
//!
//! `lambda_{alpha,beta}(p^k) p^{k/2}` is the integer `a_{alpha,beta}(p^k)`, so every
//! complete sum of `lambda(r)` is an integer divided by `sqrt(r)`; vanishing
//! statements are checked on that integer.

use std::collections::HashSet;

use num_complex::Complex64;
use serde::Serialize;

use crate::arith::{
    self, e_frac, gauss_epsilon, inverse_or_zero, jacobi, legendre_table, roots_of_unity,
    Factorization,
};
use crate::curves::{prime_power_coeff, trace_mod_p};
use crate::weight::{Weight, WeightKind};
use crate::{Error, Result};

/// Limits on brute-force work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostGuard {
    /// Largest `p^2` for a per-prime residue table.
    pub max_pairs_per_prime: u64,
    /// Largest number of inner evaluations for one complete sum.
    pub max_evaluations: u64,
}

impl Default for CostGuard {
    fn default() -> Self {
        Self {
            max_pairs_per_prime: 10_000,
            max_evaluations: 100_000_000,
        }
    }
}

impl CostGuard {
    fn check(&self, what: &str, evaluations: u64) -> Result<()> {
        if evaluations > self.max_evaluations {
            return Err(Error::Cost(format!(
                "{what} needs {evaluations} evaluations (limit {})",
                self.max_evaluations
            )));
        }
        Ok(())
    }
}

/// `a_{alpha,beta}(p)` and the discriminant flag for every `(alpha, beta) mod p`.
#[derive(Debug, Clone)]
pub struct PrimeTable {
    pub p: u64,
    /// Index `alpha * p + beta`.
    pub ap: Vec<i64>,
    /// `4 alpha^3 + 27 beta^2 = 0 mod p` (always true at `p = 2`).
    pub bad: Vec<bool>,
}

impl PrimeTable {
    pub fn new(p: u64, guard: &CostGuard) -> Result<Self> {
        if p * p > guard.max_pairs_per_prime {
            return Err(Error::Cost(format!(
                "prime {p}: {} residue pairs exceed the per-prime limit {}",
                p * p,
                guard.max_pairs_per_prime
            )));
        }
        guard.check(&format!("table for p = {p}"), p * p * p)?;
        let n = (p * p) as usize;
        let mut ap = vec![0i64; n];
        let mut bad = vec![true; n];
        if p != 2 {
            let chi = legendre_table(p);
            for alpha in 0..p {
                for beta in 0..p {
                    let i = (alpha * p + beta) as usize;
                    ap[i] = trace_mod_p(alpha, beta, p, &chi);
                    bad[i] = (4 * alpha * alpha % p * alpha + 27 * beta * beta).is_multiple_of(p);
                }
            }
        }
        Ok(Self { p, ap, bad })
    }

    #[inline]
    fn idx(&self, alpha: i128, beta: i128) -> usize {
        let p = self.p as i128;
        (alpha.rem_euclid(p) * p + beta.rem_euclid(p)) as usize
    }

    /// `a_{alpha,beta}(p^k)`.
    pub fn coeff(&self, alpha: i128, beta: i128, k: u32) -> i64 {
        if k == 0 {
            return 1;
        }
        if self.p == 2 {
            return 0;
        }
        let i = self.idx(alpha, beta);
        prime_power_coeff(self.ap[i], self.p, k, self.bad[i])
    }

    pub fn is_bad(&self, alpha: i128, beta: i128) -> bool {
        self.bad[self.idx(alpha, beta)]
    }
}

/// Per-prime tables for every prime factor of a modulus.
#[derive(Debug, Clone)]
pub struct ModulusTables {
    pub factorization: Factorization,
    pub tables: Vec<PrimeTable>,
}

impl ModulusTables {
    pub fn new(r: u64, guard: &CostGuard) -> Result<Self> {
        let factorization = arith::factorize(r);
        let tables = factorization
            .primes()
            .map(|p| PrimeTable::new(p, guard))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            factorization,
            tables,
        })
    }

    /// `a_{alpha,beta}(r) = prod_p a_{alpha,beta}(p^{k_p})`.
    pub fn coeff(&self, alpha: i128, beta: i128) -> i64 {
        self.tables
            .iter()
            .zip(&self.factorization.factors)
            .map(|(t, &(_, k))| t.coeff(alpha, beta, k))
            .product()
    }

    /// `D(alpha, beta) = 0 mod p` for every prime `p | g` (with `g | r`).
    fn disc_divisible(&self, alpha: i128, beta: i128, g: u64) -> bool {
        self.tables
            .iter()
            .filter(|t| g.is_multiple_of(t.p))
            .all(|t| t.is_bad(alpha, beta))
    }
}

/// Exact value `scaled_value / sqrt(sqrt_scale)` of a complete sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompleteSumResult {
    pub modulus: u64,
    pub scaled_value: i128,
    pub sqrt_scale: u64,
    pub float_value: f64,
}

impl CompleteSumResult {
    fn new(modulus: u64, scaled_value: i128) -> Self {
        Self {
            modulus,
            scaled_value,
            sqrt_scale: modulus,
            float_value: scaled_value as f64 / (modulus as f64).sqrt(),
        }
    }
}

fn sum_over_radical<F>(r: u64, guard: &CostGuard, what: &str, mut include: F) -> Result<CompleteSumResult>
where
    F: FnMut(&ModulusTables, i128, i128) -> bool,
{
    if r == 0 {
        return Err(Error::Domain("modulus must be positive".into()));
    }
    if r.is_multiple_of(2) {
        // lambda(2^k) = 0 for k >= 1.
        return Ok(CompleteSumResult::new(r, 0));
    }
    let tables = ModulusTables::new(r, guard)?;
    let rs = tables.factorization.radical();
    guard.check(what, rs * rs)?;
    let mut s: i128 = 0;
    for alpha in 0..rs as i128 {
        for beta in 0..rs as i128 {
            if include(&tables, alpha, beta) {
                s += tables.coeff(alpha, beta) as i128;
            }
        }
    }
    Ok(CompleteSumResult::new(r, s))
}

/// `Q_t(r) = sum_{alpha, beta mod r*, Delta = 0 mod (r*, t)} lambda_{alpha,beta}(r)`.
pub fn q_t(r: u64, t: u64, guard: &CostGuard) -> Result<CompleteSumResult> {
    let g = arith::gcd(arith::radical(r.max(1)), t);
    sum_over_radical(r, guard, &format!("Q_{t}({r})"), |tb, a, b| {
        tb.disc_divisible(a, b, g)
    })
}

/// `Q(r) = Q_1(r)`.
pub fn q(r: u64, guard: &CostGuard) -> Result<CompleteSumResult> {
    q_t(r, 1, guard)
}

/// `Q'_k(r) = sum_{alpha, beta mod r*} psi_Delta((k, r)) lambda_{alpha,beta}(r)`.
pub fn q_prime(k: u64, r: u64, guard: &CostGuard) -> Result<CompleteSumResult> {
    let g = arith::gcd(k, r.max(1));
    sum_over_radical(r, guard, &format!("Q'_{k}({r})"), |tb, a, b| {
        g % 2 == 1
            && tb
                .tables
                .iter()
                .filter(|t| g.is_multiple_of(t.p))
                .all(|t| !t.is_bad(a, b))
    })
}

/// Outcome of comparing two sides of an identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub lhs: [f64; 2],
    pub rhs: [f64; 2],
    pub error: f64,
    pub pass: bool,
}

impl Check {
    fn new(lhs: Complex64, rhs: Complex64, tol: f64) -> Self {
        let error = (lhs - rhs).norm();
        Self {
            lhs: [lhs.re, lhs.im],
            rhs: [rhs.re, rhs.im],
            error,
            pass: error < tol,
        }
    }
}

/// Tolerance for the character-sum identities.
pub const SUM_TOLERANCE: f64 = 1e-6;

fn check_odd_squarefree(r: u64) -> Result<Factorization> {
    if r == 0 || r.is_multiple_of(2) {
        return Err(Error::InvalidModulus(r as i128));
    }
    let f = arith::factorize(r);
    if !f.is_squarefree() {
        return Err(Error::Domain(format!("{r} is not squarefree")));
    }
    Ok(f)
}

/// Tables of `a_{alpha,beta}(r)` and `D(alpha,beta) mod r` over all pairs mod an odd
/// squarefree `r`, for evaluating many twisted sums.
#[derive(Debug, Clone)]
pub struct ResidueSums {
    pub r: u64,
    /// `a[alpha * r + beta] = a_{alpha,beta}(r)`.
    pub a: Vec<i64>,
    disc: Vec<u64>,
    roots: Vec<Complex64>,
}

impl ResidueSums {
    pub fn new(r: u64, guard: &CostGuard) -> Result<Self> {
        check_odd_squarefree(r)?;
        guard.check(&format!("residue table mod {r}"), r * r)?;
        let tables = ModulusTables::new(r, guard)?;
        let n = (r * r) as usize;
        let mut a = vec![0i64; n];
        let mut disc = vec![0u64; n];
        for alpha in 0..r {
            for beta in 0..r {
                let i = (alpha * r + beta) as usize;
                a[i] = tables.coeff(alpha as i128, beta as i128);
                let d = (4 * (alpha as u128).pow(3) + 27 * (beta as u128).pow(2)) % r as u128;
                disc[i] = d as u64;
            }
        }
        Ok(Self {
            r,
            a,
            disc,
            roots: roots_of_unity(r),
        })
    }

    #[inline]
    fn e(&self, x: i128) -> Complex64 {
        self.roots[x.rem_euclid(self.r as i128) as usize]
    }

    /// `sum_{alpha,beta mod r, D = 0 mod t} lambda(r) e((alpha h + beta k)/r)`.
    pub fn lambda_sum(&self, t: u64, h: i64, k: i64) -> Complex64 {
        let r = self.r as i128;
        let mut s = Complex64::new(0.0, 0.0);
        for alpha in 0..r {
            let base = alpha * h as i128;
            for beta in 0..r {
                let i = (alpha * r + beta) as usize;
                if self.a[i] != 0 && self.disc[i].is_multiple_of(t) {
                    s += self.e(base + beta * k as i128) * self.a[i] as f64;
                }
            }
        }
        s / (self.r as f64).sqrt()
    }

    /// `sum_{D = 0 mod r} e((alpha h + beta k)/r)`.
    pub fn degenerate_exp_sum(&self, h: i64, k: i64) -> Complex64 {
        let r = self.r as i128;
        let mut s = Complex64::new(0.0, 0.0);
        for alpha in 0..r {
            for beta in 0..r {
                if self.disc[(alpha * r + beta) as usize] == 0 {
                    s += self.e(alpha * h as i128 + beta * k as i128);
                }
            }
        }
        s
    }

    /// `sum_{gamma mod t} (gamma/t)^chi e((-3 gamma^2 h + 2 gamma^3 k) s/t)` where the
    /// Jacobi factor is present when `with_char`.
    fn gamma_sum(t: u64, h: i64, k: i64, s: i128, with_char: bool) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for gamma in 0..t as i128 {
            let chi = if with_char {
                jacobi(gamma, t as i128).unwrap() as f64
            } else {
                1.0
            };
            if chi != 0.0 {
                let x = (-3 * gamma * gamma * h as i128 + 2 * gamma.pow(3) * k as i128) * s;
                acc += e_frac(x, t) * chi;
            }
        }
        acc
    }

    /// Main character sum: `eps_r mu(r) r (k/r) e(-h^3 kbar^2/r)`.
    pub fn main_rhs(&self, h: i64, k: i64) -> Complex64 {
        let r = self.r;
        let mu = arith::mobius(r) as f64;
        let chi = jacobi(k as i128, r as i128).unwrap() as f64;
        let kbar = inverse_or_zero(k as i128, r as i128);
        let x = -(h as i128).pow(3) % r as i128 * (kbar * kbar % r as i128);
        gauss_epsilon(r) * e_frac(x, r) * (mu * r as f64 * chi)
    }

    /// Factorized right-hand side of the complete sum restricted to `D = 0 mod t`.
    pub fn complete_rhs(&self, t: u64, h: i64, k: i64) -> Complex64 {
        let r0 = self.r / t;
        let (r0i, ti) = (r0 as i128, t as i128);
        let mu = arith::mobius(r0) as f64;
        let j3t = jacobi(3, ti).unwrap() as f64;
        let jkt = jacobi(k as i128 * ti, r0i).unwrap() as f64;
        let kbar = inverse_or_zero(k as i128, r0i);
        let tbar = inverse_or_zero(ti, r0i);
        let r0bar = inverse_or_zero(r0i, ti);
        let phase = -(h as i128).pow(3) % r0i * (kbar * kbar % r0i) % r0i * tbar;
        let head = gauss_epsilon(r0) * e_frac(phase, r0) * (mu * r0 as f64 / (t as f64).sqrt() * j3t * jkt);
        head * Self::gamma_sum(t, h, k, r0bar, true)
    }

    /// Degenerate lambda-sum closed form `(1/sqrt r) (3/r) sum_gamma (gamma/r) e(...)`.
    pub fn degenerate_rhs(&self, h: i64, k: i64) -> Complex64 {
        let r = self.r;
        let j3 = jacobi(3, r as i128).unwrap() as f64;
        Self::gamma_sum(r, h, k, 1, true) * (j3 / (r as f64).sqrt())
    }

    pub fn degenerate_exp_rhs(&self, h: i64, k: i64) -> Complex64 {
        Self::gamma_sum(self.r, h, k, 1, false)
    }
}

/// Main character sum identity for one `(h, k)`.
pub fn verify_maincharsum(r: u64, h: i64, k: i64) -> Result<Check> {
    let s = ResidueSums::new(r, &CostGuard::default())?;
    Ok(Check::new(s.lambda_sum(1, h, k), s.main_rhs(h, k), SUM_TOLERANCE))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegenerateCheck {
    pub exp_sum: Check,
    pub lambda_sum: Check,
    pub pass: bool,
}

/// Both degenerate-sum identities (with and without the `lambda` factor).
pub fn verify_degenerate(r: u64, h: i64, k: i64) -> Result<DegenerateCheck> {
    let s = ResidueSums::new(r, &CostGuard::default())?;
    Ok(degenerate_check(&s, h, k))
}

fn degenerate_check(s: &ResidueSums, h: i64, k: i64) -> DegenerateCheck {
    let exp_sum = Check::new(s.degenerate_exp_sum(h, k), s.degenerate_exp_rhs(h, k), SUM_TOLERANCE);
    let lhs = s.lambda_sum(s.r, h, k);
    let mut lambda_sum = Check::new(lhs, s.degenerate_rhs(h, k), SUM_TOLERANCE);
    if s.r.is_multiple_of(3) && lhs.norm() >= SUM_TOLERANCE {
        lambda_sum.pass = false;
    }
    DegenerateCheck {
        exp_sum,
        lambda_sum,
        pass: exp_sum.pass && lambda_sum.pass,
    }
}

/// Complete sum restricted to `D = 0 mod t` for `t | r`.
pub fn verify_maincompletesum(r: u64, t: u64, h: i64, k: i64) -> Result<Check> {
    if t == 0 || !r.is_multiple_of(t) {
        return Err(Error::Precondition(format!("{t} does not divide {r}")));
    }
    let s = ResidueSums::new(r, &CostGuard::default())?;
    Ok(Check::new(s.lambda_sum(t, h, k), s.complete_rhs(t, h, k), SUM_TOLERANCE))
}

/// Solutions of `4 alpha^3 + 27 beta^2 = 0 mod r` are exactly the distinct pairs
/// `(-3 gamma^2, 2 gamma^3)`.
pub fn verify_parameterization(r: u64) -> Result<bool> {
    check_odd_squarefree(r)?;
    let rr = r as u128;
    let mut solutions = HashSet::new();
    for alpha in 0..rr {
        for beta in 0..rr {
            if (4 * alpha.pow(3) + 27 * beta * beta) % rr == 0 {
                solutions.insert((alpha, beta));
            }
        }
    }
    let mut image = HashSet::new();
    for gamma in 0..rr {
        let alpha = (rr * rr - 3 * (gamma * gamma % rr)) % rr;
        let beta = 2 * gamma.pow(3) % rr;
        if !image.insert((alpha, beta)) {
            return Ok(false);
        }
    }
    Ok(image == solutions)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LemmaTally {
    pub instances: u64,
    pub failures: u64,
    pub max_error: f64,
    pub first_failure: Option<String>,
}

impl LemmaTally {
    fn record(&mut self, pass: bool, error: f64, label: impl FnOnce() -> String) {
        self.instances += 1;
        if error.is_finite() {
            self.max_error = self.max_error.max(error);
        }
        if !pass {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(label());
            }
        }
    }

    pub fn pass(&self) -> bool {
        self.failures == 0 && self.instances > 0
    }
}

/// Pass matrix of the exhaustive lemma sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LemmaReport {
    pub gauss: LemmaTally,
    pub maincharsum: LemmaTally,
    pub degenerate_exp: LemmaTally,
    pub degenerate_lambda: LemmaTally,
    pub maincompletesum: LemmaTally,
    pub parameterization: LemmaTally,
}

impl LemmaReport {
    pub fn pass(&self) -> bool {
        [
            &self.gauss,
            &self.maincharsum,
            &self.degenerate_exp,
            &self.degenerate_lambda,
            &self.maincompletesum,
            &self.parameterization,
        ]
        .iter()
        .all(|t| t.pass())
    }
}

/// Moduli of the twisted-sum sweep.
pub const LEMMA_MODULI: [u64; 9] = [1, 3, 5, 7, 11, 15, 21, 33, 35];

/// Runs every identity over all `(h, k) mod r` for `r` in `moduli`, the Gauss sum
/// identity for odd squarefree `r <= gauss_rmax` and the parameterization for odd
/// squarefree `r <= param_rmax`.
pub fn run_lemma_suite(moduli: &[u64], gauss_rmax: u64, param_rmax: u64) -> Result<LemmaReport> {
    let mut rep = LemmaReport::default();
    let guard = CostGuard::default();
    for r in (1..=gauss_rmax).step_by(2).filter(|&r| arith::is_squarefree(r)) {
        for k in 0..r as i64 {
            let d = arith::gauss_sum(r, k)?;
            let c = arith::gauss_sum_closed(r, k)?;
            let err = (d - c).norm();
            rep.gauss.record(err < 1e-9, err, || format!("r={r} k={k}"));
        }
    }
    for &r in moduli {
        let s = ResidueSums::new(r, &guard)?;
        let divisors = arith::factorize(r).divisors();
        for h in 0..r as i64 {
            for k in 0..r as i64 {
                let c = Check::new(s.lambda_sum(1, h, k), s.main_rhs(h, k), SUM_TOLERANCE);
                rep.maincharsum.record(c.pass, c.error, || format!("r={r} h={h} k={k}"));
                let d = degenerate_check(&s, h, k);
                rep.degenerate_exp
                    .record(d.exp_sum.pass, d.exp_sum.error, || format!("r={r} h={h} k={k}"));
                rep.degenerate_lambda.record(d.lambda_sum.pass, d.lambda_sum.error, || {
                    format!("r={r} h={h} k={k}")
                });
                for &t in &divisors {
                    let c = Check::new(s.lambda_sum(t, h, k), s.complete_rhs(t, h, k), SUM_TOLERANCE);
                    rep.maincompletesum
                        .record(c.pass, c.error, || format!("r={r} t={t} h={h} k={k}"));
                }
            }
        }
    }
    for r in (1..=param_rmax).step_by(2).filter(|&r| arith::is_squarefree(r)) {
        let ok = verify_parameterization(r)?;
        rep.parameterization
            .record(ok, if ok { 0.0 } else { 1.0 }, || format!("r={r}"));
    }
    Ok(rep)
}

/// Euler product value with error accounting.
#[derive(Debug, Clone, Serialize)]
pub struct MainConstant {
    pub value: f64,
    pub pmax: u64,
    pub kmax: u32,
    /// Rigorous bound on `|c_S - value|` from primes above `pmax` and exponents
    /// above `kmax` (Deligne's bound on each `a(p^j)`).
    pub tail_bound: f64,
    /// Heuristic size of the omitted primes: a power law `C p^-e` fitted to the
    /// computed local deviations and summed beyond `pmax`.
    pub tail_estimate: f64,
    /// `(p, [sum_{alpha,beta} a(p^{2k}) for k = 1..=kmax], local factor)`.
    pub local: Vec<(u64, Vec<i128>, f64)>,
}

/// Sums `S_k = sum_{alpha,beta mod p} a_{alpha,beta}(p^{2k})`, `k = 1..=kmax`.
pub fn even_power_sums(p: u64, kmax: u32, guard: &CostGuard) -> Result<Vec<i128>> {
    let t = PrimeTable::new(p, guard)?;
    guard.check(&format!("even power sums at p = {p}"), p * p * kmax as u64)?;
    let mut s = vec![0i128; kmax as usize];
    for i in 0..t.ap.len() {
        let ap = t.ap[i] as i128;
        let pp = p as i128;
        // walk the recurrence once per pair
        let (mut prev, mut cur) = (0i128, 1i128);
        for j in 1..=2 * kmax {
            let next = if t.bad[i] {
                cur.checked_mul(ap)
            } else {
                ap.checked_mul(cur)
                    .zip(pp.checked_mul(prev))
                    .and_then(|(x, y)| x.checked_sub(y))
            }
            .ok_or_else(|| Error::Precondition(format!("a(p^{j}) overflows at p = {p}")))?;
            prev = cur;
            cur = next;
            if j % 2 == 0 {
                s[(j / 2 - 1) as usize] += cur;
            }
        }
    }
    Ok(s)
}

fn deligne_tail(x: f64, from_k: u32) -> f64 {
    // sum_{k >= from_k} (2k+1) x^k
    let total = (1.0 + x) / ((1.0 - x) * (1.0 - x));
    let head: f64 = (0..from_k).map(|k| (2 * k + 1) as f64 * x.powi(k as i32)).sum();
    (total - head).max(0.0)
}

/// Fits `log|dev| = log C - e log p` by least squares and returns
/// `C x0^(1-e) / ((e-1) log x0)`, the integral tail over primes beyond `x0`.
fn power_law_tail(pts: &[(f64, f64)], x0: f64) -> f64 {
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let e = -slope;
    let logc = my - slope * mx;
    // envelope: shift the intercept so every point lies under the fitted line
    let shift = pts
        .iter()
        .map(|p| p.1 - (logc + slope * p.0))
        .fold(0.0, f64::max);
    if e <= 1.0 {
        return f64::INFINITY;
    }
    (logc + shift).exp() * x0.powf(1.0 - e) / ((e - 1.0) * x0.ln())
}

/// `c_S = prod_p (1 + (1 - p^-5)^-1 sum_{k=1}^{kmax} Q(p^{2k}) / p^{k+2})` over odd `p <= pmax`.
pub fn c_s(pmax: u64, kmax: u32, guard: &CostGuard) -> Result<MainConstant> {
    if pmax < 3 || kmax < 1 {
        return Err(Error::Precondition("need pmax >= 3 and kmax >= 1".into()));
    }
    let mut log_value = 0.0;
    let mut local = Vec::new();
    let mut trunc_k = 0.0;
    let mut fit_pts: Vec<(f64, f64)> = Vec::new();
    for p in arith::primes_up_to(pmax).into_iter().filter(|&p| p > 2) {
        let sums = even_power_sums(p, kmax, guard)?;
        let pf = p as f64;
        let inner: f64 = sums
            .iter()
            .enumerate()
            .map(|(i, &s)| s as f64 / pf.powi(2 * (i as i32 + 1) + 2))
            .sum();
        let factor = 1.0 + inner / (1.0 - pf.powi(-5));
        log_value += factor.ln();
        trunc_k += deligne_tail(1.0 / pf, kmax + 1) / (1.0 - pf.powi(-5));
        if p > 3 && factor != 1.0 {
            fit_pts.push((pf.ln(), (factor - 1.0).abs().ln()));
        }
        local.push((p, sums, factor));
    }
    let value = log_value.exp();
    // Primes above pmax: |S_1| = 0 and |S_k| <= (2k+1) p^{k+2}, so the local
    // deviation is at most sum_{k>=2} (2k+1)/p^k <= c/p^2 with c evaluated at the
    // first omitted odd integer.
    let n0 = (pmax + 1) | 1;
    let x0 = 1.0 / n0 as f64;
    let c = deligne_tail(x0, 2) / (x0 * x0) / (1.0 - x0.powi(5));
    let odd_sq_tail = 1.0 / (n0 as f64).powi(2) + 1.0 / (2.0 * n0 as f64);
    let dev = c * odd_sq_tail + trunc_k;
    let tail_bound = value * ((2.0 * dev).exp() - 1.0);
    let tail_estimate = value * power_law_tail(&fit_pts, n0 as f64);
    Ok(MainConstant {
        value,
        pmax,
        kmax,
        tail_bound,
        tail_estimate,
        local,
    })
}

/// Parameters of the Poisson identity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoissonParams {
    pub r: u64,
    pub c: u64,
    pub g: u64,
    pub a_len: f64,
    pub b_len: f64,
    pub weight: WeightKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct PoissonReport {
    pub params: PoissonParams,
    pub period: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub relative_error: f64,
    pub truncation: (i64, i64),
    pub converged: bool,
    /// The `h = k = 0` term of the dual sum.
    pub zero_frequency: f64,
    /// Closed-form main term `(1/2) A B w^(0,0) [r_1 = 1] Q_c(r) / (c_0 r*^2 g^5)`.
    pub main_term: f64,
    /// `|lhs - main_term| / (A B w^(0,0))`.
    pub main_term_deviation: f64,
    /// `1/A + 1/B`.
    pub band: f64,
}

/// Compares the direct weighted sum of `lambda_{ag^2, bg^3}(r)` over `a`, odd `b` with
/// `g^6 D(a, b) = 0 mod c` against its Poisson dual.
pub fn poisson_identity_check(params: PoissonParams, guard: &CostGuard) -> Result<PoissonReport> {
    let PoissonParams { r, c, g, a_len, b_len, weight } = params;
    if r == 0 || r % 2 == 0 {
        return Err(Error::Precondition(format!("r = {r} must be odd (lambda(2) = 0)")));
    }
    let cf = check_odd_squarefree(c)?;
    if g == 0 || g % 2 == 0 {
        return Err(Error::Precondition(format!("g = {g} must be odd")));
    }
    let rf = arith::factorize(r);
    let rstar = rf.radical();
    if rstar > 15 {
        return Err(Error::Precondition(format!("r* = {rstar} exceeds 15")));
    }
    let tables = ModulusTables::new(r, guard)?;
    let q = arith::lcm(rstar, c);
    guard.check("Poisson dual coefficients", 4 * q.pow(4))?;
    let w = Weight::new(weight);
    let sqrt_r = (r as f64).sqrt();
    let (g2, g3) = ((g * g) as i128, (g * g * g) as i128);
    let g6 = g2 * g2 * g2;
    let cond = |a: i128, b: i128| -> bool {
        let d = 4 * a.pow(3) + 27 * b * b;
        (g6 % c as i128 * (d.rem_euclid(c as i128))) % c as i128 == 0
    };
    let lam = |a: i128, b: i128| -> f64 { tables.coeff(a * g2, b * g3) as f64 / sqrt_r };

    // Direct side.
    let a_lo = (a_len / g2 as f64).floor() as i128;
    let a_hi = (2.0 * a_len / g2 as f64).ceil() as i128;
    let b_lo = (b_len / g3 as f64).floor() as i128;
    let b_hi = (2.0 * b_len / g3 as f64).ceil() as i128;
    let mut lhs = 0.0;
    for a in a_lo.max(1)..=a_hi {
        let wa = w.eval((a * g2) as f64 / a_len);
        if wa == 0.0 {
            continue;
        }
        for b in (b_lo.max(1)..=b_hi).filter(|b| b % 2 == 1) {
            let wb = w.eval((b * g3) as f64 / b_len);
            if wb != 0.0 && cond(a, b) {
                lhs += lam(a, b) * wa * wb;
            }
        }
    }

    // Dual coefficients C(h, k), periodic in h mod q and k mod 2q.
    let qi = q as i128;
    let two_q = 2 * q;
    let mut period = vec![0.0f64; (q * two_q) as usize];
    for alpha in 0..qi {
        for beta in (0..2 * qi).filter(|b| b % 2 == 1) {
            if cond(alpha, beta) {
                period[(alpha * 2 * qi + beta) as usize] = lam(alpha, beta);
            }
        }
    }
    let roots = roots_of_unity(two_q);
    let mut dual = vec![Complex64::new(0.0, 0.0); (q * two_q) as usize];
    for h in 0..qi {
        for k in 0..2 * qi {
            let mut s = Complex64::new(0.0, 0.0);
            for alpha in 0..qi {
                for beta in 0..2 * qi {
                    let v = period[(alpha * 2 * qi + beta) as usize];
                    if v != 0.0 {
                        s += roots[((2 * alpha * h + beta * k) % (2 * qi)) as usize] * v;
                    }
                }
            }
            dual[(h * 2 * qi + k) as usize] = s;
        }
    }
    let scale = a_len * b_len / (2.0 * (g as f64).powi(5) * (q * q) as f64);
    let fa = a_len / (g2 as f64 * q as f64);
    let fb = b_len / (2.0 * g3 as f64 * q as f64);
    let partial = |hmax: i64, kmax: i64| -> f64 {
        let hat_b: Vec<Complex64> = (-kmax..=kmax).map(|k| w.fourier(k as f64 * fb)).collect();
        let mut s = Complex64::new(0.0, 0.0);
        for h in -hmax..=hmax {
            let ha = w.fourier(h as f64 * fa);
            let hr = (h as i128).rem_euclid(qi);
            for (j, k) in (-kmax..=kmax).enumerate() {
                let kr = (k as i128).rem_euclid(2 * qi);
                s += dual[(hr * 2 * qi + kr) as usize] * ha * hat_b[j];
            }
        }
        s.re * scale
    };
    // Grow the truncation until three successive values agree to 1e-7.
    let step = |n: i64| -> (i64, i64) {
        let h = ((n as f64) * (1.0 / fa).max(0.25)).ceil() as i64;
        let k = ((n as f64) * (1.0 / fb).max(0.25)).ceil() as i64;
        (h.max(1), k.max(1))
    };
    let mut history: Vec<f64> = Vec::new();
    let mut n = 4;
    let mut converged = false;
    let mut trunc = step(n);
    let mut rhs = partial(trunc.0, trunc.1);
    history.push(rhs);
    while n <= 256 {
        n += 4;
        trunc = step(n);
        rhs = partial(trunc.0, trunc.1);
        history.push(rhs);
        let m = history.len();
        if m >= 3 {
            let tol = 1e-7 * (1.0 + rhs.abs());
            if (history[m - 1] - history[m - 2]).abs() < tol && (history[m - 2] - history[m - 3]).abs() < tol {
                converged = true;
                break;
            }
        }
    }

    let zero_frequency = dual[0].re * scale * w.hat00();
    let (r1, _) = rf.split_exact();
    let c0 = cf.primes().filter(|p| r % p != 0).product::<u64>();
    let main_term = if r1 == 1 {
        let qc = q_t(r, c, guard)?;
        0.5 * a_len * b_len * w.hat00() * qc.float_value
            / (c0 as f64 * (rstar * rstar) as f64 * (g as f64).powi(5))
    } else {
        0.0
    };
    let norm = a_len * b_len * w.hat00();
    Ok(PoissonReport {
        params,
        period: q,
        lhs,
        rhs,
        relative_error: (lhs - rhs).abs() / (1.0 + lhs.abs()),
        truncation: trunc,
        converged,
        zero_frequency,
        main_term,
        main_term_deviation: (lhs - main_term).abs() / norm,
        band: 1.0 / a_len + 1.0 / b_len,
    })
}
