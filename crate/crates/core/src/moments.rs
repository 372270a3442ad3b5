//! Weighted family sweeps over `S`.
//!
//! A sweep evaluates a list of [`Functional`]s, each a product of partial sums
//! `L_T` and mollifiers `M(E)`, on every curve of a [`FamilyWindow`] and returns
//! their weighted averages. For each value of `a` the traces `a(p)` for all
//! `b mod p` come from one cyclic correlation per prime, so a curve costs one
//! multiplicative assembly of its coefficient table.

use std::ops::RangeInclusive;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::arith::legendre_table;
use crate::curves::{
    in_family_s, mollifier_value, required_nmax, trace_mod_p, CurveParams, CutoffKernel,
    DivisorPlan, MollifierSpec,
};
use crate::weight::{Weight, WeightKind};
use crate::{pairwise_sum, Error, KahanSum, Result};

/// `X`, the box lengths `A = X^(1/3)`, `B = X^(1/2)` and the weight profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyWindow {
    pub x: f64,
    pub a_len: f64,
    pub b_len: f64,
    pub weight: WeightKind,
}

impl FamilyWindow {
    pub fn new(x: f64, weight: WeightKind) -> Result<Self> {
        if !(x >= 8.0) || !x.is_finite() {
            return Err(Error::Domain(format!("X = {x} must be a finite number >= 8")));
        }
        Ok(Self {
            x,
            a_len: x.cbrt(),
            b_len: x.sqrt(),
            weight,
        })
    }

    pub fn a_range(&self) -> RangeInclusive<i64> {
        (self.a_len.ceil() as i64)..=((2.0 * self.a_len).floor() as i64)
    }

    pub fn b_range(&self) -> RangeInclusive<i64> {
        (self.b_len.ceil() as i64)..=((2.0 * self.b_len).floor() as i64)
    }

    /// `w(a/A, b/B)`.
    pub fn weight_at(&self, profile: &Weight, a: i64, b: i64) -> f64 {
        profile.eval(a as f64 / self.a_len) * profile.eval(b as f64 / self.b_len)
    }

    /// `(1/2) zeta(5)^-1 (1 - 2^-5)^-1 A B w^(0,0)`.
    pub fn predicted_count(&self) -> f64 {
        let hat = Weight::new(self.weight).hat00();
        0.5 / zeta5() / (1.0 - 1.0 / 32.0) * self.a_len * self.b_len * hat
    }
}

/// `zeta(5)` by direct summation with an Euler-Maclaurin tail.
pub fn zeta5() -> f64 {
    let n = 1000u32;
    let mut s = KahanSum::new();
    for k in (1..=n).rev() {
        s.add((k as f64).powi(-5));
    }
    let nf = n as f64;
    s.add(nf.powi(-4) / 4.0 - nf.powi(-5) / 2.0 + 5.0 * nf.powi(-6) / 12.0);
    s.value()
}

/// Every `(a, b)` in `S` with positive weight, `a`-major.
pub fn family_iter(w: &FamilyWindow) -> impl Iterator<Item = (CurveParams, f64)> + '_ {
    let profile = Weight::new(w.weight);
    w.a_range().flat_map(move |a| {
        let profile = profile.clone();
        w.b_range().filter_map(move |b| {
            if b % 2 == 0 {
                return None;
            }
            let wt = w.weight_at(&profile, a, b);
            if wt <= 0.0 {
                return None;
            }
            let c = CurveParams::new(a, b).ok()?;
            in_family_s(&c).then_some((c, wt))
        })
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CountReport {
    pub window: FamilyWindow,
    pub curves: usize,
    /// `|S_X| = sum w_X(a, b)`.
    pub weight_sum: f64,
    pub predicted: f64,
    pub ratio: f64,
    /// `|ratio - 1|`.
    pub deviation: f64,
    pub runtime_s: f64,
}

pub fn family_count(w: &FamilyWindow) -> CountReport {
    let t0 = Instant::now();
    let weights: Vec<f64> = family_iter(w).map(|(_, wt)| wt).collect();
    let weight_sum = pairwise_sum(&weights);
    let predicted = w.predicted_count();
    let ratio = weight_sum / predicted;
    CountReport {
        window: *w,
        curves: weights.len(),
        weight_sum,
        predicted,
        ratio,
        deviation: (ratio - 1.0).abs(),
        runtime_s: t0.elapsed().as_secs_f64(),
    }
}

/// `prod L_T * prod M_j(E)` over the listed lengths and mollifier indices; the
/// empty product is the constant 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Functional {
    pub l_lengths: Vec<f64>,
    pub mollifiers: Vec<usize>,
}

impl Functional {
    pub fn new(l_lengths: Vec<f64>, mollifiers: Vec<usize>) -> Self {
        Self {
            l_lengths,
            mollifiers,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepOptions {
    pub kernel: CutoffKernel,
    /// Lower bound on the coefficient truncation of every `L_T`.
    pub min_truncation: usize,
    /// Bytes allowed for per-prime tables across all workers.
    pub memory_budget: usize,
    /// Constant multiplying the family weight.
    pub weight_scale: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            kernel: CutoffKernel::Exponential,
            min_truncation: 0,
            memory_budget: 2 << 30,
            weight_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub curves: usize,
    pub weight_sum: f64,
    /// `sum w_X f(E)` per functional.
    pub sums: Vec<f64>,
    /// `sums / weight_sum`.
    pub averages: Vec<f64>,
    /// Coefficient range used by each functional's `L` factors (0 if none).
    pub truncations: Vec<usize>,
    /// Residues whose correlation row fell back to direct evaluation.
    pub fallback_rows: usize,
    pub runtime_s: f64,
}

/// Primes below this get their rows by direct evaluation.
const FFT_MIN_PRIME: u32 = 64;

struct PrimeRow {
    p: u32,
    offset: usize,
    chi: Vec<i8>,
    fft: Option<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>, Vec<Complex64>)>,
}

struct PerA {
    curves: usize,
    weight: f64,
    sums: Vec<f64>,
    fallback: usize,
}

/// Weighted averages of `functionals` over the family.
pub fn sweep(
    w: &FamilyWindow,
    mollifiers: &[MollifierSpec],
    functionals: &[Functional],
    opts: &SweepOptions,
) -> Result<SweepResult> {
    let t0 = Instant::now();
    if !(opts.weight_scale > 0.0) {
        return Err(Error::Domain("weight scale must be positive".into()));
    }
    for f in functionals {
        if let Some(&j) = f.mollifiers.iter().find(|&&j| j >= mollifiers.len()) {
            return Err(Error::Precondition(format!("mollifier index {j} out of range")));
        }
        if let Some(t) = f.l_lengths.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::Domain(format!("L length {t} must be positive")));
        }
    }
    // distinct L lengths, by bit pattern
    let mut lengths: Vec<f64> = Vec::new();
    for f in functionals {
        for &t in &f.l_lengths {
            if !lengths.iter().any(|u| u.to_bits() == t.to_bits()) {
                lengths.push(t);
            }
        }
    }
    let l_index = |t: f64| lengths.iter().position(|u| u.to_bits() == t.to_bits()).unwrap();
    let nmax: Vec<usize> = lengths
        .iter()
        .map(|&t| required_nmax(t).max(opts.min_truncation))
        .collect();
    let moll_w: Vec<Vec<f64>> = mollifiers.iter().map(|m| m.weights()).collect();
    let top = nmax
        .iter()
        .copied()
        .chain(moll_w.iter().map(|v| v.len().saturating_sub(1)))
        .max()
        .unwrap_or(1)
        .max(1);

    let plan = DivisorPlan::new(top);
    let primes: Vec<u32> = plan.primes().iter().copied().filter(|&p| p > 2).collect();
    let row_len: usize = primes.iter().map(|&p| p as usize).sum();
    let workers = rayon::current_num_threads().max(1);
    let est = top * 24 + row_len * (1 + 16) + workers * (row_len * 8 + top * 16);
    if est > opts.memory_budget {
        return Err(Error::Memory(format!(
            "sweep needs about {est} bytes of tables, budget is {}",
            opts.memory_budget
        )));
    }

    let mut planner = FftPlanner::<f64>::new();
    let mut offset = 0;
    let mut rows_meta = Vec::with_capacity(primes.len());
    let mut prime_slot = vec![usize::MAX; top + 1];
    for (i, &p) in primes.iter().enumerate() {
        let chi = legendre_table(p as u64);
        let fft = (p >= FFT_MIN_PRIME).then(|| {
            let fwd = planner.plan_fft_forward(p as usize);
            let inv = planner.plan_fft_inverse(p as usize);
            let mut hat: Vec<Complex64> =
                chi.iter().map(|&c| Complex64::new(c as f64, 0.0)).collect();
            fwd.process(&mut hat);
            (fwd, inv, hat)
        });
        prime_slot[p as usize] = i;
        rows_meta.push(PrimeRow {
            p,
            offset,
            chi,
            fft,
        });
        offset += p as usize;
    }

    let kernels: Vec<Vec<f64>> = lengths
        .iter()
        .zip(&nmax)
        .map(|(&t, &n)| {
            let s = std::f64::consts::TAU / t;
            (0..=n)
                .map(|k| {
                    if k == 0 {
                        0.0
                    } else {
                        opts.kernel.y(s * k as f64) / k as f64
                    }
                })
                .collect()
        })
        .collect();
    let f_l: Vec<Vec<usize>> = functionals
        .iter()
        .map(|f| f.l_lengths.iter().map(|&t| l_index(t)).collect())
        .collect();
    let truncations: Vec<usize> = f_l
        .iter()
        .map(|ix| ix.iter().map(|&i| nmax[i]).max().unwrap_or(0))
        .collect();

    let profile = Weight::new(w.weight);
    let a_vals: Vec<i64> = w.a_range().collect();
    let per_a: Vec<PerA> = a_vals
        .par_iter()
        .map(|&a| {
            let members: Vec<(i64, f64)> = w
                .b_range()
                .filter(|b| b % 2 != 0)
                .filter_map(|b| {
                    let wt = opts.weight_scale * w.weight_at(&profile, a, b);
                    if wt <= 0.0 {
                        return None;
                    }
                    let c = CurveParams::new(a, b).ok()?;
                    in_family_s(&c).then_some((b, wt))
                })
                .collect();
            let mut out = PerA {
                curves: members.len(),
                weight: 0.0,
                sums: vec![0.0; functionals.len()],
                fallback: 0,
            };
            if members.is_empty() {
                return out;
            }
            let mut rows = vec![0i32; row_len];
            out.fallback = fill_rows(a, &rows_meta, &mut rows);

            let mut table = vec![0i64; top + 1];
            let mut scratch = Vec::new();
            let mut l_vals = vec![0.0; lengths.len()];
            let mut m_vals = vec![0.0; mollifiers.len()];
            let mut acc = vec![KahanSum::new(); functionals.len()];
            let mut wsum = KahanSum::new();
            for &(b, wt) in &members {
                let d = 4 * (a as i128).pow(3) + 27 * (b as i128).pow(2);
                let bad = |p: u32| p == 2 || d % p as i128 == 0;
                plan.assemble(
                    &mut table,
                    |p| {
                        if p == 2 {
                            return 0;
                        }
                        let r = &rows_meta[prime_slot[p as usize]];
                        rows[r.offset + b.rem_euclid(p as i64) as usize] as i64
                    },
                    bad,
                );
                for (i, k) in kernels.iter().enumerate() {
                    let mut s = KahanSum::new();
                    for n in 1..k.len() {
                        let an = table[n];
                        if an != 0 {
                            s.add(an as f64 * k[n]);
                        }
                    }
                    l_vals[i] = s.value();
                }
                for (j, mw) in moll_w.iter().enumerate() {
                    m_vals[j] = mollifier_value(&table, &plan, mw, bad, &mut scratch);
                }
                for (fi, f) in functionals.iter().enumerate() {
                    let mut v = wt;
                    for &i in &f_l[fi] {
                        v *= l_vals[i];
                    }
                    for &j in &f.mollifiers {
                        v *= m_vals[j];
                    }
                    acc[fi].add(v);
                }
                wsum.add(wt);
            }
            out.weight = wsum.value();
            out.sums = acc.iter().map(|k| k.value()).collect();
            out
        })
        .collect();

    let curves: usize = per_a.iter().map(|r| r.curves).sum();
    if curves == 0 {
        return Err(Error::Precondition(format!("empty family at X = {}", w.x)));
    }
    let weight_sum = pairwise_sum(&per_a.iter().map(|r| r.weight).collect::<Vec<_>>());
    let sums: Vec<f64> = (0..functionals.len())
        .map(|fi| pairwise_sum(&per_a.iter().map(|r| r.sums[fi]).collect::<Vec<_>>()))
        .collect();
    let averages = sums.iter().map(|s| s / weight_sum).collect();
    Ok(SweepResult {
        curves,
        weight_sum,
        sums,
        averages,
        truncations,
        fallback_rows: per_a.iter().map(|r| r.fallback).sum(),
        runtime_s: t0.elapsed().as_secs_f64(),
    })
}

/// Writes `a(p)` of `y^2 = x^3 + a x + beta` for every prime and residue `beta`.
/// Returns the number of rows evaluated directly after a failed rounding check.
fn fill_rows(a: i64, meta: &[PrimeRow], rows: &mut [i32]) -> usize {
    let mut fallback = 0;
    let mut buf: Vec<Complex64> = Vec::new();
    let mut scratch: Vec<Complex64> = Vec::new();
    for r in meta {
        let p = r.p as u64;
        let alpha = a.rem_euclid(p as i64) as u64;
        let row = &mut rows[r.offset..r.offset + p as usize];
        let Some((fwd, inv, hat)) = &r.fft else {
            for (beta, v) in row.iter_mut().enumerate() {
                *v = trace_mod_p(alpha, beta as u64, p, &r.chi) as i32;
            }
            continue;
        };
        // counts of v = x^3 + alpha x, then row[beta] = -sum_v cnt[v] chi(v + beta)
        buf.clear();
        buf.resize(p as usize, Complex64::new(0.0, 0.0));
        let (mut f, mut d1, mut d2) = (0u64, (1 + alpha) % p, 6 % p);
        for _ in 0..p {
            buf[f as usize].re += 1.0;
            f = (f + d1) % p;
            d1 = (d1 + d2) % p;
            d2 = (d2 + 6) % p;
        }
        let need = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        if scratch.len() < need {
            scratch.resize(need, Complex64::new(0.0, 0.0));
        }
        fwd.process_with_scratch(&mut buf, &mut scratch);
        for (z, h) in buf.iter_mut().zip(hat) {
            *z = z.conj() * h;
        }
        inv.process_with_scratch(&mut buf, &mut scratch);
        let pf = p as f64;
        let mut ok = true;
        for (v, z) in row.iter_mut().zip(&buf) {
            let x = z.re / pf;
            let rx = x.round();
            if (x - rx).abs() > 0.25 {
                ok = false;
                break;
            }
            *v = -(rx as i32);
        }
        if !ok {
            fallback += 1;
            for (beta, v) in row.iter_mut().enumerate() {
                *v = trace_mod_p(alpha, beta as u64, p, &r.chi) as i32;
            }
        }
    }
    fallback
}

/// Upper limit on `nu` and `nu + kappa` for the first moments.
pub const FIRST_MOMENT_LIMIT: f64 = 7.0 / 9.0;
/// Upper limit on `alpha`, `beta` and `alpha + beta` for the square moments.
pub const SQUARE_MOMENT_LIMIT: f64 = 5.0 / 18.0;
/// Upper limit on `alpha1 + alpha2 + beta1 + beta2` for the cross moment.
pub const CROSS_MOMENT_LIMIT: f64 = 5.0 / 9.0;

fn check_range(ok: bool, force: bool, what: String) -> Result<()> {
    if ok || force {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{what} (use force to override)")))
    }
}

/// One evaluated point of an experiment.
#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    /// Exponent (or exponent scale) defining the point.
    pub param: f64,
    /// `[V1, V2]` or `[U]` lengths of the `L` factors.
    pub l_lengths: Vec<f64>,
    /// Mollifier lengths.
    pub m_lengths: Vec<f64>,
    pub value: f64,
    pub predicted: Option<f64>,
    pub ratio: Option<f64>,
    pub truncation: usize,
}

/// Which logarithm a growth law is stated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LogProxy {
    /// `I1(V) = -log(1 - e^(-4 pi/V))`, the kernel-smoothed `log V + O(1)`.
    KernelLogV,
    /// `log M` of the sharp mollifier cutoff.
    LogM,
    /// `log X^s` along the exponent ray; used for bounded laws.
    LogScale,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthFit {
    pub expected_exponent: f64,
    pub proxy: LogProxy,
    /// Degenerate limit subtracted before fitting.
    pub baseline: f64,
    pub logs: Vec<f64>,
    pub fit: crate::asymptotics::LogPowerFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub experiment: String,
    pub window: FamilyWindow,
    pub curves: usize,
    /// `|S_X|`.
    pub weight_sum: f64,
    pub grid: Vec<GridPoint>,
    pub target: Option<f64>,
    pub fit: Option<GrowthFit>,
    pub runtime_s: f64,
}

impl MomentReport {
    fn from_sweep(experiment: &str, w: &FamilyWindow, r: &SweepResult, grid: Vec<GridPoint>) -> Self {
        Self {
            experiment: experiment.into(),
            window: *w,
            curves: r.curves,
            weight_sum: r.weight_sum,
            grid,
            target: None,
            fit: None,
            runtime_s: r.runtime_s,
        }
    }
}

/// Weighted average of `L_U`, `U = X^nu`, against `c_S`.
pub fn first_moment_lu(
    w: &FamilyWindow,
    nu: f64,
    c_s: f64,
    opts: &SweepOptions,
    force: bool,
) -> Result<MomentReport> {
    check_range(
        nu > 0.0 && nu < FIRST_MOMENT_LIMIT,
        force,
        format!("nu = {nu} outside (0, 7/9)"),
    )?;
    let u = w.x.powf(nu);
    let r = sweep(w, &[], &[Functional::new(vec![u], vec![])], opts)?;
    let v = r.averages[0];
    let grid = vec![GridPoint {
        param: nu,
        l_lengths: vec![u],
        m_lengths: vec![],
        value: v,
        predicted: Some(c_s),
        ratio: Some(v / c_s),
        truncation: r.truncations[0],
    }];
    let mut rep = MomentReport::from_sweep("first_moment", w, &r, grid);
    rep.target = Some(c_s);
    Ok(rep)
}

/// Weighted average of `L_U M(E)` with `U = X^nu`, `M = X^kappa`; target 1/2.
pub fn mollified_first_moment(
    w: &FamilyWindow,
    nu: f64,
    kappa: f64,
    poly: &[f64],
    opts: &SweepOptions,
    force: bool,
) -> Result<MomentReport> {
    check_range(
        nu > 0.0 && kappa > 0.0 && kappa < FIRST_MOMENT_LIMIT - nu,
        force,
        format!("need nu > 0 and 0 < kappa < 7/9 - nu, got nu = {nu}, kappa = {kappa}"),
    )?;
    let u = w.x.powf(nu);
    let m = MollifierSpec::new(w.x.powf(kappa), poly.to_vec())?;
    let ml = m.length;
    let r = sweep(w, &[m], &[Functional::new(vec![u], vec![0])], opts)?;
    let v = r.averages[0];
    let grid = vec![GridPoint {
        param: kappa,
        l_lengths: vec![u],
        m_lengths: vec![ml],
        value: v,
        predicted: Some(0.5),
        ratio: Some(v / 0.5),
        truncation: r.truncations[0],
    }];
    let mut rep = MomentReport::from_sweep("mollified_first_moment", w, &r, grid);
    rep.target = Some(0.5);
    Ok(rep)
}

/// Exponents of `L_V1 L_V2 M_1(E) M_2(E)`; a zero `beta` drops that mollifier,
/// a zero `alpha` drops that partial sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentRay {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl ExponentRay {
    fn scaled(&self, s: f64) -> Self {
        Self {
            alpha1: self.alpha1 * s,
            alpha2: self.alpha2 * s,
            beta1: self.beta1 * s,
            beta2: self.beta2 * s,
        }
    }

    fn law(&self) -> (f64, LogProxy, f64) {
        let has_l = self.alpha1 > 0.0 || self.alpha2 > 0.0;
        let has_m = self.beta1 > 0.0 || self.beta2 > 0.0;
        match (has_l, has_m) {
            (true, _) if self.alpha1 != self.alpha2 => (0.0, LogProxy::LogScale, 0.0),
            (true, true) => (3.0, LogProxy::LogM, 0.0),
            (true, false) => (1.0, LogProxy::KernelLogV, 0.0),
            (false, _) => (3.0, LogProxy::LogM, 1.0),
        }
    }
}

/// Evaluates `L_V1 L_V2 M_1 M_2` at `X^(s * ray)` for each scale `s` and fits
/// the growth of the excess over the degenerate limit against the logarithm
/// the corresponding law is stated in.
pub fn growth_experiment(
    name: &str,
    w: &FamilyWindow,
    ray: ExponentRay,
    scales: &[f64],
    poly: &[f64],
    opts: &SweepOptions,
) -> Result<MomentReport> {
    if scales.is_empty() {
        return Err(Error::Precondition("empty grid".into()));
    }
    let mut specs = Vec::new();
    let mut functionals = Vec::new();
    let mut pts = Vec::new();
    for &s in scales {
        let e = ray.scaled(s);
        let ls: Vec<f64> = [e.alpha1, e.alpha2]
            .iter()
            .filter(|a| **a > 0.0)
            .map(|a| w.x.powf(*a))
            .collect();
        let mut mi = Vec::new();
        let mut ml = Vec::new();
        for b in [e.beta1, e.beta2] {
            if b > 0.0 {
                let m = MollifierSpec::new(w.x.powf(b), poly.to_vec())?;
                ml.push(m.length);
                specs.push(m);
                mi.push(specs.len() - 1);
            }
        }
        functionals.push(Functional::new(ls.clone(), mi));
        pts.push((s, ls, ml));
    }
    let r = sweep(w, &specs, &functionals, opts)?;
    let grid: Vec<GridPoint> = pts
        .into_iter()
        .enumerate()
        .map(|(i, (s, ls, ml))| GridPoint {
            param: s,
            l_lengths: ls,
            m_lengths: ml,
            value: r.averages[i],
            predicted: None,
            ratio: None,
            truncation: r.truncations[i],
        })
        .collect();
    let (expected, proxy, baseline) = ray.law();
    let logs: Vec<f64> = grid
        .iter()
        .map(|g| match proxy {
            LogProxy::KernelLogV => {
                let v = g.l_lengths.iter().copied().fold(f64::INFINITY, f64::min);
                crate::asymptotics::i1_oracle(v).unwrap_or(f64::NAN)
            }
            LogProxy::LogM => g
                .m_lengths
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
                .ln(),
            LogProxy::LogScale => g.param * w.x.ln(),
        })
        .collect();
    let excess: Vec<f64> = grid.iter().map(|g| g.value - baseline).collect();
    let fit = crate::asymptotics::log_power_fit(&logs, &excess);
    let mut rep = MomentReport::from_sweep(name, w, &r, grid);
    rep.fit = Some(GrowthFit {
        expected_exponent: expected,
        proxy,
        baseline,
        logs,
        fit,
    });
    Ok(rep)
}

/// `L_V^2` over the `alpha` grid.
pub fn second_moment_lv(
    w: &FamilyWindow,
    alphas: &[f64],
    opts: &SweepOptions,
    force: bool,
) -> Result<MomentReport> {
    for &a in alphas {
        check_range(
            a > 0.0 && a < SQUARE_MOMENT_LIMIT,
            force,
            format!("alpha = {a} outside (0, 5/18)"),
        )?;
    }
    let ray = ExponentRay {
        alpha1: 1.0,
        alpha2: 1.0,
        beta1: 0.0,
        beta2: 0.0,
    };
    growth_experiment("second_moment", w, ray, alphas, &[0.0, 1.0], opts)
}

/// `int_0^1 F(x)^2 dx` with `F = x (x P)' = sum (j+1) c_j x^(j+1)`.
pub fn shape_constant_derivative(poly: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, ci) in poly.iter().enumerate() {
        for (j, cj) in poly.iter().enumerate() {
            s += ((i + 1) * (j + 1)) as f64 * ci * cj / (i + j + 3) as f64;
        }
    }
    s
}

/// `int_0^1 G(x)^2 dx` with `G(x) = int_0^x P = sum c_j x^(j+1)/(j+1)`, the shape
/// constant obtained when the factorials of the two-variable integral sit in
/// the denominator.
pub fn shape_constant_integral(poly: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, ci) in poly.iter().enumerate() {
        for (j, cj) in poly.iter().enumerate() {
            s += ci * cj / ((i + 1) * (j + 1) * (i + j + 3)) as f64;
        }
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct MollifierSquareReport {
    pub report: MomentReport,
    /// `int_0^1 (x^2 P' + x P)^2`.
    pub shape_derivative: f64,
    /// `int_0^1 (int_0^x P)^2`.
    pub shape_integral: f64,
}

/// `M(E)^2` over the `beta` grid.
pub fn mollifier_second_moment(
    w: &FamilyWindow,
    betas: &[f64],
    poly: &[f64],
    opts: &SweepOptions,
    force: bool,
) -> Result<MollifierSquareReport> {
    for &b in betas {
        check_range(
            b > 0.0 && b < SQUARE_MOMENT_LIMIT,
            force,
            format!("beta = {b} outside (0, 5/18)"),
        )?;
    }
    let ray = ExponentRay {
        alpha1: 0.0,
        alpha2: 0.0,
        beta1: 1.0,
        beta2: 1.0,
    };
    Ok(MollifierSquareReport {
        report: growth_experiment("mollifier_second_moment", w, ray, betas, poly, opts)?,
        shape_derivative: shape_constant_derivative(poly),
        shape_integral: shape_constant_integral(poly),
    })
}

/// `L_V1 L_V2 M_1(E) M_2(E)` along `scales * ray`.
pub fn cross_moment(
    w: &FamilyWindow,
    ray: ExponentRay,
    scales: &[f64],
    poly: &[f64],
    opts: &SweepOptions,
    force: bool,
) -> Result<MomentReport> {
    if ray.alpha1 <= 0.0 || ray.alpha2 <= 0.0 || ray.beta1 < 0.0 || ray.beta2 < 0.0 {
        return Err(Error::Domain("need alpha1, alpha2 > 0 and beta1, beta2 >= 0".into()));
    }
    for &s in scales {
        let e = ray.scaled(s);
        let total = e.alpha1 + e.alpha2 + e.beta1 + e.beta2;
        check_range(
            s > 0.0 && total < CROSS_MOMENT_LIMIT,
            force,
            format!("alpha1 + alpha2 + beta1 + beta2 = {total} at scale {s}, need < 5/9"),
        )?;
        if e.alpha1 == e.alpha2 {
            let ab = e.alpha1 + e.beta1.max(e.beta2);
            check_range(
                ab < SQUARE_MOMENT_LIMIT,
                force,
                format!("alpha + beta = {ab} at scale {s}, need < 5/18 when alpha1 = alpha2"),
            )?;
        }
    }
    growth_experiment("cross_moment", w, ray, scales, poly, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{partial_sum_l, rho_m, CoeffSeries};

    fn window(x: f64) -> FamilyWindow {
        FamilyWindow::new(x, WeightKind::Bump).unwrap()
    }

    #[test]
    fn zeta5_value() {
        assert!((zeta5() - 1.036_927_755_143_37).abs() < 1e-14);
    }

    #[test]
    fn family_iter_support_filter_and_order() {
        let w = window(1e4);
        let all: Vec<_> = family_iter(&w).collect();
        assert!(!all.is_empty());
        for (c, wt) in &all {
            assert!(*wt > 0.0);
            assert!(c.a as f64 >= w.a_len && c.a as f64 <= 2.0 * w.a_len);
            assert!(c.b as f64 >= w.b_len && c.b as f64 <= 2.0 * w.b_len);
            assert!(c.b % 2 == 1);
            for p in [3i64, 5, 7] {
                assert!(c.a % (p * p) != 0 || c.b % (p * p * p) != 0);
            }
        }
        assert!(all.windows(2).all(|p| (p[0].0.a, p[0].0.b) < (p[1].0.a, p[1].0.b)));
        let again: Vec<_> = family_iter(&w).collect();
        assert_eq!(all.len(), again.len());
        assert!(all.iter().zip(&again).all(|(x, y)| x.0 == y.0 && x.1.to_bits() == y.1.to_bits()));
        // (27, 135): 9 | 27 and 27 | 135
        let w2 = FamilyWindow::new(27f64.powi(3) * 0.9, WeightKind::Sharp).unwrap();
        assert!(family_iter(&w2).all(|(c, _)| !(c.a % 9 == 0 && c.b % 27 == 0)));
    }

    #[test]
    fn count_tracks_closed_form() {
        let c4 = family_count(&window(1e4));
        let c5 = family_count(&window(1e5));
        assert!(c4.deviation < 0.02 && c5.deviation < c4.deviation);
        assert!(c5.curves > c4.curves);
    }

    #[test]
    fn sweep_matches_pointwise_route() {
        let w = window(2e3);
        let (u, m) = (30.0, 20.0);
        let spec = MollifierSpec::new(m, vec![0.0, 0.5, 0.5]).unwrap();
        let nm = required_nmax(u);
        let (mut num_l, mut num_lm, mut num_m2, mut den) = (0.0, 0.0, 0.0, 0.0);
        for (c, wt) in family_iter(&w) {
            let s = CoeffSeries::new(c, nm);
            let l = partial_sum_l(&s, u, CutoffKernel::Exponential, nm).unwrap().value;
            let mv: f64 = (1..=20u64)
                .map(|k| rho_m(&c, k).value() / (k as f64).sqrt() * spec.p((m / k as f64).ln() / m.ln()))
                .sum();
            num_l += wt * l;
            num_lm += wt * l * mv;
            num_m2 += wt * mv * mv;
            den += wt;
        }
        let fs = [
            Functional::new(vec![u], vec![]),
            Functional::new(vec![u], vec![0]),
            Functional::new(vec![], vec![0, 0]),
        ];
        let r = sweep(&w, &[spec], &fs, &SweepOptions::default()).unwrap();
        assert_eq!(r.fallback_rows, 0);
        assert!((r.weight_sum - den).abs() < 1e-9 * den);
        for (got, want) in r.averages.iter().zip([num_l / den, num_lm / den, num_m2 / den]) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn correlation_rows_match_direct_traces() {
        let plan = DivisorPlan::new(400);
        let mut planner = FftPlanner::<f64>::new();
        let mut meta = Vec::new();
        let mut offset = 0;
        for &p in plan.primes().iter().filter(|&&p| p > 2) {
            let chi = legendre_table(p as u64);
            let fft = (p >= FFT_MIN_PRIME).then(|| {
                let fwd = planner.plan_fft_forward(p as usize);
                let inv = planner.plan_fft_inverse(p as usize);
                let mut hat: Vec<Complex64> =
                    chi.iter().map(|&c| Complex64::new(c as f64, 0.0)).collect();
                fwd.process(&mut hat);
                (fwd, inv, hat)
            });
            meta.push(PrimeRow { p, offset, chi, fft });
            offset += p as usize;
        }
        for a in [1i64, 17, 250] {
            let mut rows = vec![0i32; offset];
            assert_eq!(fill_rows(a, &meta, &mut rows), 0);
            for r in &meta {
                let p = r.p as u64;
                for beta in [0u64, 1, p / 2, p - 1] {
                    let want = trace_mod_p(a.rem_euclid(p as i64) as u64, beta, p, &r.chi);
                    assert_eq!(rows[r.offset + beta as usize] as i64, want, "a={a} p={p} beta={beta}");
                }
            }
        }
    }

    #[test]
    fn tiny_lengths_degenerate() {
        let w = window(1e4);
        let u = 1.0;
        let r = sweep(&w, &[], &[Functional::new(vec![u], vec![]), Functional::new(vec![u, u], vec![])], &SweepOptions::default()).unwrap();
        let y = (-std::f64::consts::TAU / u).exp();
        assert!((r.averages[0] / y - 1.0).abs() < 1e-3);
        assert!((r.averages[1] / (y * y) - 1.0).abs() < 2e-3);
        let spec = MollifierSpec::new(1.5, vec![0.0, 1.0]).unwrap();
        let r = sweep(&w, &[spec], &[Functional::new(vec![], vec![0, 0])], &SweepOptions::default()).unwrap();
        assert_eq!(r.averages[0], 1.0);
    }

    #[test]
    fn mollifier_degenerates_to_first_moment_and_is_linear() {
        let w = window(1e4);
        let f = first_moment_lu(&w, 0.4, 1.0, &SweepOptions::default(), false).unwrap();
        let m = mollified_first_moment(&w, 0.4, 0.02, &[0.0, 1.0], &SweepOptions::default(), false).unwrap();
        assert_eq!(f.grid[0].value, m.grid[0].value);
        let u = w.x.powf(0.4);
        let specs = [
            MollifierSpec::unnormalized(30.0, vec![0.0, 1.0, -0.5]).unwrap(),
            MollifierSpec::unnormalized(30.0, vec![0.0, 2.5, -1.25]).unwrap(),
        ];
        let r = sweep(&w, &specs, &[Functional::new(vec![u], vec![0]), Functional::new(vec![u], vec![1])], &SweepOptions::default()).unwrap();
        assert!((r.averages[1] - 2.5 * r.averages[0]).abs() < 1e-12);
    }

    #[test]
    fn raising_truncation_is_invisible() {
        let w = window(5e3);
        let fs = [Functional::new(vec![20.0], vec![]), Functional::new(vec![20.0, 35.0], vec![])];
        let a = sweep(&w, &[], &fs, &SweepOptions::default()).unwrap();
        let opts = SweepOptions {
            min_truncation: 2 * required_nmax(35.0),
            ..Default::default()
        };
        let b = sweep(&w, &[], &fs, &opts).unwrap();
        for (x, y) in a.averages.iter().zip(&b.averages) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn weight_scaling_leaves_averages() {
        let w = window(5e3);
        let fs = [Functional::new(vec![20.0, 20.0], vec![])];
        let a = sweep(&w, &[], &fs, &SweepOptions::default()).unwrap();
        let opts = SweepOptions {
            weight_scale: 3.7,
            ..Default::default()
        };
        let b = sweep(&w, &[], &fs, &opts).unwrap();
        assert!((a.averages[0] - b.averages[0]).abs() < 1e-13 * a.averages[0].abs());
        assert!((b.weight_sum / a.weight_sum - 3.7).abs() < 1e-12);
    }

    #[test]
    fn parallel_and_serial_sweeps_agree_bitwise() {
        let w = window(2e4);
        let spec = MollifierSpec::new(15.0, vec![0.0, 1.0]).unwrap();
        let fs = [Functional::new(vec![25.0], vec![0]), Functional::new(vec![], vec![0, 0])];
        let run = |n: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| sweep(&w, std::slice::from_ref(&spec), &fs, &SweepOptions::default()).unwrap())
        };
        let (a, b) = (run(1), run(3));
        for (x, y) in a.sums.iter().zip(&b.sums) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn guards_and_ranges() {
        let w = window(1e4);
        let tight = SweepOptions {
            memory_budget: 1000,
            ..Default::default()
        };
        assert!(matches!(
            sweep(&w, &[], &[Functional::new(vec![100.0], vec![])], &tight),
            Err(Error::Memory(_))
        ));
        let o = SweepOptions::default();
        assert!(first_moment_lu(&w, 0.8, 1.0, &o, false).is_err());
        assert!(mollified_first_moment(&w, 0.5, 0.3, &[0.0, 1.0], &o, false).is_err());
        assert!(second_moment_lv(&w, &[0.3], &o, false).is_err());
        assert!(second_moment_lv(&w, &[0.3], &o, true).is_ok());
        let ray = ExponentRay {
            alpha1: 0.1,
            alpha2: 0.1,
            beta1: 0.2,
            beta2: 0.2,
        };
        assert!(cross_moment(&w, ray, &[1.0], &[0.0, 1.0], &o, false).is_err());
    }

    #[test]
    fn shape_constants() {
        assert!((shape_constant_derivative(&[0.0, 1.0]) - 0.8).abs() < 1e-15);
        assert!((shape_constant_integral(&[0.0, 1.0]) - 0.05).abs() < 1e-15);
        // P = 2x - x^2: F = 4x^2 - 3x^3, int F^2 = 16/5 - 4 + 9/7
        let f = shape_constant_derivative(&[0.0, 2.0, -1.0]);
        assert!((f - (16.0 / 5.0 - 4.0 + 9.0 / 7.0)).abs() < 1e-14);
    }

    #[test]
    fn growth_experiment_reports_fit() {
        let w = window(1e4);
        let r = second_moment_lv(&w, &[0.15, 0.2, 0.25], &SweepOptions::default(), false).unwrap();
        let fit = r.fit.unwrap();
        assert_eq!(fit.proxy, LogProxy::KernelLogV);
        assert_eq!(fit.fit.points, 3);
        assert!(fit.fit.exponent.is_finite());
        assert!(r.grid.windows(2).all(|g| g[0].value < g[1].value));
        let m = mollifier_second_moment(&w, &[0.1, 0.2, 0.27], &[0.0, 1.0], &SweepOptions::default(), false).unwrap();
        assert_eq!(m.report.fit.as_ref().unwrap().baseline, 1.0);
    }
}
