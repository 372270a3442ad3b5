//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
//! when an outcome differs from the expectation in `KNOWN_FAILURES`.

use std::process::ExitCode;
use std::time::Instant;

use ecfam::arith::gcd;
use ecfam::asymptotics::{i1_oracle, i2_oracle, i3_growth, OracleGuard};
use ecfam::charsums::{c_s, poisson_identity_check, q, run_lemma_suite, CostGuard, PoissonParams, LEMMA_MODULI};
use ecfam::curves::{
    afe_consistency_search, conductor_candidates, in_family_s, root_number_identity, CurveParams,
    AFE_VARIANCE_THRESHOLD,
};
use ecfam::moments::{
    cross_moment, family_count, first_moment_lu, mollified_first_moment,
    mollifier_second_moment, second_moment_lv, ExponentRay, FamilyWindow, MomentReport, SweepOptions,
};
use ecfam::weight::WeightKind;

/// Criteria that do not hold at the sizes reachable here; see the README.
const KNOWN_FAILURES: &[u32] = &[6, 7, 8];

type Check = Result<(bool, String), String>;

fn window(x: f64) -> FamilyWindow {
    FamilyWindow::new(x, WeightKind::Bump).unwrap()
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn criterion_1() -> Check {
    let t = Instant::now();
    let rep = run_lemma_suite(&LEMMA_MODULI, 99, 105).map_err(e)?;
    let secs = t.elapsed().as_secs_f64();
    let n = rep.gauss.instances
        + rep.maincharsum.instances
        + rep.degenerate_exp.instances
        + rep.degenerate_lambda.instances
        + rep.maincompletesum.instances
        + rep.parameterization.instances;
    Ok((
        rep.pass() && secs < 120.0,
        format!(
            "{n} instances, max errors gauss {:.1e} twisted {:.1e} complete {:.1e}",
            rep.gauss.max_error, rep.maincharsum.max_error, rep.maincompletesum.max_error
        ),
    ))
}

fn criterion_2() -> Check {
    let t = Instant::now();
    let guard = CostGuard::default();
    let mut checked = 0;
    let mut nonzero = Vec::new();
    for p in ecfam::arith::primes_up_to(47).into_iter().filter(|&p| p > 2) {
        for k in [1u32, 2, 3, 5] {
            let v = q(p.pow(k), &guard).map_err(e)?;
            checked += 1;
            if v.scaled_value != 0 {
                nonzero.push(format!("{p}^{k}"));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((
        nonzero.is_empty() && secs < 300.0,
        format!("{checked} values of Q(p^k), nonzero at {nonzero:?}"),
    ))
}

fn criterion_3() -> Check {
    let t = Instant::now();
    let mut curves = 0;
    let mut bad = Vec::new();
    for a in 1..=20 {
        for b in 1..=20 {
            let c = CurveParams::new(a, b).unwrap();
            if !in_family_s(&c) || !c.disc_factorization().is_squarefree() {
                continue;
            }
            curves += 1;
            let (l, r) = root_number_identity(&c).map_err(e)?;
            if l != r {
                bad.push((a, b));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((
        bad.is_empty() && curves > 0 && secs < 60.0,
        format!("{curves} curves, mismatches {bad:?}"),
    ))
}

fn criterion_4() -> Check {
    let t = Instant::now();
    let devs: Vec<f64> = [1e4, 1e5, 1e6].iter().map(|&x| family_count(&window(x)).deviation).collect();
    let secs = t.elapsed().as_secs_f64();
    Ok((
        devs[2] < 0.02 && devs[2] < devs[0] && secs < 120.0,
        format!("deviation X=1e4 {:.2e}, 1e5 {:.2e}, 1e6 {:.2e}", devs[0], devs[1], devs[2]),
    ))
}

fn criterion_5() -> Check {
    let t = Instant::now();
    let cs = c_s(97, 16, &CostGuard::default()).map_err(e)?;
    let opts = SweepOptions::default();
    let dev = |x: f64| -> Result<f64, String> {
        let r = first_moment_lu(&window(x), 0.5, cs.value, &opts, false).map_err(e)?;
        Ok((r.grid[0].ratio.unwrap() - 1.0).abs())
    };
    let (small, large) = (dev(1e4)?, dev(1e6)?);
    let secs = t.elapsed().as_secs_f64();
    Ok((
        large < 0.25 && large < small && secs < 900.0,
        format!(
            "c_S = {:.10} (tail bound {:.1e}, estimate {:.1e}); |ratio - 1| X=1e4 {small:.4}, 1e6 {large:.4}",
            cs.value, cs.tail_bound, cs.tail_estimate
        ),
    ))
}

fn criterion_6() -> Check {
    let t = Instant::now();
    let opts = SweepOptions::default();
    let mut devs = Vec::new();
    let mut vals = Vec::new();
    for x in [1e4, 1e5, 1e6] {
        let r = mollified_first_moment(&window(x), 0.4, 0.1, &[0.0, 1.0], &opts, false).map_err(e)?;
        vals.push(r.grid[0].value);
        devs.push((r.grid[0].ratio.unwrap() - 1.0).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((
        devs[2] < 0.35 && devs[2] < devs[1] && devs[1] < devs[0] && secs < 1200.0,
        format!("averages X=1e4 {:.4}, 1e5 {:.4}, 1e6 {:.4} against 1/2", vals[0], vals[1], vals[2]),
    ))
}

fn exponent(r: &MomentReport) -> f64 {
    r.fit.as_ref().map(|f| f.fit.exponent).unwrap_or(f64::NAN)
}

fn criterion_7() -> Check {
    let opts = SweepOptions::default();
    let poly = [0.0, 1.0];
    let grid = |lo: f64, step: f64| -> Vec<f64> { (0..6).map(|i| lo + step * i as f64).collect() };
    let mut ok = true;
    let mut parts = Vec::new();
    for x in [1e5, 1e6] {
        let w = window(x);
        let lv2 = exponent(&second_moment_lv(&w, &grid(0.1, 0.035), &opts, false).map_err(e)?);
        let m2 = exponent(&mollifier_second_moment(&w, &grid(0.1, 0.035), &poly, &opts, false).map_err(e)?.report);
        let same = ExponentRay { alpha1: 1.0, alpha2: 1.0, beta1: 1.0, beta2: 1.0 };
        let lvm2 = exponent(&cross_moment(&w, same, &grid(0.05, 0.017), &poly, &opts, false).map_err(e)?);
        let split = ExponentRay { alpha1: 0.1, alpha2: 0.2, beta1: 0.1, beta2: 0.1 };
        let cross = exponent(&cross_moment(&w, split, &grid(0.5, 0.12), &poly, &opts, false).map_err(e)?);
        let here = (lv2 - 1.0).abs() <= 0.5
            && (m2 - 3.0).abs() <= 0.8
            && (lvm2 - 3.0).abs() <= 0.8
            && cross.abs() <= 0.5
            && lvm2 - cross >= 2.0;
        ok &= here;
        parts.push(format!(
            "X={x:.0e}: L_V^2 {lv2:.2}, M^2 {m2:.2}, L_V^2 M^2 {lvm2:.2}, split {cross:.2}"
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_8() -> Check {
    let t = Instant::now();
    let log4pi = (4.0 * std::f64::consts::PI).ln();
    let consts: Vec<f64> = (3..=7)
        .map(|k| {
            let v = 10f64.powi(k);
            i1_oracle(v).map(|i| i - v.ln())
        })
        .collect::<Result<_, _>>()
        .map_err(e)?;
    let drift = consts.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let i1_ok = drift < 0.01 && (consts.last().unwrap() + log4pi).abs() < 1e-3;

    let guard = OracleGuard::default();
    let ratios: Vec<f64> = [1e5, 1e6, 1e7]
        .iter()
        .map(|&m| i2_oracle(m, 1, 1, &guard).map(|r| r.ratio_denominator))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    let i2_ok = ratios.windows(2).all(|w| (w[1] - 1.0).abs() < (w[0] - 1.0).abs());

    let xs = [1e2, 1e3, 1e4, 1e5, 1e6];
    let eq = i3_growth([0.5, 0.5, 0.5, 0.5], &xs, 1, 1, &guard).map_err(e)?;
    let neq = i3_growth([0.25, 0.5, 0.5, 0.5], &xs, 1, 1, &guard).map_err(e)?;
    let gap = eq.fit.exponent - neq.fit.exponent;
    let i3_ok = gap >= 2.0 && !eq.inconclusive && !neq.inconclusive;
    let secs = t.elapsed().as_secs_f64();
    Ok((
        i1_ok && i2_ok && i3_ok && secs < 600.0,
        format!(
            "I1 drift {drift:.1e}, constant {:.6} vs {:.6}; I2 ratios {:.3?}; I3 exponents {:.2} (expect {}) vs {:.2} (expect {}), gap {gap:.2}",
            consts.last().unwrap(),
            -log4pi,
            ratios,
            eq.fit.exponent,
            eq.expected_exponent,
            neq.fit.exponent,
            neq.expected_exponent
        ),
    ))
}

fn criterion_9() -> Check {
    let guard = CostGuard::default();
    let params = |r: u64, len: f64| PoissonParams {
        r,
        c: 1,
        g: 1,
        a_len: len,
        b_len: len,
        weight: WeightKind::Bump,
    };
    let mut worst: f64 = 0.0;
    for r in [1u64, 5, 7, 15] {
        let rep = poisson_identity_check(params(r, 50.0), &guard).map_err(e)?;
        worst = worst.max(rep.relative_error);
    }
    let big = poisson_identity_check(params(1, 400.0), &guard).map_err(e)?;
    Ok((
        worst < 1e-3 && big.main_term_deviation <= big.band,
        format!(
            "max relative error {worst:.1e}; main-term deviation {:.1e} within band {:.1e}",
            big.main_term_deviation, big.band
        ),
    ))
}

fn criterion_10() -> Check {
    let mut curves = Vec::new();
    'outer: for a in 1..=12i64 {
        for b in 1..=12i64 {
            let c = CurveParams::new(a, b).unwrap();
            if gcd(a as u64, b as u64) == 1 && c.disc_factorization().is_squarefree() {
                curves.push(c);
                if curves.len() == 6 {
                    break 'outer;
                }
            }
        }
    }
    let mut ok = curves.len() >= 5;
    let mut parts = Vec::new();
    for c in &curves {
        let cands = conductor_candidates(c).map_err(e)?;
        match afe_consistency_search(c, &cands, AFE_VARIANCE_THRESHOLD) {
            Ok(s) => {
                let stable = s.spread <= 1e-6 * s.central_value.abs().max(1.0);
                ok &= s.separation >= 10.0 && stable;
                parts.push(format!(
                    "({},{}) N={} eps={:+} sep {:.0e}",
                    c.a, c.b, s.conductor, s.epsilon, s.separation
                ));
            }
            Err(err) => {
                ok = false;
                parts.push(format!("({},{}) {err}", c.a, c.b));
            }
        }
    }
    Ok((ok, parts.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Check); 10] = [
        (1, "complete-sum lemmas", criterion_1),
        (2, "vanishing complete sums", criterion_2),
        (3, "root-number identity", criterion_3),
        (4, "family count", criterion_4),
        (5, "first moment", criterion_5),
        (6, "mollified first moment", criterion_6),
        (7, "growth laws", criterion_7),
        (8, "asymptotic oracles", criterion_8),
        (9, "Poisson identity", criterion_9),
        (10, "AFE consistency", criterion_10),
    ];
    let filter: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if filter.is_some_and(|f| f != id) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match run() {
            Ok(v) => v,
            Err(msg) => (false, format!("error: {msg}")),
        };
        let known = KNOWN_FAILURES.contains(&id);
        let tag = match (pass, known) {
            (true, false) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
            (true, true) => "PASS (unexpected)",
        };
        println!(
            "criterion {id:>2} {tag}: {name} [{:.1}s] {detail}",
            t.elapsed().as_secs_f64()
        );
        if pass == known {
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("outcomes differ from expectation for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
