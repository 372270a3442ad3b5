use std::fs::File;
use std::io::{self, Write};

use anyhow::Context;
use ecfam::asymptotics::{self as asy, OracleGuard};
use ecfam::charsums::{self, CostGuard, LEMMA_MODULI};
use ecfam::curves::{self, CoeffSeries, CurveParams};
use ecfam::moments::{self, ExponentRay, FamilyWindow, MomentReport, SweepOptions};
use ecfam::weight::WeightKind;
use serde::Serialize;
use serde_json::json;

use crate::report::Outcome;
use crate::{Command, Common, TableFormat, WeightArg};

/// Missing or inconsistent arguments found after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "usage: {}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: &str) -> anyhow::Error {
    UsageError(msg.to_string()).into()
}

fn need(v: Option<f64>, flag: &str) -> anyhow::Result<f64> {
    v.ok_or_else(|| usage(&format!("{flag} is required here")))
}

impl Common {
    fn guard(&self) -> CostGuard {
        CostGuard {
            max_pairs_per_prime: self.max_pairs_per_prime,
            max_evaluations: self.max_evaluations,
        }
    }

    fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            memory_budget: self.memory_budget,
            ..SweepOptions::default()
        }
    }

    fn window(&self, x: f64) -> anyhow::Result<FamilyWindow> {
        let kind = match self.weight {
            WeightArg::Bump => WeightKind::Bump,
            WeightArg::Sharp => WeightKind::Sharp,
        };
        Ok(FamilyWindow::new(x, kind)?)
    }
}

pub fn run(cmd: &Command, common: &Common) -> anyhow::Result<Outcome> {
    match cmd {
        Command::VerifyLemmas { rmax } => verify_lemmas(*rmax),
        Command::Coeffs { a, b, nmax, format } => coeffs(*a, *b, *nmax, *format, common),
        Command::CompleteSums { r, t, k } => complete_sums(*r, *t, *k, common),
        Command::Constants { pmax, kmax } => constants(*pmax, *kmax, common),
        Command::AfeCheck { a, b, threshold } => afe_check(*a, *b, *threshold),
        Command::FamilyCount { x } => family_count(*x, common),
        Command::FirstMoment { x, nu, pmax, kmax } => first_moment(*x, *nu, *pmax, *kmax, common),
        Command::MollifiedFirstMoment { x, nu, kappa, poly } => {
            mollified_first_moment(*x, *nu, *kappa, poly, common)
        }
        Command::SecondMoment { x, alpha, beta, poly } => second_moment(*x, alpha, beta, poly, common),
        Command::CrossMoment {
            x,
            alpha1,
            alpha2,
            beta1,
            beta2,
            scales,
            poly,
        } => {
            let ray = ExponentRay {
                alpha1: *alpha1,
                alpha2: *alpha2,
                beta1: *beta1,
                beta2: *beta2,
            };
            cross_moment(*x, ray, scales, poly, common)
        }
        Command::Asymptotics { .. } => asymptotics(cmd),
    }
}

fn verify_lemmas(rmax: u64) -> anyhow::Result<Outcome> {
    let moduli: Vec<u64> = LEMMA_MODULI.iter().copied().filter(|&r| r <= rmax).collect();
    let rep = charsums::run_lemma_suite(&moduli, rmax, rmax)?;
    let tallies = [
        ("gauss", &rep.gauss),
        ("maincharsum", &rep.maincharsum),
        ("degenerate_exp", &rep.degenerate_exp),
        ("degenerate_lambda", &rep.degenerate_lambda),
        ("maincompletesum", &rep.maincompletesum),
        ("parameterization", &rep.parameterization),
    ];
    let mut out = Outcome::new(&json!({ "moduli": moduli, "rmax": rmax, "report": rep }))?;
    for (name, t) in tallies {
        out = out
            .line(format!(
                "{name:<18} {:>6} instances, {} failures, max error {:.1e}",
                t.instances, t.failures, t.max_error
            ))
            .check(name, t.pass());
    }
    Ok(out)
}

#[derive(Serialize)]
struct CoeffRow {
    n: usize,
    a_n: i64,
    lambda: f64,
    rho: f64,
}

fn coeffs(a: i64, b: i64, nmax: usize, format: TableFormat, common: &Common) -> anyhow::Result<Outcome> {
    let c = CurveParams::new(a, b)?;
    if nmax == 0 {
        return Err(usage("--nmax must be positive"));
    }
    let s = CoeffSeries::new(c, nmax);
    let rows: Vec<CoeffRow> = (1..=nmax)
        .map(|n| CoeffRow {
            n,
            a_n: s.get(n),
            lambda: s.lambda(n),
            rho: curves::rho_m(&c, n as u64).value(),
        })
        .collect();
    let sink: Box<dyn Write> = match &common.out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout()),
    };
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        TableFormat::Json => {
            let mut sink = sink;
            serde_json::to_writer_pretty(&mut sink, &json!({ "curve": c, "invariants": c.invariants(), "rows": rows }))?;
            writeln!(sink)?;
        }
    }
    let inv = c.invariants();
    Ok(Outcome::default().line(format!(
        "({a},{b}): D = {}, in S = {}, D squarefree = {}, {nmax} coefficients",
        inv.d, inv.in_s, inv.d_squarefree
    )))
}

fn complete_sums(r: u64, t: Option<u64>, k: Option<u64>, common: &Common) -> anyhow::Result<Outcome> {
    let g = common.guard();
    let q = charsums::q(r, &g)?;
    let qt = t.map(|t| charsums::q_t(r, t, &g)).transpose()?;
    let qk = k.map(|k| charsums::q_prime(k, r, &g)).transpose()?;
    let mut out = Outcome::new(&json!({ "r": r, "t": t, "k": k, "q": q, "q_t": qt, "q_prime": qk }))?;
    for (name, v) in [("Q", Some(q)), ("Q_t", qt), ("Q'_k", qk)] {
        if let Some(v) = v {
            out = out.line(format!(
                "{name}({r}) = {} / sqrt({}) = {:.12}",
                v.scaled_value, v.sqrt_scale, v.float_value
            ));
        }
    }
    Ok(out)
}

fn main_constant(pmax: u64, kmax: u32, common: &Common) -> anyhow::Result<charsums::MainConstant> {
    Ok(charsums::c_s(pmax, kmax, &common.guard())?)
}

fn constants(pmax: u64, kmax: u32, common: &Common) -> anyhow::Result<Outcome> {
    let cs = main_constant(pmax, kmax, common)?;
    let z5 = moments::zeta5();
    let out = Outcome::new(&json!({ "c_s": cs, "zeta5": z5 }))?
        .line(format!(
            "c_S = {:.12} (rigorous tail bound {:.2e}, fitted tail {:.2e})",
            cs.value, cs.tail_bound, cs.tail_estimate
        ))
        .line(format!("zeta(5) = {z5:.15}"))
        .check("tail_bound_finite", cs.tail_bound.is_finite());
    Ok(out)
}

fn afe_check(a: i64, b: i64, threshold: f64) -> anyhow::Result<Outcome> {
    let c = CurveParams::new(a, b)?;
    let cands = curves::conductor_candidates(&c)?;
    let s = curves::afe_consistency_search(&c, &cands, threshold)?;
    let stable = s.spread <= 1e-6 * s.central_value.abs().max(1.0);
    Ok(Outcome::new(&s)?
        .line(format!(
            "({a},{b}): N = {}, eps = {:+}, L(1/2) = {:.12}, separation {:.1e}",
            s.conductor, s.epsilon, s.central_value, s.separation
        ))
        .check("unique", s.separation >= 10.0)
        .check("stable", stable))
}

fn family_count(x: f64, common: &Common) -> anyhow::Result<Outcome> {
    let r = moments::family_count(&common.window(x)?);
    Ok(Outcome::new(&r)?
        .line(format!(
            "X = {x:e}: {} curves, |S_X| = {:.3}, predicted {:.3}, ratio {:.6}",
            r.curves, r.weight_sum, r.predicted, r.ratio
        ))
        .check("within_2_percent", r.deviation < 0.02))
}

fn moment_outcome(rep: &MomentReport, extra: serde_json::Value) -> anyhow::Result<Outcome> {
    let mut out = Outcome::new(&json!({ "moment": rep, "extra": extra }))?;
    out.results["ratio"] = json!(rep.grid.first().and_then(|g| g.ratio));
    out = out.line(format!(
        "{} at X = {:e}: {} curves, |S_X| = {:.3}",
        rep.experiment, rep.window.x, rep.curves, rep.weight_sum
    ));
    for g in &rep.grid {
        out = out.line(format!(
            "  param {:.4}: value {:.6}{}",
            g.param,
            g.value,
            g.ratio.map(|r| format!(", ratio {r:.6}")).unwrap_or_default()
        ));
    }
    if let Some(f) = &rep.fit {
        out = out.line(format!(
            "  fitted exponent {:.3} (law {}), r^2 {:.4}",
            f.fit.exponent, f.expected_exponent, f.fit.r_squared
        ));
    }
    Ok(out)
}

fn first_moment(x: f64, nu: f64, pmax: u64, kmax: u32, common: &Common) -> anyhow::Result<Outcome> {
    let cs = main_constant(pmax, kmax, common)?;
    let w = common.window(x)?;
    let rep = moments::first_moment_lu(&w, nu, cs.value, &common.sweep_options(), common.force)?;
    moment_outcome(
        &rep,
        json!({ "c_s": cs.value, "c_s_tail_bound": cs.tail_bound, "c_s_tail_estimate": cs.tail_estimate }),
    )
}

fn mollified_first_moment(x: f64, nu: f64, kappa: f64, poly: &[f64], common: &Common) -> anyhow::Result<Outcome> {
    let w = common.window(x)?;
    let rep = moments::mollified_first_moment(&w, nu, kappa, poly, &common.sweep_options(), common.force)?;
    moment_outcome(&rep, json!(null))
}

fn second_moment(x: f64, alpha: &[f64], beta: &[f64], poly: &[f64], common: &Common) -> anyhow::Result<Outcome> {
    let w = common.window(x)?;
    let opts = common.sweep_options();
    match (alpha.is_empty(), beta.is_empty()) {
        (false, true) => moment_outcome(&moments::second_moment_lv(&w, alpha, &opts, common.force)?, json!(null)),
        (true, false) => {
            let r = moments::mollifier_second_moment(&w, beta, poly, &opts, common.force)?;
            let extra = json!({ "shape_derivative": r.shape_derivative, "shape_integral": r.shape_integral });
            moment_outcome(&r.report, extra)
        }
        _ => Err(usage("give exactly one of --alpha (L_V^2) or --beta (M^2)")),
    }
}

fn cross_moment(x: f64, ray: ExponentRay, scales: &[f64], poly: &[f64], common: &Common) -> anyhow::Result<Outcome> {
    let w = common.window(x)?;
    let rep = moments::cross_moment(&w, ray, scales, poly, &common.sweep_options(), common.force)?;
    moment_outcome(&rep, json!({ "ray": ray }))
}

fn asymptotics(cmd: &Command) -> anyhow::Result<Outcome> {
    let Command::Asymptotics {
        prop,
        v,
        m,
        j1,
        j2,
        v1,
        v2,
        m1,
        m2,
        no_mobius,
        ray,
        xs,
        beta1,
        beta2,
        log_x,
    } = cmd
    else {
        unreachable!()
    };
    let guard = OracleGuard::default();
    let closed = match (beta1, beta2, log_x) {
        (Some(b1), Some(b2), Some(l)) => {
            let (i2, i3) = asy::i2_i3_closed(*b1, *b2, *j1, *j2, *l)?;
            Some(json!({ "beta1": b1, "beta2": b2, "log_x": l, "i2": i2, "i3": i3 }))
        }
        (None, None, None) => None,
        _ => return Err(usage("--beta1, --beta2 and --log-x go together")),
    };
    let mut out = match prop {
        1 => {
            let v = need(*v, "--V")?;
            let value = asy::i1_oracle(v)?;
            let limit = -(4.0 * std::f64::consts::PI).ln();
            Outcome::new(&json!({ "v": v, "value": value, "minus_log_v": value - v.ln(), "limit": limit }))?
                .line(format!("I1({v:e}) = {value:.9}, minus log V = {:.9} (limit {limit:.9})", value - v.ln()))
        }
        2 => {
            let m = need(*m, "--M")?;
            let r = asy::i2_oracle(m, *j1, *j2, &guard)?;
            Outcome::new(&r)?.line(format!(
                "I2(M = {m:e}, j = ({j1},{j2})) = {:.6}; ratio to closed form {:.4} (numerator form {:.4})",
                r.value, r.ratio_denominator, r.ratio_numerator
            ))
        }
        _ if !ray.is_empty() || !xs.is_empty() => {
            if ray.len() != 4 || xs.len() < 2 {
                return Err(usage("--ray needs 4 exponents and --xs at least two values"));
            }
            let g = asy::i3_growth([ray[0], ray[1], ray[2], ray[3]], xs, *j1, *j2, &guard)?;
            let line = format!(
                "I3 growth exponent {:.3} (law {}), r^2 {:.4}",
                g.fit.exponent, g.expected_exponent, g.fit.r_squared
            );
            let ok = !g.inconclusive;
            Outcome::new(&g)?.line(line).check("conclusive", ok)
        }
        _ => {
            let (v1, v2) = (need(*v1, "--V1")?, need(*v2, "--V2")?);
            let (m1, m2) = (need(*m1, "--M1")?, need(*m2, "--M2")?);
            let r = asy::i3_full_oracle(v1, v2, m1, m2, *j1, *j2, !no_mobius, &guard)?;
            let line = format!(
                "I3 = {:.9} over {} terms, rounding bound {:.1e}",
                r.value, r.terms, r.rounding_bound
            );
            let ok = !r.inconclusive;
            Outcome::new(&r)?.line(line).check("conclusive", ok)
        }
    };
    if let Some(c) = closed {
        out = out.line(format!("closed forms: I2 = {:.9}, I3 = {:.9}", c["i2"], c["i3"]));
        out.results["closed"] = c;
    }
    Ok(out)
}
