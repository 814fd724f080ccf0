//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//! Heavy: criterion 1 alone samples 2 x 10^5 matrices of size 256.

use std::process::ExitCode;
use std::time::Instant;

use lsv_lab::bump::{decay_certificate_with, Bump, BumpTable};
use lsv_lab::corrector::CorrectionContext;
use lsv_lab::ensemble::{sample_matrix_trial, DistSpec, EntryDistribution};
use lsv_lab::events::{decoupling_test, kernel_frame, negdep_suite, sigma_tail_tests, Outcome, ProfileParams};
use lsv_lab::harness::commands::{self, Sampling};
use lsv_lab::harness::{
    resolve_workers, run_config, tail_estimate, universality_compare_with, with_pool, CompareReport, ExperimentConfig,
    GridSpec, COMPARE_SLACK,
};
use lsv_lab::numeric::norm2;
use lsv_lab::rng::{role, substream};
use lsv_lab::secular::{secular_spectrum, verify_update_implications, SecularProblem};
use lsv_lab::spectra;
use lsv_lab::structure::{char_fn_bound_check, lcd, torus_norm, LcdKind, LcdQuery};
use lsv_lab::LabError;
use ndarray::s;
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

const SEED: u64 = 20_240_601;
const C1_EPS: [f64; 4] = [0.05, 0.1, 0.2, 0.5];

fn c1_sharp(rep: &CompareReport) -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, est) in [("rademacher", &rep.target), ("gaussian", &rep.reference)] {
        for (i, e) in est.eps_grid.iter().enumerate() {
            let p = est.estimates[i];
            let inside = (0.8 * e..=1.2 * e).contains(&p);
            ok &= inside;
            if !inside {
                notes.push(format!("{name} eps={e}: {p:.4} outside [{:.4}, {:.4}]", 0.8 * e, 1.2 * e));
            }
        }
    }
    ok &= rep.all_overlap();
    let ratios: Vec<String> = rep.ratios.iter().map(|r| format!("{r:.3}")).collect();
    verdict(
        ok,
        format!(
            "ratios rad/gauss [{}], overlap with {COMPARE_SLACK} slack: {} {}",
            ratios.join(", "),
            rep.all_overlap(),
            notes.join("; ")
        ),
    )
}

fn c2_edelman(g256: &lsv_lab::harness::TailEstimate) -> Verdict {
    let g = EntryDistribution::gaussian();
    let grid = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];
    let mut runs = Vec::new();
    for n in [64usize, 128] {
        runs.push(tail_estimate(&g, n, &grid, 100_000, SEED + n as u64).expect("tail"));
    }
    runs.push(g256.clone());
    let mut worst = f64::NEG_INFINITY;
    let mut ok = true;
    for r in &runs {
        for (i, e) in r.eps_grid.iter().enumerate() {
            let excess = r.estimates[i] - (e + 3.0 * r.halfwidth(i));
            worst = worst.max(excess);
            ok &= excess <= 0.0;
        }
    }
    verdict(ok, format!("n in {{64,128,256}}, max(estimate - eps - 3 hw) = {worst:.4}"))
}

fn c3_secular() -> Verdict {
    let laws = [
        EntryDistribution::gaussian(),
        EntryDistribution::rademacher(),
        EntryDistribution::uniform(),
        EntryDistribution::discrete(vec![-2.0, 0.0, 2.0], vec![0.125, 0.75, 0.125]).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    let mut worst_planted: f64 = 0.0;
    let mut skipped = 0;
    let mut checked = 0;
    for (li, d) in laws.iter().enumerate() {
        for t in 0..1000u64 {
            let n = 2 + (t as usize * 7) % 59;
            let m = sample_matrix_trial(d, n, n, SEED + li as u64, t).unwrap();
            let want = spectra::singular_values(&m.entries).unwrap();
            if want[n - 1] <= 1e-8 * want[0] {
                skipped += 1;
                continue;
            }
            let astar = m.entries.slice(s![..n - 1, ..]).to_owned();
            let mut p = SecularProblem::from_rows(&astar, &m.entries.row(n - 1).to_vec()).unwrap();
            let got = secular_spectrum(&p).unwrap();
            for (x, y) in got.iter().zip(&want) {
                worst = worst.max(((x - y) / y).abs());
            }
            checked += 1;
            if n >= 3 && t % 4 == 0 {
                let k = (t as usize / 4) % (n - 1);
                p.inner[k] = 0.0;
                let planted = p.sigma_star[k];
                let got = secular_spectrum(&p).unwrap();
                let e = got.iter().map(|x| ((x - planted) / planted).abs()).fold(f64::INFINITY, f64::min);
                worst_planted = worst_planted.max(e);
            }
        }
    }
    verdict(
        worst <= 1e-9 && worst_planted <= 1e-12,
        format!("{checked} matrices ({skipped} singular skipped), max rel err {worst:.2e}, planted deflation {worst_planted:.2e}"),
    )
}

fn c4_implications() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [EntryDistribution::gaussian(), EntryDistribution::rademacher()] {
        for eps in [0.05, 0.5] {
            let res: Vec<Result<bool, LabError>> = (0..1000u64)
                .map(|t| {
                    let m = sample_matrix_trial(&d, 40, 40, SEED + 4, t).unwrap();
                    verify_update_implications(&m.entries, eps).map(|r| r.both_ok())
                })
                .collect();
            let skipped = res.iter().filter(|r| matches!(r, Err(LabError::DegenerateKernel { .. }))).count();
            let good = res.iter().filter(|r| matches!(r, Ok(true))).count();
            let errors = res.iter().filter(|r| matches!(r, Err(e) if !matches!(e, LabError::DegenerateKernel { .. }))).count();
            let cell_ok = errors == 0 && good + skipped == 1000;
            ok &= cell_ok;
            parts.push(format!("{} eps={eps}: {good}/{}", d.name(), 1000 - skipped));
        }
    }
    verdict(ok, parts.join(", "))
}

fn c5_chi() -> Verdict {
    let d = EntryDistribution::gaussian();
    let n = 30;
    let mut dominated = 0;
    let mut worst_identity: f64 = 0.0;
    for t in 0..10_000u64 {
        let m = sample_matrix_trial(&d, n, n, SEED + 5, t).unwrap();
        let mstar = m.entries.slice(s![..n - 1, ..]).to_owned();
        let y = m.entries.row(n - 1).to_vec();
        let ctx = CorrectionContext::from_matrix(&mstar, None, None).unwrap();
        if ctx.chi_trunc(&y).unwrap() <= ctx.chi_full(&y).unwrap() {
            dominated += 1;
        }
        let full = ctx.with_ell(n - 1).unwrap();
        let (a, b) = (full.chi_full_sq(&y).unwrap(), full.chi_trunc_sq(&y).unwrap());
        worst_identity = worst_identity.max(((a - b) - 1.0).abs() / a);
    }
    verdict(
        dominated == 10_000 && worst_identity <= 1e-10,
        format!("chi <= chi_full in {dominated}/10000; ell = n-1 identity rel err {worst_identity:.2e}"),
    )
}

fn c6_bump() -> Verdict {
    let bump = Bump::default();
    let table = BumpTable::build(&bump, 64.0, 0.5).unwrap();
    let min_psi = table.psi_values.iter().copied().fold(f64::INFINITY, f64::min);
    let outside = (0..=400).map(|i| 1.0 + i as f64 * 0.05).map(|t| bump.psihat(t).abs().max(bump.psihat(-t).abs())).fold(0.0, f64::max);
    let integral = table.integral();
    let c = decay_certificate_with(&bump, 64.0, 0.5);
    let refined = decay_certificate_with(&Bump::with_tol(bump.tol() / 16.0), 64.0, 0.25);
    let (pass, cdesc) = match (c, refined) {
        (Ok(c), Ok(r)) => (c > 0.0 && (c - r).abs() <= 1e-4, format!("c_fit {c:.6} vs refined {r:.6}")),
        (a, b) => (false, format!("certificate failed: {a:?} / {b:?}")),
    };
    verdict(
        pass && min_psi >= -1e-9 && outside == 0.0 && (integral - 1.0).abs() <= 1e-6,
        format!("min psi {min_psi:.2e}, max |psihat| beyond 1: {outside:e}, int psi - 1 = {:.2e}, {cdesc}", integral - 1.0),
    )
}

fn c7_structure() -> Verdict {
    let mut rng = substream(SEED, 7, role::VECTOR);
    let mut identities = true;
    for _ in 0..10_000 {
        let len = rng.random_range(1..=64);
        // multiples of 2^-20 keep v + z exactly representable
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(-(1i64 << 26)..(1i64 << 26)) as f64 / (1u64 << 20) as f64).collect();
        let w: Vec<f64> = v.iter().map(|x| x + rng.random_range(-1000i64..1000) as f64).collect();
        identities &= torus_norm(&v) == torus_norm(&w) && torus_norm(&v) <= norm2(&v);
    }
    let mut lcd_ok = true;
    let mut found = Vec::new();
    for n in [16usize, 25, 36] {
        let v = vec![1.0 / (n as f64).sqrt(); n];
        let strict = lcd(&LcdQuery::new(v.clone(), 1e-20, 0.5, 100.0)).unwrap();
        let default = lcd(&LcdQuery::new(v, 1.0, 0.5, 100.0)).unwrap();
        match strict.kind {
            LcdKind::Found(t) => {
                lcd_ok &= (t - (n as f64).sqrt()).abs() < 1e-8;
                found.push(format!("n={n}: {t:.6} (alpha=1: {:?})", default.kind));
            }
            LcdKind::ExceedsCap => lcd_ok = false,
        }
    }
    let r = EntryDistribution::rademacher();
    let mut bound_ok = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..=100);
        let u: Vec<f64> = (0..len).map(|_| rng.random_range(-0.1..=0.1)).collect();
        if char_fn_bound_check(&r, &u, 0.1).unwrap() {
            bound_ok += 1;
        }
    }
    verdict(
        identities && lcd_ok && bound_ok == 1000,
        format!("torus identities on 10^4 vectors: {identities}; LCD {}; char fn bound {bound_ok}/1000", found.join(", ")),
    )
}

fn c8_decay() -> Verdict {
    let d = EntryDistribution::rademacher();
    let n = 100;
    let (u, frame) = kernel_frame(&d, n, SEED + 8, 1).unwrap();
    let dec = decoupling_test(&u, &frame[0], 0.2, &[0.0, 1.0, 2.0, 3.0], &d, 200_000, SEED + 8, true).unwrap();
    let neg = negdep_suite(n, &d, &[4, 9, 16], 0.1, 0.5, 100_000, SEED + 9).unwrap();
    let sig = sigma_tail_tests(&d, n, &[1, 2, 3, 4], &[1.0, 2.0, 3.0], 0.5, 20_000, SEED + 10).unwrap();
    let powered = |o: Outcome| o != Outcome::Underpowered;
    let dec_stats: Vec<String> = dec.verdicts.iter().filter(|v| powered(v.outcome)).map(|v| format!("{:.2e}", v.statistic)).collect();
    let neg_stats: Vec<String> = neg.cells.iter().filter(|c| powered(c.verdict.outcome)).map(|c| format!("{:.3}", c.verdict.statistic)).collect();
    let withheld = dec.verdicts.iter().filter(|v| !powered(v.outcome)).count()
        + neg.cells.iter().filter(|c| !powered(c.verdict.outcome)).count()
        + sig.lower.iter().chain(sig.upper.iter().flatten()).filter(|v| !powered(v.outcome)).count();
    verdict(
        dec.decreasing && neg.decreasing && sig.pass(),
        format!(
            "decoupling [{}] decreasing {}; negdep ratio [{}] decreasing {}; sigma tails monotone lower {} upper {}; {withheld} cells underpowered",
            dec_stats.join(", "),
            dec.decreasing,
            neg_stats.join(", "),
            neg.decreasing,
            sig.lower_monotone,
            sig.upper_monotone
        ),
    )
}

fn c9_lindeberg() -> Verdict {
    let c = Sampling { dist: EntryDistribution::rademacher(), n: 100, trials: 100_000, seed: SEED + 11 };
    let t = commands::lindeberg(&c, 4, 4.0).unwrap();
    let get = |k: &str| t.column(k).unwrap()[0].to_string();
    verdict(
        get("pass") == "1",
        format!("gap {} (halfwidth {}) vs bound {}", get("gap"), get("halfwidth"), get("bound")),
    )
}

/// Every experiment under 1 and 4 workers.
fn c10_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let c = Sampling { dist: EntryDistribution::rademacher(), n: 24, trials: 300, seed: SEED + 12 };
    let run = |w: usize| -> Vec<(String, String)> {
        let mut cfg = ExperimentConfig::new(DistSpec::Rademacher, 24, 2000, GridSpec::Dyadic { min: 0.05, max: 1.0 }, SEED);
        cfg.workers = Some(w);
        cfg.event_trials = Some(50);
        cfg.output = Some(tmp.path().join(format!("w{w}")));
        run_config(&cfg).unwrap();
        let dir = cfg.output.clone().unwrap();
        let read = |f: &str| std::fs::read_to_string(dir.join(f)).unwrap();
        with_pool(w, || {
            let ones = commands::builtin_or_file("ones:16").unwrap();
            vec![
                ("tail".into(), read("tail.csv")),
                ("tail events".into(), read("events.csv")),
                ("compare".into(), universality_compare_with(&c.dist, 24, &[0.1, 0.5], 2000, SEED).unwrap().to_table().to_csv()),
                ("secular-check".into(), commands::secular_check(&c).unwrap().to_csv()),
                ("chi-check".into(), commands::chi_check(&c, None).unwrap().to_csv()),
                ("events".into(), commands::events(&c, &ProfileParams::default()).unwrap().to_csv()),
                ("smallball".into(), commands::smallball(&c, &[0.1, 0.3]).unwrap().to_csv()),
                ("decouple".into(), commands::decouple(&c, 0.3, &[0.0, 1.0]).unwrap().to_csv()),
                ("negdep".into(), commands::negdep(&c, 0.2, 0.5, &[1, 2]).unwrap().to_csv()),
                ("sigtails".into(), commands::sigtails(&c, &[1, 2], &[1.0, 2.0], 0.5).unwrap().to_csv()),
                ("lindeberg".into(), commands::lindeberg(&c, 2, 4.0).unwrap().to_csv()),
                ("lcd".into(), commands::lcd_table(ones, 1.0, 0.5, 100.0).unwrap().to_csv()),
                ("bump".into(), commands::bump_table(16.0, 0.5).unwrap().to_csv()),
            ]
        })
        .unwrap()
    };
    let a = run(1);
    let b = run(4);
    let differing: Vec<&str> = a.iter().zip(&b).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0.as_str()).collect();
    verdict(
        differing.is_empty(),
        if differing.is_empty() { format!("{} experiments byte-identical", a.len()) } else { format!("differ: {}", differing.join(", ")) },
    )
}

fn main() -> ExitCode {
    let workers = resolve_workers(None).expect("worker count");
    let started = Instant::now();
    let results = with_pool(workers, || {
        let mut out: Vec<(&str, Verdict)> = Vec::new();
        let rep = universality_compare_with(&EntryDistribution::rademacher(), 256, &C1_EPS, 100_000, SEED).expect("compare");
        out.push(("sharp asymptotic at n = 256", c1_sharp(&rep)));
        out.push(("Gaussian tail below eps", c2_edelman(&rep.reference)));
        out.push(("secular oracle", c3_secular()));
        out.push(("update implications", c4_implications()));
        out.push(("chi dominance and truncation", c5_chi()));
        out.push(("bump certificate", c6_bump()));
        out.push(("structure measures", c7_structure()));
        out.push(("decay suites", c8_decay()));
        out.push(("Lindeberg gap", c9_lindeberg()));
        out.push(("determinism across workers", c10_determinism()));
        out
    })
    .expect("pool");
    let mut failed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        println!("{} [{}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {}/{} passed in {:.0} s", results.len() - failed, results.len(), started.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
