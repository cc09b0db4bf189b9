//! Acceptance suite: one PASS/FAIL line per criterion (`--nocapture` to see
//! them). Criteria 8 and 9 ask for λ = 0.09 at d = 2, ε = 0.3, above the
//! drift ceiling ε/(2d) = 0.075 of every law in Ω_ε; they are run verbatim,
//! expected to fail at law construction, and backed by a supplementary run
//! at the largest feasible parameters of the same regime.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rwre_lab::ballistic::{
    coupling_certificate, gambler_chain_solve, gambler_exit_left, gambler_exit_left_alt, p_plus_minus, CouplingParams,
};
use rwre_lab::cli::config::Suite;
use rwre_lab::environment::{build_two_point_law, EnvironmentLaw, Quenched};
use rwre_lab::expansion::expansion_terms;
use rwre_lab::green::{green_power_sum, green_recursion_error, phat, KilledChain, SlabOptions, SolvePolicy};
use rwre_lab::kalikow::{
    corollary_report, drift_bound_report, formula_report, kalikow_environment, sample_domains, KalikowMode,
    DEFAULT_ENUMERATION_CAP,
};
use rwre_lab::kalikow::random_connected_domain;
use rwre_lab::lattice::{make_box, make_rectangle, make_slab, Direction};
use rwre_lab::renorm::{make_scale_sequence, verify_conditions, xi_sweep};
use rwre_lab::rng::env_seed;
use rwre_lab::stats::linear_fit;
use rwre_lab::walker::{estimate_hitting_ratios, estimate_velocity, DEFAULT_STEP_CAP};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut o = f();
    let el = t.elapsed();
    o.passed &= el <= limit;
    o.detail = format!("{} [{:.1}s, limit {}s]", o.detail, el.as_secs_f64(), limit.as_secs());
    o
}

const EXACT: KalikowMode = KalikowMode::Exact { cap: DEFAULT_ENUMERATION_CAP };

fn qld_law(noise: f64) -> EnvironmentLaw {
    build_two_point_law(2, 0.2, 0.04, noise, 11).unwrap().0
}

fn kalikow_instance() -> (rwre_lab::KalikowEnvironmentF64, u64) {
    let law = qld_law(0.02);
    let b = make_rectangle(&[-1, -1], &[1, 1]).unwrap();
    let k = kalikow_environment::<f64>(&law, &b, &[0, 0], EXACT).unwrap();
    let configs = formula_report(&k).unwrap().configs;
    (k, configs)
}

fn c1_kalikow_formula() -> Outcome {
    timed(Duration::from_secs(30), || {
        let (k, configs) = kalikow_instance();
        let r = formula_report(&k).unwrap();
        outcome(
            r.max_abs_error < 1e-9 && configs == 512,
            format!("{configs} configurations, {} sites, max error {:e}", r.sites_checked, r.max_abs_error),
        )
    })
}

fn c2_kalikow_corollary() -> Outcome {
    let (k, _) = kalikow_instance();
    let r = corollary_report(&k).unwrap();
    outcome(
        r.time_error < 1e-9 && r.exit_law_error < 1e-9,
        format!("exit time error {:e}, exit law TV {:e}", r.time_error, r.exit_law_error),
    )
}

fn c3_drift_bound() -> Outcome {
    timed(Duration::from_secs(300), || {
        let law = qld_law(0.02);
        let domains = sample_domains(2, 10, 100, 5).unwrap();
        let r = drift_bound_report(&law, &domains, EXACT).unwrap();
        outcome(
            r.holds && r.max_deviation <= r.bound + 1e-12,
            format!("{} triples in {} domains: max |d·e1 - λ| = {:.6e} <= {}", r.triples, r.domains, r.max_deviation, r.bound),
        )
    })
}

fn c4_phat_identity() -> Outcome {
    let law = qld_law(0.02);
    let opts = SlabOptions { leak_tol: 1e-13, ..SlabOptions::default() };
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let env = Quenched::new(&law, env_seed(21, i));
        let r = phat::<f64>(&env, &[0, 0], 10, &opts).unwrap();
        worst = worst.max((r.direct - r.identity).abs());
    }
    outcome(worst < 1e-9, format!("50 environments, max |direct - identity| = {worst:e}"))
}

fn c5_gambler() -> Outcome {
    let (mut solve, mut alt): (f64, f64) = (0.0, 0.0);
    for pi in 1..=9 {
        let p = pi as f64 / 10.0;
        for a in 1..=20 {
            for b in 1..=20 {
                let c: f64 = gambler_exit_left(a, b, p).unwrap();
                solve = solve.max((c - gambler_chain_solve(a, b, p).unwrap()).abs());
                alt = alt.max((c - gambler_exit_left_alt(a, b, p).unwrap()).abs());
            }
        }
    }
    outcome(solve < 1e-12 && alt < 1e-14, format!("closed vs solve {solve:e}, alternate form {alt:e}"))
}

fn c6_green_invariants() -> Outcome {
    let law = qld_law(0.02);
    let policy = SolvePolicy::default();
    let (mut rec, mut mass): (f64, f64) = (0.0, 0.0);
    for i in 0..100u64 {
        let dom = random_connected_domain(2, 1 + (i as usize * 7) % 40, 300 + i).unwrap();
        let sites = Arc::new(dom.materialize(policy.site_budget).unwrap());
        let env = Quenched::new(&law, env_seed(31, i));
        let chain = KilledChain::<f64>::new(sites.clone(), &env).unwrap();
        let row = chain.factor(&policy).unwrap().green_row((i as usize) % sites.len()).unwrap();
        rec = rec.max(green_recursion_error(&chain, &row));
        mass = mass.max((row.boundary_mass() - 1.0).abs());
    }
    let mut ratios = Vec::new();
    for l in [8i64, 16, 32] {
        let slab = make_slab(Direction::e1(), l, &[0, 0], 8 * l).unwrap();
        ratios.push(green_power_sum(&slab, 0.0, &policy).unwrap() / (l * l) as f64);
    }
    let mean = ratios.iter().sum::<f64>() / 3.0;
    let spread = ratios.iter().map(|r| (r / mean - 1.0).abs()).fold(0.0, f64::max);
    outcome(
        rec < 1e-12 && mass < 1e-12 && spread <= 0.05,
        format!(
            "recursion {rec:e}, boundary mass {mass:e}, E0 T/L² = {:.4} {:.4} {:.4} (max deviation from mean {spread:.4})",
            ratios[0], ratios[1], ratios[2]
        ),
    )
}

fn c7_power_sums() -> Outcome {
    let policy = SolvePolicy::default();
    let ls = [8i64, 16, 32];
    let s3: Vec<f64> = ls
        .iter()
        .map(|&l| green_power_sum(&make_slab(Direction::e1(), l, &[0; 3], 2 * l).unwrap(), 0.5, &policy).unwrap())
        .collect();
    let xs: Vec<f64> = ls.iter().map(|l| (*l as f64).ln()).collect();
    let ys: Vec<f64> = s3.iter().map(|s| s.ln()).collect();
    let slope = linear_fit(&xs, &ys).unwrap().slope;
    let bound = 1.0 + 2.0 * 0.5 / 1.5 + 0.25;
    let s5: Vec<f64> = [16i64, 32]
        .iter()
        .map(|&l| green_power_sum(&make_slab(Direction::e1(), l, &[0; 5], l).unwrap(), 0.8, &policy).unwrap())
        .collect();
    let ratio = s5[1] / s5[0];
    outcome(
        slope <= bound && ratio < 1.3,
        format!("d=3 exponent {slope:.4} <= {bound:.4}; d=5 ratio L=32/L=16 = {ratio:.4}"),
    )
}

fn c8_velocity() -> Outcome {
    timed(Duration::from_secs(600), || match build_two_point_law(2, 0.3, 0.09, 0.0, 1) {
        Ok((law, _)) => {
            let v = estimate_velocity(&law, 10_000, 10_000, 3).unwrap();
            let ok = (v.mean - 0.09).abs() <= 0.045 + 3.0 * v.stderr;
            outcome(ok, format!("empirical consistency check: v = {:.5} ± {:.5}", v.mean, v.stderr))
        }
        Err(e) => outcome(false, format!("law not constructible: {e}")),
    })
}

fn c9_lln() -> Outcome {
    match build_two_point_law(2, 0.3, 0.09, 0.0, 1) {
        Ok((law, _)) => {
            let v = estimate_velocity(&law, 10_000, 10_000, 3).unwrap();
            let h = &estimate_hitting_ratios(&law, &[2000], 2000, DEFAULT_STEP_CAP, 4).unwrap()[0];
            let se = v.stderr / (v.mean * v.mean);
            let ok = h.estimate.agrees_with(1.0 / v.mean, se, 4.0);
            outcome(ok, format!("T_n/n = {:.4}, 1/v = {:.4}", h.estimate.mean, 1.0 / v.mean))
        }
        Err(e) => outcome(false, format!("law not constructible: {e}")),
    }
}

/// Criteria 8 and 9 at ε = 0.2, λ = ε² = 0.04 (ceiling 0.05).
fn supplementary_velocity_lln() -> Outcome {
    let (law, _) = build_two_point_law(2, 0.2, 0.04, 0.0, 1).unwrap();
    let v = estimate_velocity(&law, 10_000, 10_000, 3).unwrap();
    let h = &estimate_hitting_ratios(&law, &[2000], 2000, DEFAULT_STEP_CAP, 4).unwrap()[0];
    let vel_ok = (v.mean - 0.04).abs() <= 0.02 + 3.0 * v.stderr;
    let se = v.stderr / (v.mean * v.mean);
    let lln_ok = h.capped == 0 && h.estimate.agrees_with(1.0 / v.mean, se, 4.0);
    outcome(
        vel_ok && lln_ok,
        format!(
            "ε=0.2, λ=0.04: v = {:.5} ± {:.5} (target band ε²/d = 0.02); T_n/n = {:.3} ± {:.3} vs 1/v = {:.3} ± {:.3}",
            v.mean, v.stderr, h.estimate.mean, h.estimate.stderr, 1.0 / v.mean, se
        ),
    )
}

fn c10_expansion() -> Outcome {
    let (law, _) = build_two_point_law(3, 0.2, 0.03, 0.02, 1).unwrap();
    let r = expansion_terms(&law, 50).unwrap();
    let d2 = r.d2.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let ok = r.row_sum_max < 1e-14 && r.j_anisotropy <= r.j_error && d2 < 1e-6 && r.lambda_gap == 0.0;
    outcome(
        ok,
        format!(
            "row sums {:e}, J spread {:e} (bar {:e}), |d2| {:e}, |ε d1·e1 - λ| = {:e}",
            r.row_sum_max, r.j_anisotropy, r.j_error, d2, r.lambda_gap
        ),
    )
}

fn c11_renorm() -> Outcome {
    timed(Duration::from_secs(60), || {
        let seq = make_scale_sequence(0.5, 0.5, 1000, None).unwrap();
        let audit = verify_conditions(&seq);
        let c15 = audit.all_hold(&["C1", "C2", "C3", "C4", "C5"]);
        let k_ok = seq.big_k == 1408u32.into();
        let a0_ok = seq.alpha[0] == num_bigint::BigUint::from(1409u32).pow(5);
        let xi = xi_sweep(1_000_000);
        let ok = c15 && k_ok && a0_ok && xi.above_half && xi.decreasing && audit.c7.product_gap < 1e-12;
        outcome(
            ok,
            format!(
                "C1-C5 {c15}, K = {}, α0 = 1409^5 {a0_ok}, Ξ above 1/2 and decreasing to k=1e6: {}, C7 gap {:e}",
                seq.big_k,
                xi.above_half && xi.decreasing,
                audit.c7.product_gap
            ),
        )
    })
}

fn c12_coupling() -> Outcome {
    // Low-disorder regime at d=2: λ = 0.012 >= ε^{2-η} for η >= 0.47.
    let (law, _) = build_two_point_law(2, 0.05, 0.012, 0.0, 1).unwrap();
    let (l, delta) = (10i64, 0.25);
    let opts = SlabOptions { leak_tol: 1e-9, ..SlabOptions::default() };
    let th = p_plus_minus(&law, delta, l, 20, 5, None, &opts).unwrap();
    let dom = make_box(4 * l, &[0, 0], u128::MAX).unwrap();
    let params = CouplingParams { l, target: 4, p: th.p_minus, max_jumps: 400 };
    let s = coupling_certificate(&law, &dom, &[0, 0], &params, 10, 100, 9, &opts).unwrap();
    outcome(
        s.runs == 1000 && s.certified_runs == s.runs && s.violations == 0 && s.order_violations == 0,
        format!(
            "{} runs, {} certified (p = p- = {:.5}, min p̂ - p = {:.3e}), {} domination violations",
            s.runs, s.certified_runs, s.p, s.min_phat_margin, s.violations + s.order_violations
        ),
    )
}

fn run_cli(suite: Suite, cfg: &Path, out: &Path, threads: usize) -> (i32, Vec<u8>, Vec<u8>) {
    let status = Command::new(env!("CARGO_BIN_EXE_rwre-lab"))
        .arg(suite.name())
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .output()
        .unwrap();
    let read = |ext: &str| std::fs::read(out.join(format!("{}.{ext}", suite.name()))).unwrap_or_default();
    (status.status.code().unwrap_or(-1), read("csv"), read("json"))
}

fn c13_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut mismatched = Vec::new();
    for suite in Suite::ALL {
        let cfg = dir.path().join(format!("{}.config.json", suite.name()));
        let budgets = match suite {
            Suite::Velocity | Suite::PolynomialProbe | Suite::Tgamma => r#"{"n_walks":300,"n_steps":300,"hitting_level":20}"#,
            Suite::PhatIdentity | Suite::BoxClassify => r#"{"n_envs":4}"#,
            _ => "{}",
        };
        let text = format!(r#"{{"version":1,"experiment":"{}","master_seed":77,"budgets":{budgets}}}"#, suite.name());
        std::fs::write(&cfg, text).unwrap();
        let runs: Vec<_> = [1usize, 4, 4]
            .iter()
            .enumerate()
            .map(|(i, t)| run_cli(suite, &cfg, &dir.path().join(format!("{}-{i}", suite.name())), *t))
            .collect();
        let same = runs.iter().all(|r| r.0 == runs[0].0 && r.1 == runs[0].1 && r.2 == runs[0].2);
        if !same || runs[0].1.is_empty() || !(runs[0].0 == 0 || runs[0].0 == 1) {
            mismatched.push(suite.name());
        }
    }
    outcome(mismatched.is_empty(), format!("10 suites x (threads 1, 4, 4); differing: {mismatched:?}"))
}

/// Criteria whose stated parameters are infeasible; expected to FAIL.
const INFEASIBLE: [usize; 2] = [8, 9];

#[test]
fn acceptance() {
    let criteria: Vec<(usize, &str, fn() -> Outcome)> = vec![
        (1, "Kalikow formula on the 3x3 box", c1_kalikow_formula),
        (2, "Kalikow exit time and exit law", c2_kalikow_corollary),
        (3, "Kalikow drift bound", c3_drift_bound),
        (4, "p̂ absorption vs Green identity", c4_phat_identity),
        (5, "gambler's ruin forms", c5_gambler),
        (6, "Green invariants and E0 T/L²", c6_green_invariants),
        (7, "Green power-sum scaling", c7_power_sums),
        (8, "velocity at d=2, ε=0.3, λ=0.09", c8_velocity),
        (9, "hitting-time LLN at d=2, ε=0.3, λ=0.09", c9_lln),
        (10, "low-disorder expansion terms", c10_expansion),
        (11, "renormalization arithmetic", c11_renorm),
        (12, "coupling certificate", c12_coupling),
        (13, "determinism across reruns and threads", c13_determinism),
    ];
    let mut unexpected = Vec::new();
    for (i, name, f) in criteria {
        let o = f();
        println!("{} criterion {i:>2} ({name}): {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        if o.passed == INFEASIBLE.contains(&i) {
            unexpected.push(i);
        }
        if INFEASIBLE.contains(&i) {
            assert!(o.detail.contains("drift ceiling"), "criterion {i}: {}", o.detail);
        }
    }
    let s = supplementary_velocity_lln();
    println!("{} supplementary (criteria 8, 9 at feasible parameters): {}", if s.passed { "PASS" } else { "FAIL" }, s.detail);
    assert!(s.passed);
    assert!(unexpected.is_empty(), "criteria with unexpected outcome: {unexpected:?}");
}
