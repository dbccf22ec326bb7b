//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --release -p propcoloc --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use propcoloc::calibration::{
    c_star_oracle, chisq_ks, m_star_fuzz, optimizer_oracle, sparse_signal, Check,
};
use propcoloc::sim::{run_experiment, Design, RejectionTable, SimConfig, SIM_NU};
use propcoloc::Method;

const SEED: u64 = 20240601;
const REPS: usize = 1000;

struct Outcome {
    id: usize,
    passed: bool,
    summary: String,
}

fn config(n: usize, j: usize, xi: f64, eta0: f64) -> SimConfig {
    let mut c = SimConfig::single(n, j, xi, eta0);
    c.replicates = REPS;
    c.seed = SEED;
    c
}

fn threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn simulate(grid: &[SimConfig], methods: &[Method]) -> RejectionTable {
    run_experiment(grid, methods, threads()).expect("simulation grid is valid")
}

fn rate(t: &RejectionTable, gi: usize, m: Method) -> f64 {
    t.get(gi, m).expect("row exists").rejection_rate
}

fn describe(t: &RejectionTable, gi: usize, m: Method) -> String {
    let r = t.get(gi, m).expect("row exists");
    format!(
        "{} rate {:.3} over {} replicates ({} failed)",
        m.as_str(),
        r.rejection_rate,
        r.replicates,
        r.failures
    )
}

fn in_range(v: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v)
}

fn c1_c2() -> Vec<Outcome> {
    let t0 = Instant::now();
    let t = simulate(&[config(5000, 20, 1.0, 1.0)], &[Method::Naive, Method::Conditional]);
    let secs = t0.elapsed().as_secs_f64();
    let naive = rate(&t, 0, Method::Naive);
    let cond = rate(&t, 0, Method::Conditional);
    vec![
        Outcome {
            id: 1,
            passed: naive >= 0.15,
            summary: format!(
                "naive size inflation: {} (need >= 0.15); naive and cond together took {secs:.0} s",
                describe(&t, 0, Method::Naive)
            ),
        },
        Outcome {
            id: 2,
            passed: in_range(cond, 0.02, 0.10),
            summary: format!(
                "conditional size control: {} (need in [0.02, 0.10])",
                describe(&t, 0, Method::Conditional)
            ),
        },
    ]
}

fn c3() -> Outcome {
    let t = simulate(&[config(500, 40, 1.0, 0.5), config(500, 40, 1.0, 1.0)], &[Method::Full]);
    let (a, b) = (rate(&t, 0, Method::Full), rate(&t, 1, Method::Full));
    Outcome {
        id: 3,
        passed: a > 0.1 && b > 0.1,
        summary: format!("full test at n = 500, J = 40: eta0 0.5 {a:.3}, eta0 1 {b:.3} (need both > 0.1)"),
    }
}

fn c4() -> Outcome {
    let t = simulate(&[config(1000, 20, 0.7, 0.5), config(1000, 20, 0.9, 0.5)], &[Method::Conditional]);
    let (p7, p9) = (rate(&t, 0, Method::Conditional), rate(&t, 1, Method::Conditional));
    Outcome {
        id: 4,
        passed: p7 - p9 >= 0.2 && in_range(p7, 0.75, 1.0) && in_range(p9, 0.2, 0.6),
        summary: format!(
            "conditional power: xi 0.7 {p7:.3} (need [0.75, 1]), xi 0.9 {p9:.3} (need [0.2, 0.6]), drop {:.3} (need >= 0.2)",
            p7 - p9
        ),
    }
}

fn c5() -> Outcome {
    let mut c = config(1000, 20, 0.5, 0.5);
    c.design = Design::MultiCausal;
    c.delta = 0.2;
    let t = simulate(&[c], &[Method::Full, Method::Conditional]);
    let (full, cond) = (rate(&t, 0, Method::Full), rate(&t, 0, Method::Conditional));
    Outcome {
        id: 5,
        passed: cond >= 1.15 * full,
        summary: format!(
            "non-proportional alternative: cond {cond:.3}, full {full:.3}, ratio {:.3} (need >= 1.15)",
            cond / full
        ),
    }
}

fn c6() -> Outcome {
    let j = 20;
    let mut unpruned = config(1000, j, 1.0, 0.5);
    unpruned.lambda = Some(2 * j);
    let mut pruned = unpruned.clone();
    pruned.prune_r2 = Some(0.1);
    let t = simulate(&[unpruned, pruned], &[Method::Full, Method::Conditional]);
    let raw = rate(&t, 0, Method::Full);
    let pr = rate(&t, 1, Method::Full);
    let cond = rate(&t, 1, Method::Conditional);
    Outcome {
        id: 6,
        passed: raw - pr >= 0.05 && (pr - cond).abs() <= 0.05,
        summary: format!(
            "mis-measured LD (lambda = 2J): full unpruned {raw:.3}, full pruned {pr:.3} (gap {:.3}, need >= 0.05), cond pruned {cond:.3} (|diff| {:.3}, need <= 0.05)",
            raw - pr,
            (pr - cond).abs()
        ),
    }
}

fn from_checks(id: usize, label: &str, checks: &[Check]) -> Outcome {
    let passed = checks.iter().all(|c| c.passed);
    let parts: Vec<String> = checks.iter().map(|c| c.to_string()).collect();
    Outcome { id, passed, summary: format!("{label}: {}", parts.join("; ")) }
}

fn c7() -> Outcome {
    let checks: Vec<Check> = [3, 10]
        .into_iter()
        .map(|j| chisq_ks(j, 10_000, 2000, SEED).expect("null instance is valid"))
        .collect();
    from_checks(7, "chi-square calibration", &checks)
}

fn c8() -> Outcome {
    let mut checks = vec![m_star_fuzz(1000, SEED).check()];
    checks.extend(c_star_oracle(5000, SEED).expect("oracle instance is valid").checks());
    checks.extend(sparse_signal(10_000, SEED).expect("sparse instance is valid").checks());
    from_checks(8, "conditional machinery", &checks)
}

fn c9() -> Outcome {
    let grid = [config(500, 20, 1.0, 0.0), config(5000, 20, 1.0, 0.0), config(5000, 20, 1.0, 0.5)];
    let t = simulate(&grid, &[Method::Lm]);
    let (s1, s2, pw) = (rate(&t, 0, Method::Lm), rate(&t, 1, Method::Lm), rate(&t, 2, Method::Lm));
    Outcome {
        id: 9,
        passed: in_range(s1, 0.03, 0.08) && in_range(s2, 0.03, 0.08) && pw >= 0.9,
        summary: format!(
            "LM test: size n=500 {s1:.3}, n=5000 {s2:.3} (need [0.03, 0.08]); power eta0 0.5 n=5000 {pw:.3} (need >= 0.9)"
        ),
    }
}

fn c10() -> Outcome {
    let r = optimizer_oracle(200, 1_000_000, SEED).expect("oracle instances are valid");
    from_checks(10, "optimizer", &r.checks())
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored.
    println!("acceptance suite: {REPS} replicates per point, level {SIM_NU}, seed {SEED}");
    let start = Instant::now();
    let mut outcomes = Vec::new();
    let mut report = |o: Vec<Outcome>| {
        for o in o {
            println!("{} C{}: {}", if o.passed { "PASS" } else { "FAIL" }, o.id, o.summary);
            outcomes.push(o.passed);
        }
    };
    report(c1_c2());
    report(vec![c3()]);
    report(vec![c4()]);
    report(vec![c5()]);
    report(vec![c6()]);
    report(vec![c7()]);
    report(vec![c8()]);
    report(vec![c9()]);
    report(vec![c10()]);
    let failed = outcomes.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.0} s",
        outcomes.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
