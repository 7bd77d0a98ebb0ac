//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `cargo test --test acceptance -- 3 8` runs only the numbered criteria.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uacer::config::RunConfig;
use uacer::export;
use uacer::harness::{self, ensemble_variance_ratio, stability_metric, validate_theorem1, OracleSpec};
use uacer::nn::{Activation, InitConfig, Mlp};
use uacer::sac::Variant;
use uacer::tdu::{aggregate_with_beta, AggregationMode, TduSchedule};
use uacer::Exec;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn within_time(v: Verdict, elapsed: Duration, limit: Duration) -> Verdict {
    let ok = elapsed <= limit;
    Verdict::new(
        v.pass && ok,
        format!(
            "{}; {:.1}s (limit {}s)",
            v.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        ),
    )
}

// 1

fn weighted_output(net: &Mlp, x: &Array2<f64>, g: &Array2<f64>) -> f64 {
    (net.forward_batch(x.view()).unwrap() * g).sum()
}

fn near_kink(net: &Mlp, x: &Array2<f64>) -> bool {
    let (_, tape) = net.forward_tape(x.view()).unwrap();
    (0..tape.num_layers()).any(|i| {
        matches!(net.layers()[i].activation, Activation::Relu | Activation::LeakyRelu)
            && tape.pre_activation(i).iter().any(|z| z.abs() < 1e-4)
    })
}

fn relative_gap(fd: f64, an: f64) -> f64 {
    let scale = fd.abs().max(an.abs());
    if scale < 1e-7 {
        0.0
    } else {
        (fd - an).abs() / scale
    }
}

fn gradient_exactness() -> Verdict {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for _ in 0..20 {
        let depth = rng.random_range(1..=3);
        let mut dims = vec![rng.random_range(1..=6)];
        dims.extend((0..depth).map(|_| rng.random_range(1..=16)));
        dims.push(rng.random_range(1..=3));
        let hidden: Vec<Activation> = (0..depth)
            .map(|_| Activation::DIVERSE[rng.random_range(0..3)])
            .collect();
        let mut net = Mlp::new(&dims, &hidden, InitConfig { param_noise_std: 0.01 }, &mut rng).unwrap();
        let batch = 4;
        let mut x = Array2::zeros((batch, dims[0]));
        for _ in 0..100 {
            x = Array2::from_shape_fn((batch, dims[0]), |_| rng.random_range(-2.0..2.0));
            if !near_kink(&net, &x) {
                break;
            }
        }
        let g = Array2::from_shape_fn((batch, dims[dims.len() - 1]), |_| rng.random_range(-1.0..1.0));
        let (_, tape) = net.forward_tape(x.view()).unwrap();
        let grads = net.backward(&tape, g.view()).unwrap();
        for l in 0..net.layers().len() {
            let (rows, cols) = net.layers()[l].weights.dim();
            for r in 0..rows {
                for c in 0..=cols {
                    let read = |n: &Mlp| {
                        if c < cols {
                            n.layers()[l].weights[[r, c]]
                        } else {
                            n.layers()[l].bias[r]
                        }
                    };
                    let p0 = read(&net);
                    let set = |n: &mut Mlp, v: f64| {
                        if c < cols {
                            n.layers_mut()[l].weights[[r, c]] = v;
                        } else {
                            n.layers_mut()[l].bias[r] = v;
                        }
                    };
                    set(&mut net, p0 + H);
                    let up = weighted_output(&net, &x, &g);
                    set(&mut net, p0 - H);
                    let down = weighted_output(&net, &x, &g);
                    set(&mut net, p0);
                    let fd = (up - down) / (2.0 * H);
                    let an = if c < cols {
                        grads.weights[l][[r, c]]
                    } else {
                        grads.biases[l][r]
                    };
                    worst = worst.max(relative_gap(fd, an));
                    checked += 1;
                }
            }
        }
    }
    Verdict::new(
        worst <= 1e-4,
        format!("{checked} parameters, max relative gap {worst:.2e} (tol 1e-4)"),
    )
}

// 2

fn two_pass_oracle(q: &[f64]) -> (f64, f64) {
    let mut s = q.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut total = 0.0;
    for v in &s {
        total += v;
    }
    let mean = total / n;
    let mut ss = 0.0;
    for v in &s {
        ss += (v - mean) * (v - mean);
    }
    (mean, ss / (n - 1.0))
}

fn tdu_algebra() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = Vec::new();
    for case in 0..10_000 {
        let k = rng.random_range(2..=10);
        let q: Vec<f64> = (0..k).map(|_| rng.random_range(-500.0..500.0)).collect();
        let beta = rng.random_range(0.0..1.5);
        let shift = rng.random_range(-100.0..100.0);
        let mode = AggregationMode::ALL[case % AggregationMode::ALL.len()];
        let r = aggregate_with_beta(&q, mode, beta).unwrap();

        let mut p = q.clone();
        for i in (1..k).rev() {
            p.swap(i, rng.random_range(0..=i));
        }
        if aggregate_with_beta(&p, mode, beta).unwrap() != r {
            failures.push(format!("case {case}: permutation"));
        }
        let shifted: Vec<f64> = q.iter().map(|v| v + shift).collect();
        let s = aggregate_with_beta(&shifted, mode, beta).unwrap();
        if (s.q_e - r.q_e - shift).abs() > 1e-9 * (1.0 + r.q_e.abs() + shift.abs()) {
            failures.push(format!("case {case}: translation"));
        }
        let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo <= r.mean && r.mean <= hi) {
            failures.push(format!("case {case}: mean outside [min, max]"));
        }
        let (mean, var) = two_pass_oracle(&q);
        if r.mean != mean || r.std != var.sqrt() {
            failures.push(format!("case {case}: Bessel variance"));
        }
    }
    Verdict::new(
        failures.is_empty(),
        if failures.is_empty() {
            "10000 inputs".to_string()
        } else {
            format!("{} failures, first: {}", failures.len(), failures[0])
        },
    )
}

// 3

fn schedule_endpoints() -> Verdict {
    // 0.85 e^-3 + 0.15 to 20 digits
    #[allow(clippy::excessive_precision)]
    const BETA_N: f64 = 0.192_319_008_112_684_351_53;
    let s = TduSchedule::exponential(200);
    let b0 = s.beta(0).unwrap();
    let bn = s.beta(200).unwrap();
    Verdict::new(
        b0 == 1.0 && (bn - BETA_N).abs() <= 1e-12,
        format!("beta(0) = {b0}, beta(N) = {bn:.17}, gap {:.1e}", (bn - BETA_N).abs()),
    )
}

// 4

fn theorem1() -> Verdict {
    let spec = OracleSpec::new(1.0, 5, TduSchedule::exponential(200), 100_000);
    let r = validate_theorem1(&spec, Exec::Parallel).unwrap();
    let bound_ok = r.abs_error.mean <= r.decomposition_bound + 3.0 * r.abs_error.stderr;

    let vanishing = TduSchedule::new(1.0, 0.0, 3.0, 200, AggregationMode::TduExponential).unwrap();
    let limit = validate_theorem1(
        &OracleSpec {
            seed: 1,
            ..OracleSpec::new(1.0, 5, vanishing, 100_000)
        },
        Exec::Parallel,
    )
    .unwrap();
    Verdict::new(
        bound_ok && limit.limit_matches_folded_normal(),
        format!(
            "E|Q_E - Q*| = {:.4} +- {:.4} vs bound {:.4}; beta_min = 0 limit {:.4} +- {:.4} vs {:.4}",
            r.abs_error.mean,
            r.abs_error.stderr,
            r.decomposition_bound,
            limit.limit_abs_error.mean,
            limit.limit_abs_error.stderr,
            limit.folded_normal
        ),
    )
}

// 5

fn variance_reduction() -> Verdict {
    let spec = OracleSpec::new(1.0, 5, TduSchedule::exponential(200), 100_000);
    let ratio = ensemble_variance_ratio(&spec, Exec::Parallel).unwrap();
    Verdict::new(
        (0.15..=0.27).contains(&ratio),
        format!("ratio {ratio:.4} (target 0.2, band [0.15, 0.27])"),
    )
}

/// Point-mass settings shared by the training criteria.
fn desk_config() -> RunConfig {
    RunConfig {
        horizon: 100,
        iterations: 60,
        eval_interval: 5,
        hidden: vec![32, 32],
        batch_size: 64,
        initial_replay: 500,
        warmup: 1000,
        ..RunConfig::default()
    }
}

// 6

fn contracts_smoke() -> Verdict {
    let cfg = RunConfig {
        iterations: 20,
        seeds: vec![0],
        ..desk_config()
    };
    match harness::train(&cfg, 0, None) {
        Ok(out) => {
            let expected = 2 * 20 * cfg.episodes_per_iteration;
            let ok = out.checks.zero_sum_episodes == expected && out.checks.frozen_phases == 40;
            Verdict::new(
                ok,
                format!(
                    "{} zero-sum episodes and {} frozen phases checked, 0 violations",
                    out.checks.zero_sum_episodes, out.checks.frozen_phases
                ),
            )
        }
        Err(e) => Verdict::new(false, format!("run aborted: {e}")),
    }
}

// 7

fn directional() -> Verdict {
    let base = RunConfig {
        seeds: (0..5).collect(),
        ..desk_config()
    };
    let finals = |variant: Variant| -> Vec<f64> {
        let cfg = RunConfig {
            variant,
            ..base.clone()
        };
        harness::train_seeds(&cfg, None)
            .unwrap()
            .iter()
            .map(|o| o.final_robustness().unwrap())
            .collect()
    };
    let full = finals(Variant::Full);
    let no_ens = finals(Variant::NoEnsemble);
    let p_min = finals(Variant::PessimismMin);
    let wins = |other: &[f64]| full.iter().zip(other).filter(|(f, o)| f >= o).count();
    let (w1, w2) = (wins(&no_ens), wins(&p_min));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(" ");
    Verdict::new(
        w1 >= 4 && w2 >= 4,
        format!(
            "full >= no_ensemble in {w1}/5, full >= pessimism_min in {w2}/5 [full {}] [no_ensemble {}] [pessimism_min {}]",
            fmt(&full),
            fmt(&no_ens),
            fmt(&p_min)
        ),
    )
}

// 8

fn stability_oracle() -> Verdict {
    let cases: [(&[f64], f64); 10] = [
        (&[200.0, 150.0, 180.0, 90.0], 25.0),
        (&[1.0, 2.0, 3.0], 0.0),
        (&[5.0, 5.0, 5.0], 0.0),
        (&[-100.0, -150.0], 50.0),
        (&[100.0, 50.0], 50.0),
        (&[80.0, 60.0, 30.0], 37.5),
        (&[-200.0, -100.0, -300.0], 100.0),
        (&[0.0, 10.0, 5.0], 50.0),
        (&[10.0, 0.0], 100.0),
        (&[64.0, 48.0, 48.0, 12.0, 24.0], 25.0),
    ];
    let bad: Vec<String> = cases
        .iter()
        .filter_map(|(s, want)| {
            let got = stability_metric(s).ok();
            (got != Some(*want)).then(|| format!("{s:?}: got {got:?}, want {want}"))
        })
        .collect();
    Verdict::new(
        bad.is_empty(),
        if bad.is_empty() {
            "10 series exact".into()
        } else {
            bad.join("; ")
        },
    )
}

// 9

fn determinism(scratch: &Path) -> Verdict {
    let cfg = RunConfig {
        iterations: 8,
        eval_interval: 4,
        seeds: vec![3],
        ..desk_config()
    };
    let bytes = |tag: &str| {
        let out = scratch.join(tag);
        let outcomes = harness::train_seeds(&cfg, None).unwrap();
        export::export_run(&out, &cfg, &outcomes, &[]).unwrap();
        std::fs::read(export::seed_dir(&out, 3).join("metrics.csv")).unwrap()
    };
    let a = bytes("a");
    let b = bytes("b");
    Verdict::new(
        a == b && !a.is_empty(),
        format!("{} bytes, identical = {}", a.len(), a == b),
    )
}

// 10

fn k_sweep() -> Verdict {
    let cfg = RunConfig {
        iterations: 10,
        eval_interval: 5,
        horizon: 50,
        seeds: vec![0],
        ..desk_config()
    };
    let ks = [2, 3, 5, 7, 10];
    match harness::sweep_k(&cfg, &ks, cfg.exec()) {
        Ok(entries) => {
            let ok = entries.len() == ks.len() && entries.iter().zip(ks).all(|(e, k)| e.k == k && e.mean.is_finite());
            let line = entries
                .iter()
                .map(|e| format!("K={} {:.1}", e.k, e.mean))
                .collect::<Vec<_>>()
                .join(", ");
            Verdict::new(ok, line)
        }
        Err(e) => Verdict::new(false, format!("sweep failed: {e}")),
    }
}

type Criterion<'a> = (&'static str, Duration, Box<dyn Fn() -> Verdict + 'a>);

fn main() -> ExitCode {
    uacer::exec::init_workers_from_env();
    let scratch = tempfile::tempdir().unwrap();
    let criteria: Vec<Criterion<'_>> = vec![
        (
            "1 gradient exactness",
            Duration::from_secs(10),
            Box::new(gradient_exactness),
        ),
        ("2 aggregation algebra", Duration::from_secs(5), Box::new(tdu_algebra)),
        ("3 schedule endpoints", Duration::MAX, Box::new(schedule_endpoints)),
        ("4 Monte-Carlo bias", Duration::from_secs(30), Box::new(theorem1)),
        ("5 variance reduction", Duration::MAX, Box::new(variance_reduction)),
        (
            "6 zero-sum and freeze contracts",
            Duration::from_secs(300),
            Box::new(contracts_smoke),
        ),
        (
            "7 directional reproduction",
            Duration::from_secs(7200),
            Box::new(directional),
        ),
        ("8 stability metric", Duration::MAX, Box::new(stability_oracle)),
        ("9 determinism", Duration::MAX, Box::new(|| determinism(scratch.path()))),
        ("10 K sweep", Duration::MAX, Box::new(k_sweep)),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| a.parse::<u32>().is_ok()).collect();
    let selected: Vec<_> = criteria
        .iter()
        .filter(|(name, _, _)| only.is_empty() || only.iter().any(|o| name.split(' ').next() == Some(o.as_str())))
        .collect();
    let mut failed = 0;
    for (name, limit, run) in &selected {
        let started = Instant::now();
        let mut v = run();
        if *limit != Duration::MAX {
            v = within_time(v, started.elapsed(), *limit);
        }
        if !v.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("{} of {} criteria passed", selected.len() - failed, selected.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
