//! End-to-end acceptance checks.
//!
//! Runs as a plain binary so that every check prints one line with its
//! measured value and tolerance. Checks listed in `KNOWN_RED` are reported
//! but do not fail the run unless `DIPCERT_STRICT=1` is set.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use dipcert::certificates::{
    lip_bound, loss_rate_curve, overparam_requirement, radius_r, sigma0, sigma0_theory_floor,
    OverparamInputs, RateSchedule,
};
use dipcert::experiments::stats::increasing_trend;
use dipcert::experiments::{
    run_experiment, run_noise_sweep, run_p_sweep, run_phase_heatmap, ExperimentConfig,
    ExperimentKind, InstanceBuilder, Preset,
};
use dipcert::linalg::{norm, spectral_norm, sub_vec};
use dipcert::losses::desingularizing_constants;
use dipcert::model::activation_constants;
use dipcert::trainer::{early_stop_iteration, RecordFlags, TrainConfig};
use dipcert::{
    ActivationKind, Desingularizer, KLLoss, Layers, ParamVector, SeededRng, TwoLayerNet,
};

const KNOWN_RED: &[&str] = &["phase_top_row_small_n", "noise_free_signal_error"];

const ACTIVATIONS: [ActivationKind; 3] =
    [ActivationKind::Sigmoid, ActivationKind::Tanh, ActivationKind::Softplus];

type Section<'a> = (&'static str, Box<dyn Fn() -> Vec<Check> + 'a>);

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn log_uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    rng.uniform(lo.ln(), hi.ln()).exp()
}

fn int_in(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    (lo + (rng.uniform(0.0, (hi - lo + 1) as f64) as usize)).min(hi)
}

fn perturbed(net: &TwoLayerNet, rng: &mut SeededRng, scale: f64) -> TwoLayerNet {
    let theta: Vec<f64> = net
        .params()
        .0
        .iter()
        .map(|t| t + scale * rng.standard_normal())
        .collect();
    net.with_params(&ParamVector(theta)).unwrap()
}

fn jacobian_matches_finite_differences() -> Vec<Check> {
    let h = 1e-5;
    let tol = 1e-6;
    let mut rng = SeededRng::new(101, 0);
    let mut worst: f64 = 0.0;
    let mut configs = 0;
    for i in 0..100 {
        let layers = if i % 2 == 0 { Layers::FixedV } else { Layers::Both };
        let k = int_in(&mut rng, 1, 20);
        let d = int_in(&mut rng, 1, 5);
        let n = int_in(&mut rng, 1, 8);
        let act = ACTIVATIONS[i % 3];
        let net = TwoLayerNet::init(k, d, n, layers, act, &mut rng).unwrap();
        let net = perturbed(&net, &mut rng, 0.5);
        let jac = net.jacobian();
        let theta = net.params().0;
        let mut err2 = 0.0;
        for j in 0..theta.len() {
            let mut plus = theta.clone();
            plus[j] += h;
            let mut minus = theta.clone();
            minus[j] -= h;
            let fp = net.with_params(&ParamVector(plus)).unwrap().forward();
            let fm = net.with_params(&ParamVector(minus)).unwrap().forward();
            for r in 0..n {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                err2 += (jac.get(r, j) - fd).powi(2);
            }
        }
        worst = worst.max(err2.sqrt() / jac.frobenius_norm());
        configs += 1;
    }
    vec![check(
        "jacobian_finite_differences",
        worst <= tol,
        format!("max relative Frobenius error {worst:.2e} <= {tol:.0e} over {configs} configurations"),
    )]
}

fn loss_saturates_lojasiewicz() -> Vec<Check> {
    let tol = 1e-9;
    let mut rng = SeededRng::new(102, 0);
    let (mut worst_grad, mut worst_psi): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let p = rng.uniform(0.0, 1.0);
        let m = int_in(&mut rng, 1, 6);
        let w = log_uniform(&mut rng, 0.5, 4.0);
        let scale = log_uniform(&mut rng, 1e-2, 1e2);
        let y = rng.normal_vec(m);
        let v: Vec<f64> = y.iter().map(|yi| yi + scale * rng.standard_normal()).collect();
        let loss = KLLoss::new(p, y.clone()).unwrap().with_weight(w).unwrap();
        let desing = loss.desingularizer();
        let l = loss.value(&v).unwrap();
        let g = norm(&loss.gradient(&v).unwrap());
        worst_grad = worst_grad.max((desing.psi_prime(l).unwrap() * g - 1.0).abs());
        worst_psi = worst_psi.max(rel(desing.psi(l).unwrap(), norm(&sub_vec(&v, &y))));
    }
    vec![
        check(
            "lojasiewicz_equality",
            worst_grad <= tol,
            format!("max |psi'(L)|grad L| - 1| = {worst_grad:.2e} <= {tol:.0e} over 1000 samples"),
        ),
        check(
            "desingularizer_recovers_residual",
            worst_psi <= tol,
            format!("max relative |psi(L) - |v - y|| = {worst_psi:.2e} <= {tol:.0e} over 1000 samples"),
        ),
    ]
}

fn primitive_and_inverse() -> Vec<Check> {
    let (tol_d, tol_inv) = (1e-6, 1e-9);
    let (mut worst_d, mut worst_inv): (f64, f64) = (0.0, 0.0);
    let mut points = 0;
    for &alpha in &[0.1, 0.25, 0.416, 0.5] {
        let desing = Desingularizer::new(alpha, 1.3).unwrap();
        for i in 0..=200 {
            let s = 10f64.powf(-6.0 + 9.0 * i as f64 / 200.0);
            let h = s * 1e-5;
            let num = (desing.big_psi(s + h).unwrap() - desing.big_psi(s - h).unwrap()) / (2.0 * h);
            let exact = -desing.psi_prime(s).unwrap().powi(2);
            worst_d = worst_d.max(rel(num, exact));
            let back = desing.big_psi_inv(desing.big_psi(s).unwrap()).unwrap();
            worst_inv = worst_inv.max(rel(back, s));
            points += 1;
        }
    }
    vec![
        check(
            "primitive_derivative",
            worst_d <= tol_d,
            format!("max relative error of numerical Psi' vs -psi'^2 = {worst_d:.2e} <= {tol_d:.0e} at {points} points"),
        ),
        check(
            "primitive_inverse_roundtrip",
            worst_inv <= tol_inv,
            format!("max relative error of Psi^-1(Psi(s)) = {worst_inv:.2e} <= {tol_inv:.0e} at {points} points"),
        ),
    ]
}

fn gated_descent_follows_certificate() -> Vec<Check> {
    let seeds = 50;
    let (mut descent, mut sigma, mut drift, mut rate) = (0, 0, 0, 0);
    let mut points = 0;
    let mut converged = 0;
    let mut failed = Vec::new();
    for seed in 0..seeds {
        let builder = InstanceBuilder::new(4, 4, 2000, 20).seed(seed);
        let (inst, cert) = match builder.build_gated(0.9) {
            Ok(v) => v,
            Err(e) => {
                failed.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let cfg = TrainConfig {
            trace_stride: 1,
            ..TrainConfig::default()
        };
        let trace = match inst.train(&cfg) {
            Ok(t) => t,
            Err(e) => {
                failed.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        converged += usize::from(trace.converged);
        let l0 = trace.records[0].loss;
        for w in trace.records.windows(2) {
            descent += usize::from(w[1].loss > w[0].loss);
        }
        for r in &trace.records {
            points += 1;
            sigma += usize::from(r.sigma_min_j.unwrap() < cert.sigma0 / 2.0);
            drift += usize::from(r.theta_drift.unwrap() > cert.r_prime);
            rate += usize::from(r.loss > cert.rate_base.powf(r.iter as f64) * l0);
        }
    }
    let ok = failed.is_empty();
    let ctx = format!("{points} iterates of {seeds} gated instances, {converged} converged");
    let mut out = vec![
        check("gated_monotone_descent", ok && descent == 0, format!("{descent} loss increases over {ctx}")),
        check(
            "gated_jacobian_conditioning",
            ok && sigma == 0,
            format!("{sigma} iterates with sigma_min(J) < sigma0/2 over {ctx}"),
        ),
        check("gated_parameter_drift", ok && drift == 0, format!("{drift} iterates with drift > R' over {ctx}")),
        check(
            "gated_geometric_rate",
            ok && rate == 0,
            format!("{rate} iterates above rate_base^t L0 over {ctx}"),
        ),
    ];
    if !ok {
        out.push(check("gated_instances_available", false, failed.join("; ")));
    }
    out
}

fn sigma0_concentrates() -> Vec<Check> {
    let consts = activation_constants("sigmoid").unwrap();
    [(Layers::FixedV, "sigma0_floor_fixed_v"), (Layers::Both, "sigma0_floor_both_layers")]
        .into_iter()
        .map(|(layers, name)| {
            let floor = sigma0_theory_floor(layers, consts.c_phi, consts.c_phi_prime);
            let mut above = 0;
            let mut smallest = f64::INFINITY;
            for seed in 0..100 {
                let mut rng = SeededRng::new(seed, 5);
                let net = TwoLayerNet::init(4000, 50, 8, layers, ActivationKind::Sigmoid, &mut rng).unwrap();
                let s = sigma0(&net).unwrap();
                smallest = smallest.min(s);
                above += usize::from(s >= floor);
            }
            check(
                name,
                above >= 95,
                format!("{above}/100 draws with sigma0 >= {floor:.4} (>= 95 required), smallest {smallest:.4}"),
            )
        })
        .collect()
}

fn jacobian_lipschitz_bound() -> Vec<Check> {
    let mut rng = SeededRng::new(106, 0);
    let mut worst = BTreeMap::from([("fixed", 0.0f64), ("both", 0.0f64)]);
    let mut violations = 0;
    for i in 0..1000 {
        let layers = if i % 2 == 0 { Layers::FixedV } else { Layers::Both };
        let n = int_in(&mut rng, 2, 8);
        let k = int_in(&mut rng, 5, 60);
        let d = int_in(&mut rng, 2, 8);
        let act = ACTIVATIONS[i % 3];
        let net = TwoLayerNet::init(k, d, n, layers, act, &mut rng).unwrap();
        let b = act.lipschitz_constant();
        let (a, c, bound) = match layers {
            Layers::FixedV => {
                let (s1, s2) = (log_uniform(&mut rng, 1e-3, 10.0), log_uniform(&mut rng, 1e-3, 10.0));
                let a = perturbed(&net, &mut rng, s1);
                let c = perturbed(&a, &mut rng, s2);
                (a, c, lip_bound(layers, b, net.v_bound(), n, k, 0.0))
            }
            Layers::Both => {
                let rho = log_uniform(&mut rng, 1e-2, 3.0);
                let theta0 = net.params().0;
                let dim = theta0.len();
                let mut in_ball = || {
                    let dir = rng.unit_sphere(dim);
                    let radius = rho * rng.uniform(0.0, 1.0).powf(1.0 / dim as f64);
                    let theta: Vec<f64> = theta0.iter().zip(&dir).map(|(t, u)| t + radius * u).collect();
                    net.with_params(&ParamVector(theta)).unwrap()
                };
                let (a, c) = (in_ball(), in_ball());
                (a, c, lip_bound(layers, b, net.v_bound(), n, k, rho))
            }
        };
        let dj = spectral_norm(&a.jacobian().sub(&c.jacobian()).unwrap()).unwrap();
        let ratio = dj / a.params().distance(&c.params()) / bound;
        let key = if layers == Layers::FixedV { "fixed" } else { "both" };
        let w = worst.get_mut(key).unwrap();
        *w = w.max(ratio);
        violations += usize::from(ratio > 1.0);
    }
    vec![check(
        "jacobian_lipschitz_bound",
        violations == 0,
        format!(
            "{violations}/1000 pairs above the bound; max ratio to bound {:.3} (fixed V), {:.3} (both layers)",
            worst["fixed"], worst["both"]
        ),
    )]
}

fn phase_transition() -> Vec<Check> {
    let cfg = ExperimentConfig::preset(ExperimentKind::PhaseKn, Preset::Reduced);
    let res = run_phase_heatmap(&cfg).unwrap();
    let grid = &res.grid;
    let ks: Vec<f64> = grid.k.iter().map(|&k| k as f64).collect();
    let mut monotone = true;
    let mut cols = Vec::new();
    let mut top_ok = true;
    let mut tops = Vec::new();
    for (col, &x) in grid.x.iter().enumerate() {
        let f = grid.column(col);
        monotone &= increasing_trend(&ks, &f, 0.9);
        cols.push(format!(
            "n={x}: [{}]",
            f.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>().join(" ")
        ));
        if x <= 10 {
            let top = *f.last().unwrap();
            top_ok &= top >= 0.9;
            tops.push(format!("n={x}: {top:.2}"));
        }
    }
    vec![
        check(
            "phase_monotone_in_width",
            monotone,
            format!("every column non-decreasing or Spearman >= 0.9; {}", cols.join(", ")),
        ),
        check(
            "phase_top_row_small_n",
            top_ok,
            format!("frequency at k={} >= 0.9 required for n <= 10; {}", grid.k.last().unwrap(), tops.join(", ")),
        ),
    ]
}

fn noise_sweep(dir: &Path) -> Vec<Check> {
    let cfg = ExperimentConfig::preset(ExperimentKind::NoiseSweep, Preset::Reduced);
    let res = run_noise_sweep(&cfg).unwrap();
    res.write(dir).unwrap();
    let zero = res.summary.iter().find(|s| s.beta == 0.0).unwrap();
    let noisy: Vec<_> = res.summary.iter().filter(|s| s.beta > 0.0).collect();
    let violations: usize = noisy.iter().map(|s| s.bound_violations + s.bound_unavailable).sum();
    let header = std::fs::read_to_string(dir.join("curves.csv")).unwrap();
    let header = header.lines().next().unwrap_or_default().to_string();
    let floor_emitted = header.split(',').any(|c| c == "noise_floor")
        && res.curves.iter().all(|c| c.noise_floor.is_finite());
    let gaps: Vec<f64> = res.summary.iter().map(|s| s.floor_gap).collect();
    let gap_increasing = gaps.windows(2).all(|w| w[1] > w[0]);
    let fmt = |v: &[f64]| v.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>().join(", ");
    vec![
        check(
            "noise_free_signal_error",
            zero.mean_final_error <= 1e-2,
            format!(
                "mean final signal error at beta=0 is {:.3e} (<= 1e-2 required) after {} iterations",
                zero.mean_final_error, cfg.max_iters
            ),
        ),
        check(
            "noisy_recovery_bound_holds",
            violations == 0,
            format!("{violations} runs violate or lack the recovery bound over {} noisy runs", noisy.len() * cfg.trials),
        ),
        check(
            "noise_floor_reported",
            floor_emitted,
            format!("curves.csv header: {header}"),
        ),
        check(
            "noise_floor_gap_grows",
            gap_increasing,
            format!("floor minus mean error by beta {:?}: {}", cfg.beta, fmt(&gaps)),
        ),
    ]
}

fn early_stopping() -> Vec<Check> {
    let beta = 1e-3;
    let margin = 2000;
    let (mut used, mut skipped, mut violations, mut points) = (0, 0, 0, 0);
    let mut taus = Vec::new();
    for seed in 0..200u64 {
        if used == 20 {
            break;
        }
        let builder = InstanceBuilder::new(4, 4, 2000, 20).noise(beta).seed(seed);
        let Ok((inst, cert)) = builder.build_gated(0.9) else {
            skipped += 1;
            continue;
        };
        let eps = inst.noise_norm();
        let tau_star = early_stop_iteration(cert.rate_base, eps, cert.l0_squared_error()).unwrap();
        let cfg = TrainConfig {
            max_iters: tau_star + margin,
            loss_threshold: 0.0,
            trace_stride: 1,
            record: RecordFlags {
                obs_error: true,
                ..RecordFlags::none()
            },
            ..TrainConfig::default()
        };
        let trace = inst.train(&cfg).unwrap();
        for r in trace.records.iter().filter(|r| r.iter >= tau_star) {
            points += 1;
            violations += usize::from(r.obs_err.unwrap() > 2.0 * eps);
        }
        taus.push(tau_star);
        used += 1;
    }
    vec![check(
        "early_stopping_window",
        used == 20 && violations == 0 && points > 0,
        format!(
            "{violations} iterates after tau* with |y - y_clean| > 2|eps| over {points} iterates of {used} gated instances \
             (beta={beta}, {skipped} seeds without a reachable gate, tau* range {}..{})",
            taus.iter().min().unwrap_or(&0),
            taus.iter().max().unwrap_or(&0)
        ),
    )]
}

fn p_sweep() -> Vec<Check> {
    let cfg = ExperimentConfig::preset(ExperimentKind::PSweep, Preset::Reduced);
    let res = run_p_sweep(&cfg).unwrap();
    let medians = res.medians();
    let ok = medians.windows(2).all(|w| w[1].1 >= w[0].1);
    vec![check(
        "p_sweep_slower_for_larger_p",
        ok,
        format!(
            "median iterations to loss {:.0e}: {}",
            cfg.milestone,
            medians.iter().map(|(p, m)| format!("p={p}: {m}")).collect::<Vec<_>>().join(", ")
        ),
    )]
}

fn small_config(kind: ExperimentKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(kind, Preset::Reduced);
    cfg.trials = 2;
    match kind {
        ExperimentKind::PhaseKn => {
            cfg.k = vec![20, 60];
            cfg.n = vec![3, 5];
            cfg.max_iters = 2000;
        }
        ExperimentKind::PhaseKm => {
            cfg.k = vec![20, 60];
            cfg.n = vec![5];
            cfg.m = vec![2, 4];
            cfg.max_iters = 2000;
        }
        ExperimentKind::NoiseSweep => {
            cfg.k = vec![200];
            cfg.max_iters = 2000;
        }
        ExperimentKind::NoiseVsK => {
            cfg.k = vec![50, 100];
            cfg.n = vec![20];
            cfg.max_iters = 1000;
        }
        ExperimentKind::PSweep => {
            cfg.k = vec![100];
            cfg.n = vec![10];
            cfg.max_iters = 3000;
        }
    }
    cfg
}

fn output_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "svg"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn thread_count_invariance(root: &Path) -> Vec<Check> {
    let mut mismatches = Vec::new();
    let mut files = 0;
    for kind in ExperimentKind::ALL {
        let mut outputs = Vec::new();
        for (run, threads) in [1, 3, 3].into_iter().enumerate() {
            let mut cfg = small_config(kind);
            cfg.threads = threads;
            cfg.output_dir = root.join(format!("{kind}-{run}"));
            run_experiment(&cfg).unwrap();
            outputs.push(output_bytes(&cfg.output_dir));
        }
        files += outputs[0].len();
        for (i, other) in outputs.iter().enumerate().skip(1) {
            if other != &outputs[0] {
                mismatches.push(format!("{kind} run {i}"));
            }
        }
    }
    vec![check(
        "outputs_independent_of_threads",
        mismatches.is_empty() && files > 0,
        format!(
            "{files} CSV/SVG files per run compared across 1, 3 and 3 threads; mismatches: [{}]",
            mismatches.join(", ")
        ),
    )]
}

fn certificate_algebra() -> Vec<Check> {
    let mut rng = SeededRng::new(112, 0);
    let mut worst_r: f64 = 0.0;
    for i in 0..100 {
        let act = ACTIVATIONS[i % 3];
        let consts = activation_constants(act.name()).unwrap();
        let n = int_in(&mut rng, 1, 100);
        let k = (n as f64 * log_uniform(&mut rng, 1.0, 1e4)).round() as usize;
        let d = rng.uniform(0.5, 3.0);
        let b = consts.b;
        let s = consts.c_phi.hypot(consts.c_phi_prime);
        let a = 0.5 + d;
        let expected = ((a * a + (s * s * k as f64 / n as f64).sqrt() / (2.0 * b)).sqrt() - a) / 2.0;
        worst_r = worst_r.max(rel(radius_r(Layers::Both, s / 2.0, b, d, n, k), expected));
    }

    let mut worst_rate: f64 = 0.0;
    let (alpha, c) = desingularizing_constants(0.0).unwrap();
    let desing = Desingularizer::new(alpha, c).unwrap();
    for i in 0..100 {
        let sf = rng.uniform(0.1, 3.0);
        let s0 = rng.uniform(0.1, 3.0);
        let l0 = log_uniform(&mut rng, 1e-4, 1e2);
        let t = i as f64 * 0.37;
        let gamma = sf * sf * s0 * s0 / 4.0 * t - c * c / 4.0 * l0.ln();
        let closed = (-4.0 * gamma / (c * c)).exp();
        let curve = loss_rate_curve(&RateSchedule::Continuous(desing), sf, s0, l0, t).unwrap();
        worst_rate = worst_rate.max(rel(curve, closed));
    }

    let mut worst_over: f64 = 0.0;
    let c_prime = 1.0;
    for &p in &[0.0, 0.5, 1.0] {
        let (alpha, c) = desingularizing_constants(p).unwrap();
        for &n in &[5usize, 50, 500] {
            for &sigma_f in &[0.1, 1.0] {
                let base = OverparamInputs {
                    layers: Layers::Both,
                    desing: Desingularizer::new(alpha, c).unwrap(),
                    sigma_f,
                    n,
                    m: n,
                    d: 20,
                    l_f0: 1.5,
                    l_l0: 1.0,
                    sup_fx: 2.0,
                    sup_eps: 0.1,
                    c: 1.0,
                    c_prime,
                };
                let both = overparam_requirement(&base).unwrap();
                let fixed = overparam_requirement(&OverparamInputs { layers: Layers::FixedV, ..base }).unwrap();
                worst_over = worst_over.max(rel(both, fixed * fixed / (c_prime * n as f64)));
            }
        }
    }
    vec![
        check(
            "radius_closed_form",
            worst_r <= 1e-12,
            format!("max relative gap between the stable and direct root forms {worst_r:.2e} <= 1e-12 over 100 inputs"),
        ),
        check(
            "exponential_rate_at_half",
            worst_rate <= 1e-9,
            format!("max relative gap to exp(-4 gamma/c^2) {worst_rate:.2e} <= 1e-9 over 100 inputs"),
        ),
        check(
            "width_requirement_relation",
            worst_over <= 1e-12,
            format!("max relative gap between both-layer and squared fixed-V requirements {worst_over:.2e} <= 1e-12"),
        ),
    ]
}

fn main() -> ExitCode {
    let strict = std::env::var("DIPCERT_STRICT").is_ok_and(|v| v == "1");
    let tmp = tempfile::tempdir().unwrap();
    let sections: Vec<Section> = vec![
        ("jacobian", Box::new(jacobian_matches_finite_differences)),
        ("loss family", Box::new(loss_saturates_lojasiewicz)),
        ("desingularizer primitive", Box::new(primitive_and_inverse)),
        ("gated descent", Box::new(gated_descent_follows_certificate)),
        ("sigma0 concentration", Box::new(sigma0_concentrates)),
        ("jacobian lipschitz", Box::new(jacobian_lipschitz_bound)),
        ("phase transition", Box::new(phase_transition)),
        ("noise sweep", Box::new(|| noise_sweep(&tmp.path().join("noise")))),
        ("early stopping", Box::new(early_stopping)),
        ("loss exponent sweep", Box::new(p_sweep)),
        ("thread invariance", Box::new(|| thread_count_invariance(&tmp.path().join("threads")))),
        ("certificate algebra", Box::new(certificate_algebra)),
    ];
    let mut hard_failures = 0;
    let mut tolerated = 0;
    for (section, run) in &sections {
        let start = Instant::now();
        let checks = run();
        let secs = start.elapsed().as_secs_f64();
        for c in checks {
            let red = KNOWN_RED.contains(&c.name);
            let tag = match (c.pass, red) {
                (true, _) => "PASS",
                (false, true) => "FAIL (known)",
                (false, false) => "FAIL",
            };
            println!("{tag} {} [{section}, {secs:.1}s]: {}", c.name, c.detail);
            if !c.pass {
                if red && !strict {
                    tolerated += 1;
                } else {
                    hard_failures += 1;
                }
            }
        }
    }
    println!("acceptance: {hard_failures} failures, {tolerated} known failures tolerated");
    if hard_failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
