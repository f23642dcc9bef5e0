//! Acceptance suite. Runs without the libtest harness so every criterion prints
//! one PASS or FAIL line; the process exits nonzero if any criterion fails.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use chrono::Duration;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use decentra::cluster::build_multi_input_clusters;
use decentra::ingest::TxInputs;
use decentra::metrics::{
    concentration_ratio, entropy, gini, hhi, nakamoto, num_parties, tau_index, theil, HhiBand,
};
use decentra::pipeline::{cmd_analyze, cmd_synth, SynthArgs};
use decentra::stats::{
    eigen_symmetric, efa, kaiser_count, kmo, spearman, EfaOptions, Matrix,
};
use decentra::synthlab::{
    generate_block_stream, generate_factor_dataset, matched_congruence,
    window_confidence_experiment, Intermittent, ShareModel, SynthSpec,
};
use decentra::windows::{
    consensus_distribution_with, snapshot_times, PopulationWindow, ResourceWindow,
};
use decentra::{EventLedger, RunConfig, WindowConfig};

type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Check {
    ensure((a - b).abs() <= tol, || format!("{what}: {a} vs {b} (tol {tol})"))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gini_worked_example() -> Check {
    close(gini(&[3.0, 2.0, 1.0]).unwrap(), 2.0 / 9.0, 1e-4, "gini{3,2,1}")?;
    close(gini(&[3.0, 2.0, 1.0, 0.0]).unwrap(), 5.0 / 12.0, 1e-4, "gini{3,2,1,0}")?;
    close(gini(&[3.0, 2.0, 1.0]).unwrap(), 0.2222, 1e-4, "gini{3,2,1}")?;
    close(gini(&[3.0, 2.0, 1.0, 0.0]).unwrap(), 0.4167, 1e-4, "gini{3,2,1,0}")
}

fn hhi_values_and_bands() -> Check {
    ensure(hhi(&[5.0]).unwrap().value == 10_000.0, || "monopoly".into())?;
    ensure(hhi(&[0.0, 7.0, 0.0]).unwrap().value == 10_000.0, || "monopoly with zeros".into())?;
    ensure(hhi(&[4.0, 4.0]).unwrap().value == 5_000.0, || "two equal".into())?;
    let cases = [
        (1499.999, HhiBand::Unconcentrated),
        (1500.0, HhiBand::Moderate),
        (2500.0, HhiBand::Moderate),
        (2500.001, HhiBand::High),
    ];
    for (v, band) in cases {
        ensure(HhiBand::classify(v) == band, || format!("band at {v}"))?;
    }
    Ok(())
}

fn entropy_limits() -> Check {
    ensure(entropy(&[9.0], 2.0).unwrap() == 0.0, || "single producer".into())?;
    ensure(entropy(&[0.0, 9.0, 0.0], 2.0).unwrap() == 0.0, || "single producer with zeros".into())?;
    for n in [2usize, 4, 8, 1024] {
        let h = entropy(&vec![3.0; n], 2.0).unwrap();
        close(h, (n as f64).log2(), 1e-12, &format!("uniform n={n}"))?;
    }
    Ok(())
}

/// Exhaustive search over subsets for the fewest entities exceeding `tau` of the total.
fn brute_tau(x: &[f64], tau: f64) -> usize {
    let n = x.len();
    let total: f64 = x.iter().sum();
    let target = tau * total;
    let mut best = usize::MAX;
    for mask in 1u32..(1 << n) {
        let k = mask.count_ones() as usize;
        if k >= best {
            continue;
        }
        let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| x[i]).sum();
        if s > target {
            best = k;
        }
    }
    best
}

fn random_amounts(r: &mut ChaCha8Rng, max_n: usize) -> Vec<f64> {
    loop {
        let n = r.random_range(1..=max_n);
        let x: Vec<f64> = (0..n)
            .map(|_| if r.random_bool(0.15) { 0.0 } else { f64::from(r.random_range(1u32..1000)) })
            .collect();
        if x.iter().any(|v| *v > 0.0) {
            return x;
        }
    }
}

fn nakamoto_tau_oracle() -> Check {
    let mut r = rng(4);
    for case in 0..500 {
        let x = random_amounts(&mut r, 15);
        let nc = nakamoto(&x).unwrap();
        ensure(nc == brute_tau(&x, 0.5), || format!("case {case}: nakamoto {nc} on {x:?}"))?;
        for tau in [0.33, 0.5, 0.66] {
            let got = tau_index(&x, tau).unwrap();
            let want = brute_tau(&x, tau);
            ensure(got == want, || format!("case {case}: tau {tau} gave {got}, oracle {want} on {x:?}"))?;
        }
    }
    for case in 0..1000 {
        let n = r.random_range(1..=40);
        let x: Vec<f64> = (0..n).map(|_| r.random::<f64>() * 100.0).collect();
        if x.iter().all(|v| *v == 0.0) {
            continue;
        }
        ensure(tau_index(&x, 0.5).unwrap() == nakamoto(&x).unwrap(), || format!("case {case}"))?;
    }
    Ok(())
}

fn gini_mad(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let mut d = 0.0;
    for a in x {
        for b in x {
            d += (a - b).abs();
        }
    }
    d / (2.0 * n * n * mean)
}

fn gini_oracle() -> Check {
    let mut r = rng(5);
    for case in 0..1000 {
        let n = r.random_range(1..=50);
        let mut x: Vec<f64> = (0..n)
            .map(|_| if r.random_bool(0.2) { 0.0 } else { r.random::<f64>() * 1e3 })
            .collect();
        if x.iter().all(|v| *v == 0.0) {
            x[0] = 1.0;
        }
        let g = gini(&x).unwrap();
        close(g, gini_mad(&x), 1e-9, &format!("case {case}"))?;
    }
    Ok(())
}

fn all_metrics(x: &[f64]) -> [f64; 8] {
    [
        entropy(x, 2.0).unwrap(),
        gini(x).unwrap(),
        nakamoto(x).unwrap() as f64,
        tau_index(x, 0.33).unwrap() as f64,
        concentration_ratio(x, 3).unwrap().value,
        hhi(x).unwrap().value,
        num_parties(x) as f64,
        theil(x).unwrap(),
    ]
}

fn metric_invariants() -> Check {
    let mut r = rng(6);
    for case in 0..200 {
        let x = random_amounts(&mut r, 30);
        let base = all_metrics(&x);
        for c in [1e-6, 3.0, 1e9] {
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            for (i, (a, b)) in base.iter().zip(all_metrics(&scaled)).enumerate() {
                close(*a, b, 1e-9, &format!("case {case} metric {i} scale {c}"))?;
            }
        }
        let mut padded = x.clone();
        padded.extend(std::iter::repeat_n(0.0, r.random_range(1..=5)));
        let p = all_metrics(&padded);
        // entropy, nakamoto, tau, cr, hhi
        for i in [0usize, 2, 3, 4, 5] {
            close(base[i], p[i], 1e-9, &format!("case {case} padding metric {i}"))?;
        }
        ensure(p[1] > base[1], || format!("case {case}: gini {} -> {}", base[1], p[1]))?;
    }
    Ok(())
}

fn components(txs: &[TxInputs]) -> BTreeSet<Vec<String>> {
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for tx in txs {
        for a in &tx.addresses {
            let e = adj.entry(a.as_str()).or_default();
            for b in &tx.addresses {
                e.insert(b.as_str());
            }
        }
    }
    let mut seen = BTreeSet::new();
    let mut out = BTreeSet::new();
    for &start in adj.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut stack = vec![start];
        let mut comp = vec![start.to_string()];
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if seen.insert(w) {
                    stack.push(w);
                    comp.push(w.to_string());
                }
            }
        }
        comp.sort();
        out.insert(comp);
    }
    out
}

fn clustering_oracle() -> Check {
    let mut r = rng(7);
    for case in 0..100 {
        let n_addr = r.random_range(2..=200);
        let n_tx = r.random_range(1..=150);
        let mut txs: Vec<TxInputs> = (0..n_tx)
            .map(|t| TxInputs {
                tx_id: format!("t{t}"),
                addresses: (0..r.random_range(1..=4))
                    .map(|_| format!("a{}", r.random_range(0..n_addr)))
                    .collect(),
            })
            .collect();
        let want = components(&txs);
        let got = build_multi_input_clusters(&txs).partition();
        ensure(got == want, || format!("case {case}: partition differs from components"))?;
        txs.shuffle(&mut r);
        for tx in &mut txs {
            tx.addresses.shuffle(&mut r);
        }
        ensure(build_multi_input_clusters(&txs).partition() == want, || {
            format!("case {case}: partition changed under shuffle")
        })?;
    }
    Ok(())
}

fn creator<'a>(ledger: &'a EventLedger) -> impl Fn(usize) -> Cow<'a, str> + 'a {
    move |i| Cow::Borrowed(ledger.blocks()[i].reward_addresses[0].as_str())
}

fn windowing_conservation() -> Check {
    let spec = SynthSpec::new(8, ShareModel::Zipf(1.0), 144.0, 60, 8);
    let ledger = generate_block_stream(&spec).map_err(|e| e.to_string())?;
    let study = spec.study_window();
    for (freq, window) in [(1, 7), (7, 7), (10, 7), (3, 1)] {
        let cfg = WindowConfig {
            resource_window: ResourceWindow::days(window),
            frequency: Duration::days(freq),
            ..WindowConfig::default()
        };
        let len = Duration::days(window);
        let times = snapshot_times(study, &cfg).map_err(|e| e.to_string())?;
        let mut uses = vec![0usize; ledger.blocks().len()];
        for t in times {
            let snap = consensus_distribution_with(&ledger, t, &cfg, creator(&ledger))
                .map_err(|e| e.to_string())?;
            let counted: u128 = snap.distribution.total();
            let exact = ledger
                .blocks()
                .iter()
                .enumerate()
                .filter(|(_, b)| b.timestamp >= t - len && b.timestamp < t)
                .inspect(|(i, _)| uses[*i] += 1)
                .count();
            ensure(counted == exact as u128, || format!("freq {freq}d at {t}: {counted} vs {exact}"))?;
        }
        if freq >= window {
            let max = uses.iter().max().copied().unwrap_or(0);
            ensure(max <= 1, || format!("freq {freq}d: a block was counted {max} times"))?;
        }
    }
    Ok(())
}

fn mean_weekly_gini(ledger: &EventLedger, spec: &SynthSpec, population: PopulationWindow) -> Result<f64, String> {
    let cfg = WindowConfig {
        population_window: population,
        ..WindowConfig::default()
    };
    let times = snapshot_times(spec.study_window(), &cfg).map_err(|e| e.to_string())?;
    let mut sum = 0.0;
    for t in &times {
        let snap = consensus_distribution_with(ledger, *t, &cfg, creator(ledger)).map_err(|e| e.to_string())?;
        sum += gini(&snap.distribution.amounts::<f64>()).map_err(|e| e.to_string())?;
    }
    Ok(sum / times.len() as f64)
}

fn population_window_effect() -> Check {
    let mut spec = SynthSpec::new(12, ShareModel::Uniform, 144.0, 84, 9);
    spec.intermittent = Some(Intermittent {
        stable_entities: 4,
        period_days: 21,
        active_days: 7,
    });
    let ledger = generate_block_stream(&spec).map_err(|e| e.to_string())?;
    let all_time = mean_weekly_gini(&ledger, &spec, PopulationWindow::AllTime)?;
    let same = mean_weekly_gini(&ledger, &spec, PopulationWindow::Same)?;
    ensure(all_time > same, || format!("all_time {all_time} vs same {same}"))
}

fn window_confidence() -> Check {
    let spec = SynthSpec::new(5, ShareModel::Zipf(1.0), 144.0, 14, 10);
    let rows = window_confidence_experiment(&spec, &[1, 7, 14], 100).map_err(|e| e.to_string())?;
    let (one, fourteen) = (&rows[0], &rows[2]);
    ensure(one.repetitions == 100 && fourteen.repetitions == 100, || "repetitions".into())?;
    ensure(fourteen.nc_sd < one.nc_sd, || {
        format!("sd at 14d {} vs sd at 1d {}", fourteen.nc_sd, one.nc_sd)
    })
}

fn brute_average_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let below = x.iter().filter(|w| *w < v).count() as f64;
            let equal = x.iter().filter(|w| *w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn plain_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn spearman_checks() -> Check {
    let x: Vec<f64> = (0..25).map(|i| f64::from(i) * 0.37 - 2.0).collect();
    let up: Vec<f64> = x.iter().map(|v| v.exp() + v.powi(3)).collect();
    let down: Vec<f64> = x.iter().map(|v| -v * 4.0).collect();
    ensure(spearman(&x, &up).unwrap() == 1.0, || "monotone pair".into())?;
    ensure(spearman(&x, &down).unwrap() == -1.0, || "reversed pair".into())?;
    let mut r = rng(11);
    let mut done = 0;
    while done < 200 {
        let n = r.random_range(3..=40);
        let a: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0u32..6))).collect();
        let b: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0u32..6))).collect();
        if a.iter().all(|v| *v == a[0]) || b.iter().all(|v| *v == b[0]) {
            continue;
        }
        let want = plain_pearson(&brute_average_ranks(&a), &brute_average_ranks(&b));
        close(spearman(&a, &b).unwrap(), want, 1e-12, &format!("tied case {done}"))?;
        done += 1;
    }
    Ok(())
}

fn eigen_kaiser() -> Check {
    let id = eigen_symmetric(&Matrix::<f64>::identity(6)).map_err(|e| e.to_string())?;
    ensure(kaiser_count(&id.values) == 0, || "identity kaiser count".into())?;
    for (a, b, c) in [(2.0, 1.0, 3.0), (1.0, 0.4, 1.0), (-3.0, 2.5, 0.5)] {
        let e = eigen_symmetric(&Matrix::from_rows(&[vec![a, b], vec![b, c]])).map_err(|e| e.to_string())?;
        let mid = (a + c) / 2.0;
        let rad = (((a - c) / 2.0f64).powi(2) + b * b).sqrt();
        close(e.values[0], mid + rad, 1e-12, "2x2 larger eigenvalue")?;
        close(e.values[1], mid - rad, 1e-12, "2x2 smaller eigenvalue")?;
    }
    let mut r = rng(12);
    for case in 0..20 {
        let mut a = Matrix::<f64>::zeros(8, 8);
        for i in 0..8 {
            for j in i..8 {
                let v = r.random::<f64>() * 2.0 - 1.0;
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let e = eigen_symmetric(&a).map_err(|e| e.to_string())?;
        let back = &(&e.vectors * &Matrix::from_diagonal(&e.values)) * &e.vectors.transpose();
        let err = back.max_abs_diff(&a);
        ensure(err < 1e-8, || format!("case {case}: reconstruction error {err}"))?;
    }
    Ok(())
}

fn efa_recovery() -> Check {
    let planted = Matrix::from_rows(&[
        vec![0.8, 0.0],
        vec![0.8, 0.0],
        vec![0.8, 0.0],
        vec![0.0, 0.8],
        vec![0.0, 0.8],
        vec![0.0, 0.8],
    ]);
    let data = generate_factor_dataset(500, &planted, 0.6, 13).map_err(|e| e.to_string())?;
    let k = kmo(&data).map_err(|e| e.to_string())?;
    ensure(k.overall > 0.5, || format!("KMO {}", k.overall))?;
    let eig = eigen_symmetric(&data.correlation().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let kc = kaiser_count(&eig.values);
    ensure(kc == 2, || format!("Kaiser count {kc}, eigenvalues {:?}", eig.values))?;
    let model = efa(&data, kc, &EfaOptions::default()).map_err(|e| e.to_string())?;
    let phi = matched_congruence(&model.loadings, &planted);
    ensure(phi.iter().all(|p| *p >= 0.95), || format!("congruence {phi:?}"))?;

    let one = Matrix::from_rows(&vec![vec![0.8]; 6]);
    let data = generate_factor_dataset(500, &one, 0.6, 14).map_err(|e| e.to_string())?;
    let eig = eigen_symmetric(&data.correlation().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let kc = kaiser_count(&eig.values);
    ensure(kc == 1, || format!("one-factor Kaiser count {kc}"))?;
    let model = efa(&data, kc, &EfaOptions::default()).map_err(|e| e.to_string())?;
    let col = model.loadings.column(0);
    ensure(col.iter().all(|l| l.abs() >= 0.6), || format!("one-factor loadings {col:?}"))
}

fn entropy_false_security() -> Check {
    let holders = 1_000_000;
    let mut x = vec![0.49 / holders as f64; holders + 1];
    x[0] = 0.51;
    let h = entropy(&x, 2.0).unwrap();
    ensure(h > 10.0, || format!("entropy {h}"))?;
    ensure(nakamoto(&x).unwrap() == 1, || "nakamoto".into())
}

fn same_bytes(a: &[std::path::PathBuf], b: &[std::path::PathBuf]) -> Check {
    ensure(a.len() == b.len() && !a.is_empty(), || "different file sets".into())?;
    for (x, y) in a.iter().zip(b) {
        let (bx, by) = (fs::read(x).map_err(|e| e.to_string())?, fs::read(y).map_err(|e| e.to_string())?);
        ensure(bx == by, || format!("{} differs from {}", x.display(), y.display()))?;
    }
    Ok(())
}

fn synth_into(dir: &Path) -> Result<Vec<std::path::PathBuf>, String> {
    cmd_synth(&SynthArgs {
        entities: Some(6),
        zipf: Some(1.0),
        days: 42,
        seed: 15,
        window_experiment: Some(vec![1, 7]),
        repetitions: 10,
        factor_loadings: Some(Matrix::from_rows(&[vec![0.8], vec![0.7], vec![0.6]])),
        factor_rows: 50,
        output: dir.to_path_buf(),
        ..SynthArgs::default()
    })
    .map(|s| s.files)
    .map_err(|e| e.to_string())
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = synth_into(&dir.path().join("synth_a"))?;
    let b = synth_into(&dir.path().join("synth_b"))?;
    same_bytes(&a, &b)?;
    let run = |out: &str| {
        let cfg = RunConfig {
            blocks: Some(a[0].clone()),
            output: dir.path().join(out),
            ..RunConfig::default()
        };
        cmd_analyze(&cfg).map(|s| s.files).map_err(|e| e.to_string())
    };
    same_bytes(&run("first")?, &run("second")?)
}

fn main() {
    let criteria: [(&str, fn() -> Check); 15] = [
        ("gini worked example", gini_worked_example),
        ("hhi extremes and bands", hhi_values_and_bands),
        ("entropy limits", entropy_limits),
        ("nakamoto and tau against exhaustive search", nakamoto_tau_oracle),
        ("gini against mean absolute difference", gini_oracle),
        ("scale invariance and zero padding", metric_invariants),
        ("clustering against connected components", clustering_oracle),
        ("windowing conservation", windowing_conservation),
        ("population window effect", population_window_effect),
        ("window confidence", window_confidence),
        ("spearman exact values and ties", spearman_checks),
        ("eigen decomposition and kaiser count", eigen_kaiser),
        ("efa recovery", efa_recovery),
        ("entropy false security", entropy_false_security),
        ("determinism", determinism),
    ];
    let started = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS {:>2} {name} ({secs:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
