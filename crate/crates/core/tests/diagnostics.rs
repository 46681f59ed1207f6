use rand::Rng;

use l2e::diagnostics::{
    agreement, ece, ess, ess_per_second, median_ess, nll, rhat_summary, split_rhat,
    update_norm_trace, Predictive, RhatVariant,
};
use l2e::meta::{FeatureNorm, MetaParams};
use l2e::model::{GaussianPotential, Layout};
use l2e::rng::{normal_vec, substream};
use l2e::sampler::{
    run_chain_with, ChainOptions, ChainSpec, FixedTarget, SampleSet, SamplerConfig, SamplerKind,
    Snapshot, UpdateRecord,
};

fn random_predictive(seed: u64, rows: usize, classes: usize) -> (Predictive, Vec<usize>) {
    let mut rng = substream(seed, &[]);
    let mut probs = Vec::with_capacity(rows * classes);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..classes).map(|_| rng.random::<f64>().powi(3)).collect();
        let s: f64 = raw.iter().sum();
        probs.extend(raw.iter().map(|v| v / s));
    }
    let labels = (0..rows).map(|_| rng.random_range(0..classes)).collect();
    (Predictive::new(rows, classes, probs).unwrap(), labels)
}

fn brute_ece(p: &Predictive, y: &[usize], bins: usize) -> f64 {
    let mut total = 0.0;
    for b in 0..bins {
        let (lo, hi) = (b as f64 / bins as f64, (b + 1) as f64 / bins as f64);
        let mut members = Vec::new();
        for i in 0..p.rows {
            let row = p.row(i);
            let mut best = 0;
            for k in 1..p.classes {
                if row[k] > row[best] {
                    best = k;
                }
            }
            let c = row[best];
            if (c > lo || (b == 0 && c >= 0.0)) && c <= hi {
                members.push((c, (best == y[i]) as u8 as f64));
            }
        }
        if members.is_empty() {
            continue;
        }
        let m = members.len() as f64;
        let acc = members.iter().map(|x| x.1).sum::<f64>() / m;
        let conf = members.iter().map(|x| x.0).sum::<f64>() / m;
        total += m / p.rows as f64 * (acc - conf).abs();
    }
    total
}

#[test]
fn ece_matches_brute_force_binning() {
    for seed in 0..5 {
        let (p, y) = random_predictive(seed, 500, 4);
        for bins in [1, 10, 15] {
            let fast = ece(&p, &y, bins).unwrap();
            assert!((fast - brute_ece(&p, &y, bins)).abs() < 1e-12);
        }
    }
}

#[test]
fn agreement_matches_brute_force() {
    let (a, _) = random_predictive(1, 300, 3);
    let (b, _) = random_predictive(2, 300, 3);
    let mut same = 0;
    for i in 0..300 {
        let am = (0..3).fold(0, |m, k| if a.row(i)[k] > a.row(i)[m] { k } else { m });
        let bm = (0..3).fold(0, |m, k| if b.row(i)[k] > b.row(i)[m] { k } else { m });
        same += (am == bm) as usize;
    }
    assert_eq!(agreement(&a, &b).unwrap(), same as f64 / 300.0);
}

#[test]
fn ece_and_nll_permutation_properties() {
    let (p, y) = random_predictive(3, 200, 3);
    let perm: Vec<usize> = (0..200).map(|i| (i * 37) % 200).collect();
    let probs: Vec<f64> = perm.iter().flat_map(|&i| p.row(i).to_vec()).collect();
    let q = Predictive::new(200, 3, probs).unwrap();
    let yq: Vec<usize> = perm.iter().map(|&i| y[i]).collect();
    assert!((ece(&p, &y, 10).unwrap() - ece(&q, &yq, 10).unwrap()).abs() < 1e-12);
    let full = nll(&p, &y).unwrap().value;
    assert!((full - nll(&q, &yq).unwrap().value).abs() < 1e-12);
    let head = Predictive::new(50, 3, p.probs[..150].to_vec()).unwrap();
    let tail = Predictive::new(150, 3, p.probs[150..].to_vec()).unwrap();
    let split = (50.0 * nll(&head, &y[..50]).unwrap().value
        + 150.0 * nll(&tail, &y[50..]).unwrap().value)
        / 200.0;
    assert!((full - split).abs() < 1e-12);
}

fn ar1(seed: u64, n: usize, rho: f64) -> Vec<f64> {
    let z = normal_vec(&mut substream(seed, &[]), n, 1.0);
    let mut x = Vec::with_capacity(n);
    let mut prev = z[0] / (1.0 - rho * rho).sqrt();
    for zi in z {
        prev = rho * prev + zi;
        x.push(prev);
    }
    x
}

#[test]
fn ar1_ess_matches_analytic_value() {
    let n = 20_000;
    let e = ess(&ar1(4, n, 0.5)).unwrap();
    let want = n as f64 / 3.0;
    assert!((e.value - want).abs() < 0.2 * want, "{}", e.value);
}

#[test]
fn repeated_trace_has_low_ess() {
    // An autocorrelated base makes the duplication visible to the estimator.
    let base = ar1(5, 100, 0.5);
    let doubled: Vec<f64> = base.iter().chain(&base).copied().collect();
    let e = ess(&doubled).unwrap().value;
    assert!(e < 100.0, "{e}");
}

#[test]
fn rhat_stationary_trend_and_constant() {
    let x = normal_vec(&mut substream(6, &[]), 10_000, 1.0);
    let r = split_rhat(&[&x], 2).unwrap();
    assert!((r.value - 1.0).abs() < 0.05 && !r.flagged);
    let trend: Vec<f64> = (0..1000).map(|i| i as f64).collect();
    assert!(split_rhat(&[&trend], 2).unwrap().value > 2.5);
    let c = vec![1.0; 100];
    assert!(split_rhat(&[&c], 2).unwrap().flagged);
}

fn set_from_columns(cols: &[Vec<f64>], seconds: Option<f64>) -> SampleSet {
    let s = cols[0].len();
    SampleSet {
        layout: Layout::flat(cols.len()),
        snapshots: (0..s)
            .map(|t| Snapshot {
                step: t as u64 + 1,
                values: cols.iter().map(|c| c[t]).collect(),
            })
            .collect(),
        sampler: "test".into(),
        total_steps: s as u64,
        burnin: 0,
        thin: 1,
        seed: 0,
        interval_seconds: seconds.map(|v| vec![v; s]),
        divergence: None,
        update_log: Vec::new(),
    }
}

#[test]
fn rhat_summary_counts_fractions() {
    // Coordinates 0,1 mix across chains; coordinates 2,3 sit at different levels.
    let chains: Vec<SampleSet> = (0..2u64)
        .map(|c| {
            let cols: Vec<Vec<f64>> = (0..4u64)
                .map(|k| {
                    let shift = if k >= 2 { 10.0 * c as f64 } else { 0.0 };
                    normal_vec(&mut substream(7, &[c, k]), 2000, 1.0)
                        .iter()
                        .map(|v| v + shift)
                        .collect()
                })
                .collect();
            set_from_columns(&cols, None)
        })
        .collect();
    let s = rhat_summary(&chains, 2, 1024, RhatVariant::Classical).unwrap();
    assert_eq!(s.coordinates, 4);
    assert_eq!(s.proportion_below, 0.5);
    let rn = rhat_summary(&chains, 2, 1024, RhatVariant::RankNormalized).unwrap();
    assert_eq!(rn.proportion_below, 0.5);
}

#[test]
fn ess_per_second_arithmetic() {
    let col = ar1(8, 500, 0.3);
    let set = set_from_columns(&[col.clone()], Some(2.0));
    let e = ess(&col).unwrap().value;
    assert!((ess_per_second(&set, 1024, false).unwrap() - e / 2.0).abs() < 1e-12);
    assert_eq!(median_ess(&set, 1024).unwrap(), e);
    let scaled = ess_per_second(&set, 1024, true).unwrap();
    assert!((scaled * 1e5 - e / 2.0).abs() < 1e-9);
    assert!(ess_per_second(&set_from_columns(&[col], None), 1024, false).is_err());
}

#[test]
fn update_norms_of_frozen_and_manual_chains() {
    let target = GaussianPotential::isotropic(vec![0.0; 3], 1.0);
    let spec = ChainSpec {
        total_steps: 20,
        burnin: 0,
        thin: 10,
        samples: 2,
        seed: 1,
        chain_id: 0,
    };
    let opts = ChainOptions {
        record_updates: true,
        ..ChainOptions::default()
    };
    let set = run_chain_with(
        &SamplerKind::L2e(MetaParams::zeros(FeatureNorm::Rms)),
        &mut FixedTarget(target),
        vec![1.0, 2.0, 3.0],
        Layout::flat(3),
        &SamplerConfig::default(),
        &spec,
        opts,
    )
    .unwrap();
    let pts = update_norm_trace(&set).unwrap();
    assert_eq!(pts.len(), 20);
    assert!(pts.iter().all(|p| p.delta_sq == 0.0 && p.beta_sq == 0.0));

    let mut manual = set_from_columns(&[vec![0.0, 3.0], vec![0.0, 4.0]], None);
    manual.update_log = vec![UpdateRecord {
        step: 1,
        step_size: 1.0,
        delta_sq: 25.0,
        beta_sq: None,
        energy: None,
    }];
    assert_eq!(update_norm_trace(&manual).unwrap()[0].beta_sq, 25.0);
    manual.update_log.clear();
    assert!(update_norm_trace(&manual).is_err());
}
