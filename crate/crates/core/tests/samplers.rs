use l2e::meta::{init_meta_params, FeatureNorm, MetaParams, ALPHA_B};
use l2e::model::{GaussianPotential, Layout, Potential};
use l2e::rng::{normal_vec, substream, Noise};
use l2e::sampler::{
    kinetic_l2e_step, kinetic_mean, l2e_step, psgld_preconditioner, psgld_step, run_chain_with,
    sghmc_step, sgld_step, ChainOptions, ChainSpec, FixedTarget, SamplerConfig, SamplerKind,
    SamplerState, ScheduleKind, ScheduleSettings,
};
use l2e::Error;

fn std_normal_1d() -> GaussianPotential {
    GaussianPotential::isotropic(vec![0.0], 1.0)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n)
}

struct Linear(Vec<f64>);

impl Potential for Linear {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn value(&self, theta: &[f64]) -> l2e::Result<f64> {
        Ok(theta.iter().zip(&self.0).map(|(t, c)| t * c).sum())
    }
    fn grad(&self, _: &[f64]) -> l2e::Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

fn noise(seed: u64, t: u64) -> Noise {
    Noise::gaussian(seed, &[3, 0, t])
}

#[test]
fn sgld_zero_noise_at_minimum_is_fixed() {
    let p = GaussianPotential::isotropic(vec![0.3, -1.0], 2.0);
    let mut s = SamplerState::new(vec![0.3, -1.0], vec![0.5, 0.5], 0);
    sgld_step(&mut s, &p, 0.1, 1.0, &mut Noise::Zero).unwrap();
    assert_eq!(s.theta, vec![0.3, -1.0]);
    assert_eq!(s.momentum, vec![0.5, 0.5]);
}

#[test]
fn sgld_cold_limit_is_gradient_descent() {
    let p = GaussianPotential::isotropic(vec![1.0, 2.0], 1.0);
    let mut a = SamplerState::new(vec![-3.0, 4.0], vec![0.0; 2], 0);
    let mut b = a.clone();
    for t in 0..100 {
        sgld_step(&mut a, &p, 0.05, 1e-300, &mut noise(1, t)).unwrap();
        sgld_step(&mut b, &p, 0.05, 1.0, &mut Noise::Zero).unwrap();
    }
    assert_eq!(a.theta, b.theta);
}

#[test]
fn sgld_gaussian_variance() {
    let p = std_normal_1d();
    let mut s = SamplerState::new(vec![0.0], vec![0.0], 0);
    let mut xs = Vec::new();
    for t in 0..400_000u64 {
        sgld_step(&mut s, &p, 0.02, 1.0, &mut noise(2, t)).unwrap();
        if t >= 1000 {
            xs.push(s.theta[0]);
        }
    }
    let (m, v) = mean_var(&xs);
    assert!(m.abs() < 0.05, "mean {m}");
    assert!((v - 1.0).abs() < 0.1, "var {v}");
}

#[test]
fn sghmc_pure_drift() {
    let p = Linear(vec![0.0, 0.0]);
    let mut s = SamplerState::new(vec![1.0, 2.0], vec![0.5, -1.0], 0);
    sghmc_step(&mut s, &p, 0.1, 0.0, 2.0, 1.0, &mut Noise::Zero).unwrap();
    assert_eq!(s.theta, vec![1.0 + 0.1 * 0.5 * 0.5, 2.0 - 0.1 * 0.5]);
    assert_eq!(s.momentum, vec![0.5, -1.0]);
}

#[test]
fn sghmc_energy_drift_is_first_order() {
    let p = std_normal_1d();
    for &eps in &[0.05, 0.01] {
        let mut s = SamplerState::new(vec![1.0], vec![0.0], 0);
        let h0 = 0.5;
        let steps = (2.0 * std::f64::consts::PI / eps).ceil() as usize;
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            sghmc_step(&mut s, &p, eps, 0.0, 1.0, 1.0, &mut Noise::Zero).unwrap();
            let h = 0.5 * s.theta[0].powi(2) + 0.5 * s.momentum[0].powi(2);
            worst = worst.max((h - h0).abs());
        }
        assert!(worst <= eps * h0 * 1.01, "eps {eps}: drift {worst}");
        assert!(worst > 0.1 * eps * h0);
    }
}

#[test]
fn sghmc_gaussian_marginals() {
    let p = std_normal_1d();
    let mass = 2.0;
    let mut s = SamplerState::new(vec![0.0], vec![0.0], 0);
    let (mut xs, mut rs) = (Vec::new(), Vec::new());
    for t in 0..300_000u64 {
        sghmc_step(&mut s, &p, 0.05, 1.0, mass, 1.0, &mut noise(3, t)).unwrap();
        if t >= 1000 {
            xs.push(s.theta[0]);
            rs.push(s.momentum[0]);
        }
    }
    let (m, v) = mean_var(&xs);
    let (_, vr) = mean_var(&rs);
    assert!(m.abs() < 0.05, "mean {m}");
    assert!((v - 1.0).abs() < 0.1, "var θ {v}");
    assert!((vr / mass - 1.0).abs() < 0.1, "var r {vr}");
}

#[test]
fn psgld_initial_and_fixed_point_preconditioner() {
    let s = SamplerState::new(vec![0.0; 3], vec![0.0; 3], 0);
    assert!(psgld_preconditioner(&s, 1e-5)
        .iter()
        .all(|g| (g - 1e5).abs() < 1e-9));

    let n = 4;
    let p = Linear(vec![2.0, -8.0]);
    let mut s = SamplerState::new(vec![0.0; 2], vec![0.0; 2], 0);
    for _ in 0..3000 {
        psgld_step(&mut s, &p, 1e-4, 0.99, 1e-5, n, 1.0, &mut Noise::Zero).unwrap();
    }
    assert!((s.precond[0] - 0.25).abs() < 1e-9);
    assert!((s.precond[1] - 4.0).abs() < 1e-9);
    let g = psgld_preconditioner(&s, 1e-5);
    assert!((g[0] - 1.0 / (1e-5 + 0.5)).abs() < 1e-6);
}

#[test]
fn psgld_gaussian_variance() {
    // A long preconditioner average: with α = 0.99 and n = 1 the
    // preconditioner tracks |θ| itself and, with Γ omitted, the chain lingers
    // in the tails (variance ≈ 1.2).
    let p = std_normal_1d();
    let mut s = SamplerState::new(vec![1.0], vec![0.0], 0);
    let mut xs = Vec::new();
    for t in 0..400_000u64 {
        psgld_step(&mut s, &p, 0.02, 0.9999, 1e-5, 1, 1.0, &mut noise(4, t)).unwrap();
        if t >= 20_000 {
            xs.push(s.theta[0]);
        }
    }
    let (m, v) = mean_var(&xs);
    assert!(m.abs() < 0.05, "mean {m}");
    assert!((v - 1.0).abs() < 0.1, "var {v}");
}

fn random_state(seed: u64, d: usize) -> SamplerState {
    let mut rng = substream(seed, &[77]);
    let theta = normal_vec(&mut rng, d, 1.0);
    let r = normal_vec(&mut rng, d, 1.0);
    let mut s = SamplerState::new(theta, r, 0);
    for _ in 0..3 {
        let g = normal_vec(&mut rng, d, 1.0);
        s.bank.update_emas(&g).unwrap();
        s.step += 1;
    }
    s
}

#[test]
fn identity_meta_reduces_to_sghmc() {
    let meta = MetaParams::momentum_identity(FeatureNorm::None);
    for k in 0..100u64 {
        let d = 1 + k as usize % 7;
        let target = GaussianPotential::isotropic(normal_vec(&mut substream(k, &[1]), d, 1.0), 0.7);
        let base = random_state(k, d);
        let (mut a, mut b) = (base.clone(), base.clone());
        l2e_step(&mut a, &target, 0.03, 2.0, &meta, 1.0, &mut noise(k, 1)).unwrap();
        sghmc_step(&mut b, &target, 0.03, 2.0, 1.0, 1.0, &mut noise(k, 1)).unwrap();
        for i in 0..d {
            assert!((a.theta[i] - b.theta[i]).abs() < 1e-12);
            assert!((a.momentum[i] - b.momentum[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_meta_freezes_theta() {
    let meta = MetaParams::zeros(FeatureNorm::Rms);
    let target = GaussianPotential::isotropic(vec![0.0; 3], 1.0);
    let mut s = random_state(5, 3);
    let theta0 = s.theta.clone();
    let r0 = s.momentum.clone();
    for t in 0..20 {
        l2e_step(&mut s, &target, 0.1, 1.0, &meta, 1.0, &mut noise(5, t)).unwrap();
    }
    assert_eq!(s.theta, theta0);
    assert_ne!(s.momentum, r0);
}

#[test]
fn learned_step_is_deterministic_and_updates_bank_once() {
    let meta = init_meta_params(3, FeatureNorm::Rms);
    let mut meta = meta;
    for (i, v) in meta.values.iter_mut().enumerate().skip(320) {
        *v = ((i * 37) % 11) as f64 / 11.0 - 0.5;
    }
    let target = GaussianPotential::isotropic(vec![0.5; 4], 1.0);
    let base = SamplerState::new(vec![0.1, 0.2, -0.3, 0.4], vec![1.0, -1.0, 0.5, 0.0], 0);
    let (mut a, mut b) = (base.clone(), base);
    for t in 0..10 {
        l2e_step(&mut a, &target, 0.05, 1.0, &meta, 1.0, &mut noise(6, t)).unwrap();
        l2e_step(&mut b, &target, 0.05, 1.0, &meta, 1.0, &mut noise(6, t)).unwrap();
    }
    assert_eq!(a, b);
    assert_eq!(a.bank.updates, a.step);
    assert_eq!(a.step, 10);
}

#[test]
fn kinetic_with_zero_mean_is_exactly_sghmc() {
    let meta = MetaParams::zeros(FeatureNorm::Rms);
    for k in 0..50 {
        let d = 1 + k as usize % 5;
        let target = GaussianPotential::isotropic(vec![0.2; d], 1.3);
        let base = random_state(100 + k, d);
        let (mut a, mut b) = (base.clone(), base.clone());
        kinetic_l2e_step(&mut a, &target, 0.02, 3.0, &meta, 1.0, &mut noise(k, 2)).unwrap();
        sghmc_step(&mut b, &target, 0.02, 3.0, 1.0, 1.0, &mut noise(k, 2)).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.momentum, b.momentum);
    }
}

#[test]
fn kinetic_constant_mean_shifts_drift() {
    let mut meta = MetaParams::zeros(FeatureNorm::None);
    meta.values[ALPHA_B] = 0.7;
    let target = Linear(vec![0.0, 0.0]);
    let mut s = SamplerState::new(vec![0.0, 1.0], vec![2.0, -1.0], 0);
    kinetic_l2e_step(&mut s, &target, 0.1, 0.0, &meta, 1.0, &mut Noise::Zero).unwrap();
    assert_eq!(s.momentum, vec![2.0, -1.0]);
    assert!((s.theta[0] - 0.1 * (2.0 - 0.7)).abs() < 1e-15);
    assert!((s.theta[1] - (1.0 + 0.1 * (-1.0 - 0.7))).abs() < 1e-15);
}

#[test]
fn kinetic_slope_matches_finite_differences() {
    let mut meta = init_meta_params(11, FeatureNorm::None);
    for (i, v) in meta.values.iter_mut().enumerate().skip(320).take(33) {
        *v = (((i * 53) % 17) as f64 / 17.0 - 0.5) * 0.8;
    }
    let s = random_state(9, 6);
    let g = normal_vec(&mut substream(9, &[2]), 6, 1.0);
    let half_sq = |theta: &[f64]| -> f64 {
        let (f, _) = kinetic_mean(&meta, theta, &g, &s.bank).unwrap();
        0.5 * f.iter().map(|x| x * x).sum::<f64>()
    };
    let (f, slope) = kinetic_mean(&meta, &s.theta, &g, &s.bank).unwrap();
    let h = 1e-6;
    for i in 0..6 {
        let mut up = s.theta.clone();
        up[i] += h;
        let mut dn = s.theta.clone();
        dn[i] -= h;
        let fd = (half_sq(&up) - half_sq(&dn)) / (2.0 * h);
        let an = f[i] * slope[i];
        let err = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-4);
        assert!(err < 1e-5, "coordinate {i}: {an} vs {fd}");
    }
}

fn gaussian_chain(
    kind: &SamplerKind,
    cfg: &SamplerConfig,
    spec: &ChainSpec,
) -> l2e::Result<l2e::sampler::SampleSet> {
    let mut target = FixedTarget(GaussianPotential::isotropic(vec![0.0; 2], 1.0));
    run_chain_with(
        kind,
        &mut target,
        vec![0.5, -0.5],
        Layout::flat(2),
        cfg,
        spec,
        ChainOptions::default(),
    )
}

fn spec(total: u64, burnin: u64, thin: u64, samples: usize) -> ChainSpec {
    ChainSpec {
        total_steps: total,
        burnin,
        thin,
        samples,
        seed: 42,
        chain_id: 0,
    }
}

#[test]
fn chain_collection_rule() {
    let cfg = SamplerConfig {
        step_size: 0.01,
        ..SamplerConfig::default()
    };
    let set = gaussian_chain(&SamplerKind::Sghmc, &cfg, &spec(200, 100, 50, 2)).unwrap();
    assert_eq!(set.steps(), vec![150, 200]);
    assert_eq!(set.interval_seconds.as_ref().unwrap().len(), 2);
    let err = gaussian_chain(&SamplerKind::Sghmc, &cfg, &spec(200, 100, 50, 3)).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn chain_is_reproducible() {
    let cfg = SamplerConfig {
        step_size: 0.01,
        ..SamplerConfig::default()
    };
    for kind in [SamplerKind::Sgld, SamplerKind::Sghmc, SamplerKind::Psgld] {
        let a = gaussian_chain(&kind, &cfg, &spec(500, 100, 20, 10)).unwrap();
        let b = gaussian_chain(&kind, &cfg, &spec(500, 100, 20, 10)).unwrap();
        assert_eq!(a.without_timing(), b.without_timing());
        let mut other = spec(500, 100, 20, 10);
        other.seed = 43;
        let c = gaussian_chain(&kind, &cfg, &other).unwrap();
        assert_ne!(a.snapshots, c.snapshots);
    }
}

#[test]
fn divergence_returns_partial_set() {
    let cfg = SamplerConfig {
        step_size: 10.0,
        momentum_decay: None,
        ..SamplerConfig::default()
    };
    let set = gaussian_chain(&SamplerKind::Sgld, &cfg, &spec(2000, 0, 10, 5)).unwrap();
    let div = set.divergence.expect("chain should diverge");
    assert!(div.step > 0 && div.step < 2000);
    assert!(set
        .snapshots
        .iter()
        .all(|s| s.values.iter().all(|v| v.is_finite())));
}

#[test]
fn cyclical_chain_collects_only_in_sample_phase() {
    let cfg = SamplerConfig {
        step_size: 0.05,
        schedule: ScheduleSettings {
            kind: ScheduleKind::Cyclical,
            num_cycles: 4,
            exploration_ratio: 0.8,
        },
        ..SamplerConfig::default()
    };
    let set = gaussian_chain(&SamplerKind::Csgmcmc, &cfg, &spec(400, 0, 5, 16)).unwrap();
    for s in set.steps() {
        let pos = (s - 1) % 100;
        assert!(pos >= 80, "step {s} collected during exploration");
    }
    assert_eq!(set.len(), 16);
    let err = gaussian_chain(
        &SamplerKind::Csgmcmc,
        &SamplerConfig::default(),
        &spec(400, 0, 5, 4),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn learned_chain_records_update_norms() {
    let meta = MetaParams::momentum_identity(FeatureNorm::None);
    let cfg = SamplerConfig {
        step_size: 0.05,
        ..SamplerConfig::default()
    };
    let mut target = FixedTarget(GaussianPotential::isotropic(vec![0.0; 3], 1.0));
    let set = run_chain_with(
        &SamplerKind::L2e(meta),
        &mut target,
        vec![0.0; 3],
        Layout::flat(3),
        &cfg,
        &spec(100, 50, 10, 5),
        ChainOptions {
            record_updates: true,
            zero_noise: false,
        },
    )
    .unwrap();
    assert_eq!(set.update_log.len(), 100);
    for u in &set.update_log {
        let b = u.beta_sq.unwrap();
        assert!((u.delta_sq - 0.05 * 0.05 * b).abs() < 1e-12 * b.max(1.0));
    }
}
