use l2e::data::gen_blobs;
use l2e::diagnostics::Predictive;
use l2e::meta::{init_meta_params, FeatureNorm};
use l2e::model::{Activation, ArchitectureConfig, EnergyModel, Likelihood};
use l2e::model::{GaussianPotential, Layout};
use l2e::persist::{
    load_meta, load_reference, load_sample_set, meta_from_bytes, meta_to_bytes,
    sample_set_from_bytes, sample_set_to_bytes, save_meta, save_reference, save_sample_set,
    timing_path,
};
use l2e::sampler::{
    run_chain, run_chain_with, ChainOptions, ChainSpec, FixedTarget, SampleSet, SamplerConfig,
    SamplerKind,
};
use l2e::Error;

fn blob_samples() -> SampleSet {
    let data = gen_blobs(2, 64, 2, 4.0, 0).unwrap();
    let model = EnergyModel::new(
        ArchitectureConfig::mlp(vec![2, 4, 2], Activation::Relu, true),
        0.5,
        1.0,
        Likelihood::Categorical,
    )
    .unwrap();
    let spec = ChainSpec {
        total_steps: 200,
        burnin: 100,
        thin: 25,
        samples: 4,
        seed: 3,
        chain_id: 0,
    };
    run_chain(
        &SamplerKind::Sghmc,
        &model,
        &data,
        16,
        &SamplerConfig::default(),
        &spec,
    )
    .unwrap()
}

#[test]
fn meta_roundtrip_is_exact() {
    for norm in [FeatureNorm::Rms, FeatureNorm::UnitL2, FeatureNorm::None] {
        let m = init_meta_params(9, norm);
        let back = meta_from_bytes(&meta_to_bytes(&m)).unwrap();
        assert_eq!(back.norm, m.norm);
        assert!(back
            .values
            .iter()
            .zip(&m.values)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("meta.l2em");
    let m = init_meta_params(1, FeatureNorm::Rms);
    save_meta(&p, &m).unwrap();
    assert_eq!(load_meta(&p).unwrap(), m);
}

#[test]
fn sample_set_roundtrip_is_exact() {
    let set = blob_samples();
    assert!(set.interval_seconds.is_some());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.l2es");
    save_sample_set(&p, &set).unwrap();
    assert!(timing_path(&p).exists());
    assert_eq!(load_sample_set(&p).unwrap(), set);
    let untimed = set.without_timing();
    save_sample_set(&p, &untimed).unwrap();
    assert!(!timing_path(&p).exists());
    assert_eq!(load_sample_set(&p).unwrap(), untimed);
}

#[test]
fn update_log_and_divergence_survive_roundtrip() {
    let spec = ChainSpec {
        total_steps: 40,
        burnin: 0,
        thin: 10,
        samples: 4,
        seed: 1,
        chain_id: 0,
    };
    let opts = ChainOptions {
        record_updates: true,
        ..ChainOptions::default()
    };
    let run = |eps: f64| {
        let cfg = SamplerConfig {
            step_size: eps,
            ..SamplerConfig::default()
        };
        run_chain_with(
            &SamplerKind::Sghmc,
            &mut FixedTarget(GaussianPotential::isotropic(vec![0.0; 3], 1e-6)),
            vec![1.0; 3],
            Layout::flat(3),
            &cfg,
            &spec,
            opts,
        )
        .unwrap()
        .without_timing()
    };
    let ok = run(1e-2);
    assert_eq!(ok.update_log.len(), 40);
    assert_eq!(
        sample_set_from_bytes(&sample_set_to_bytes(&ok).unwrap()).unwrap(),
        ok
    );
    let bad = run(10.0);
    assert!(bad.divergence.is_some());
    assert_eq!(
        sample_set_from_bytes(&sample_set_to_bytes(&bad).unwrap()).unwrap(),
        bad
    );
}

#[test]
fn corrupted_files_are_format_errors() {
    let bytes = sample_set_to_bytes(&blob_samples().without_timing()).unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[0] ^= 0xff;
    assert!(matches!(
        sample_set_from_bytes(&bad_magic),
        Err(Error::Format { offset: 0, .. })
    ));
    let mut bad_header = bytes.clone();
    bad_header[22] = b'#';
    assert!(matches!(
        sample_set_from_bytes(&bad_header),
        Err(Error::Format { .. })
    ));
    assert!(matches!(
        sample_set_from_bytes(&bytes[..bytes.len() - 3]),
        Err(Error::Format { .. })
    ));
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(matches!(
        sample_set_from_bytes(&trailing),
        Err(Error::Format { .. })
    ));

    let meta = meta_to_bytes(&init_meta_params(0, FeatureNorm::Rms));
    assert!(matches!(
        meta_from_bytes(&meta[..100]),
        Err(Error::Format { .. })
    ));
    let mut bad_norm = meta.clone();
    bad_norm[12] = 9;
    assert!(matches!(
        meta_from_bytes(&bad_norm),
        Err(Error::Format { .. })
    ));
}

#[test]
fn version_mismatch_is_reported() {
    let mut bytes = sample_set_to_bytes(&blob_samples().without_timing()).unwrap();
    bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
    match sample_set_from_bytes(&bytes) {
        Err(Error::Version {
            found: 7,
            supported: 1,
            ..
        }) => {}
        other => panic!("{other:?}"),
    }
    let mut meta = meta_to_bytes(&init_meta_params(0, FeatureNorm::Rms));
    meta[8..12].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(
        meta_from_bytes(&meta),
        Err(Error::Version { found: 2, .. })
    ));
}

#[test]
fn reference_predictives_load_from_binary_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let p = Predictive::new(2, 3, vec![0.2, 0.3, 0.5, 1.0, 0.0, 0.0]).unwrap();
    let bin = dir.path().join("ref.l2ep");
    save_reference(&bin, &p).unwrap();
    assert_eq!(load_reference(&bin).unwrap(), p);
    let json = dir.path().join("ref.json");
    std::fs::write(
        &json,
        r#"{"rows": 2, "cols": 3, "data": [0.2, 0.3, 0.5, 1.0, 0.0, 0.0]}"#,
    )
    .unwrap();
    assert_eq!(load_reference(&json).unwrap(), p);
    std::fs::write(&json, r#"{"rows": 1, "cols": 2, "data": [0.2, 0.3]}"#).unwrap();
    assert!(matches!(load_reference(&json), Err(Error::Format { .. })));
}
