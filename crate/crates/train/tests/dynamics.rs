use infoplay_core::SeedStream;
use infoplay_train::checkpoint::Checkpoint;
use infoplay_train::config::*;
use infoplay_train::dynamics::*;
use infoplay_train::loss;
use infoplay_train::optim::OptimizerConfig;
use infoplay_train::Split;
use rand::Rng;

fn small(seed: u64) -> SupervisedConfig {
    SupervisedConfig {
        seed,
        data: DataConfig::GaussianMixture {
            classes: 3,
            dim: 8,
            train_per_class: 64,
            test_per_class: 64,
            separation: 4.0,
        },
        hidden: vec![32, 32],
        steps: 60,
        batch_size: 32,
        eval_every: 20,
        probe_size: 24,
        ..Default::default()
    }
}

fn small_ssl(seed: u64) -> SslConfig {
    SslConfig {
        seed,
        data: DataConfig::GaussianMixture {
            classes: 3,
            dim: 8,
            train_per_class: 200,
            test_per_class: 64,
            separation: 4.0,
        },
        hidden: vec![32, 32],
        steps: 30,
        labels_per_class: 4,
        unlabeled: 300,
        batch_size: 8,
        mu: 3,
        eval_every: 10,
        probe_size: 24,
        ..Default::default()
    }
}

#[test]
fn supervised_runs_are_deterministic() {
    let cfg = SupervisedConfig {
        aux: AuxConfig {
            mode: AuxMode::Mi,
            ..Default::default()
        },
        augment: true,
        ..small(3)
    };
    let a = train_supervised(&cfg).unwrap();
    let b = train_supervised(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
    assert_eq!(a.records.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 20, 40, 60]);
}

#[test]
fn zero_lambda_matches_no_aux_bit_for_bit() {
    for mode in [AuxMode::Mi, AuxMode::Hdr] {
        let off = small(5);
        let zero = SupervisedConfig {
            aux: AuxConfig {
                mode,
                lambda: 0.0,
                detach_head: false,
            },
            ..small(5)
        };
        let a = train_supervised(&off).unwrap();
        let b = train_supervised(&zero).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.checkpoint.params, b.checkpoint.params);
    }
    let a = train_semisupervised(&small_ssl(1)).unwrap();
    let b = train_semisupervised(&SslConfig {
        aux: AuxConfig {
            mode: AuxMode::Hdr,
            lambda: 0.0,
            detach_head: false,
        },
        ..small_ssl(1)
    })
    .unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.checkpoint.params, b.checkpoint.params);
}

#[test]
fn ssl_runs_are_deterministic_and_log_mask_fraction() {
    let cfg = SslConfig {
        aux: AuxConfig {
            mode: AuxMode::Mi,
            ..Default::default()
        },
        ..small_ssl(2)
    };
    let a = train_semisupervised(&cfg).unwrap();
    let b = train_semisupervised(&cfg).unwrap();
    assert_eq!(a, b);
    for r in &a.records[1..] {
        let m = r.mask_fraction.unwrap();
        assert!((0.0..=1.0).contains(&m));
    }
}

#[test]
fn near_one_threshold_silences_the_unlabeled_term() {
    let mut rng = SeedStream::new(8).rng("logits");
    let weak = nalgebra::DMatrix::from_fn(40, 5, |_, _| rng.random_range(-3.0..3.0));
    let strong = weak.map(|v| v * 0.5);
    let l = loss::ssl_unlabeled_loss(&weak, &strong, 1.0 - 1e-9).unwrap();
    assert_eq!(l.value, 0.0);
    assert_eq!(l.mask_fraction, 0.0);
    assert!(l.d_strong.iter().all(|&g| g == 0.0));
}

#[test]
fn training_loss_decreases_early() {
    let cfg = SupervisedConfig {
        steps: 50,
        eval_every: 50,
        ..small(0)
    };
    let t = train_supervised(&cfg).unwrap();
    assert!(t.last().train_loss < t.first().train_loss);
}

#[test]
fn linear_probe_separates_wide_mixture() {
    let cfg = SupervisedConfig {
        data: DataConfig::GaussianMixture {
            classes: 4,
            dim: 16,
            train_per_class: 256,
            test_per_class: 256,
            separation: 8.0,
        },
        hidden: vec![],
        steps: 300,
        eval_every: 300,
        ..Default::default()
    };
    let t = train_supervised(&cfg).unwrap();
    assert!(t.last().test_acc > 0.99, "{}", t.last().test_acc);
}

#[test]
fn interpolation_endpoints_reproduce_the_checkpoints() {
    let a = train_supervised(&small(1)).unwrap();
    let b = train_supervised(&SupervisedConfig {
        order_seed: Some(77),
        ..small(1)
    })
    .unwrap();
    let at0 = interpolate_checkpoints(&a.checkpoint, &b.checkpoint, 0.0).unwrap();
    let at1 = interpolate_checkpoints(&a.checkpoint, &b.checkpoint, 1.0).unwrap();
    assert_eq!(at0.params, a.checkpoint.params);
    assert_eq!(at1.params, b.checkpoint.params);

    let cfg = small(1);
    let data = cfg.data.build(cfg.seed).unwrap();
    let probe = probe_batch(&data, cfg.seed, cfg.probe_size);
    let pts = interpolation_sweep(&a.checkpoint, &b.checkpoint, 21, &data, &probe).unwrap();
    assert_eq!(pts.len(), 21);
    assert_eq!(pts[0].0, 0.0);
    assert_eq!(pts[20].0, 1.0);
    assert!((pts[10].0 - 0.5).abs() < 1e-15);
    assert_eq!(pts[0].1.test_acc, a.last().test_acc);
    assert_eq!(pts[20].1.test_acc, b.last().test_acc);
    assert!(accuracy_barrier(&pts) >= 0.0);
}

#[test]
fn interpolation_rejects_mismatched_architectures() {
    let a = train_supervised(&small(1)).unwrap();
    let b = train_supervised(&SupervisedConfig {
        hidden: vec![16],
        steps: 2,
        ..small(1)
    })
    .unwrap();
    assert!(interpolate_checkpoints(&a.checkpoint, &b.checkpoint, 0.5).is_err());
}

#[test]
fn barrier_of_flat_path_is_zero() {
    let t = train_supervised(&small(2)).unwrap();
    let cfg = small(2);
    let data = cfg.data.build(cfg.seed).unwrap();
    let probe = probe_batch(&data, cfg.seed, cfg.probe_size);
    let pts = interpolation_sweep(&t.checkpoint, &t.checkpoint, 5, &data, &probe).unwrap();
    assert_eq!(accuracy_barrier(&pts), 0.0);
}

#[test]
fn pruning_matches_full_sort_oracle() {
    let mut rng = SeedStream::new(11).rng("prune");
    for trial in 0..100 {
        let n = rng.random_range(1..200);
        let values: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.1) {
                    0.5
                } else {
                    rng.random_range(-1.0..1.0)
                }
            })
            .collect();
        let eligible: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
        let s: f64 = rng.random_range(0.0..0.99);
        let mask = prune_lowest(&values, &eligible, s).unwrap();

        let pool: Vec<usize> = (0..n).filter(|&i| eligible[i]).collect();
        let k = (s * pool.len() as f64).floor() as usize;
        let mut ranked: Vec<(f64, usize)> = pool.iter().map(|&i| (values[i].abs(), i)).collect();
        ranked.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut expect = vec![true; n];
        for &(_, i) in &ranked[..k] {
            expect[i] = false;
        }
        assert_eq!(mask.keep, expect, "trial {trial}");
        assert_eq!(mask.keep.iter().filter(|&&k| !k).count(), k);
    }
}

#[test]
fn pruned_coordinates_stay_zero_through_finetune() {
    let dense = train_supervised(&small(4)).unwrap();
    let ft = SupervisedConfig {
        steps: 20,
        eval_every: 20,
        ..small(4)
    };
    let report = prune_and_finetune(&dense.checkpoint, 0.9, &ft).unwrap();
    let params = &report.finetune.checkpoint.params;
    let weights = dense.checkpoint.model().unwrap().weight_positions();
    let pool = weights.iter().filter(|&&w| w).count();
    let removed = report.mask.keep.iter().filter(|&&k| !k).count();
    assert_eq!(removed, (0.9 * pool as f64).floor() as usize);
    for (i, &k) in report.mask.keep.iter().enumerate() {
        if !k {
            assert!(weights[i]);
            assert_eq!(params[i].to_bits(), 0.0f64.to_bits());
        }
    }
    assert!(report.info_before_vs_after.is_some());
    assert!((0.0..=1.0).contains(&report.acc_after));
}

#[test]
fn sparsity_outside_unit_interval_is_rejected() {
    let dense = train_supervised(&small(4)).unwrap();
    assert!(magnitude_prune(&dense.checkpoint, 1.0).is_err());
    assert!(magnitude_prune(&dense.checkpoint, -0.1).is_err());
}

#[test]
fn checkpoint_round_trips_through_disk() {
    let t = train_supervised(&small(6)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    t.checkpoint.save(&path, &t.fingerprint).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, t.checkpoint);
    let side = Checkpoint::load_sidecar(&path).unwrap();
    assert_eq!(side.fingerprint, t.fingerprint);
    assert_eq!(side.param_count, t.checkpoint.params.len() as u64);
    let data = small(6).data.build(6).unwrap();
    assert_eq!(
        accuracy(&back.model().unwrap(), &data, Split::Test).unwrap(),
        t.last().test_acc
    );
}

#[test]
fn resumed_finetune_with_full_mask_equals_plain_continuation() {
    let t = train_supervised(&small(9)).unwrap();
    let cont = SupervisedConfig {
        steps: 10,
        eval_every: 10,
        ..small(9)
    };
    let keep = vec![true; t.checkpoint.params.len()];
    let a = train_supervised_from(&cont, Some(&t.checkpoint), None).unwrap();
    let b = train_supervised_from(&cont, Some(&t.checkpoint), Some(&keep)).unwrap();
    assert_eq!(a.checkpoint.params, b.checkpoint.params);
}

#[test]
fn grokking_run_logs_every_epoch() {
    let cfg = GrokConfig {
        modulus: 7,
        hidden: vec![32],
        epochs: 40,
        probe_size: 14,
        ..Default::default()
    };
    let t = run_grokking(&cfg).unwrap();
    assert_eq!(t.records.len(), 40);
    for (i, r) in t.records.iter().enumerate() {
        assert_eq!(r.step, i + 1);
        assert!(r.info.is_some());
    }
    assert_eq!(t, run_grokking(&cfg).unwrap());
}

#[test]
fn optimizer_kinds_both_train() {
    for optim in [
        OptimizerConfig::default(),
        OptimizerConfig::AdamW {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        },
    ] {
        let t = train_supervised(&SupervisedConfig { optim, ..small(0) }).unwrap();
        assert!(t.last().train_loss < t.first().train_loss);
    }
}

#[test]
fn fingerprint_ignores_key_order() {
    let a: SupervisedConfig = serde_json::from_str(r#"{"seed":3,"steps":10,"batch_size":8}"#).unwrap();
    let b: SupervisedConfig = serde_json::from_str(r#"{"batch_size":8,"steps":10,"seed":3}"#).unwrap();
    assert_eq!(fingerprint(&a).unwrap(), fingerprint(&b).unwrap());
    assert_ne!(fingerprint(&a).unwrap(), fingerprint(&small(3)).unwrap());
}

#[test]
fn unknown_config_keys_are_rejected() {
    assert!(serde_json::from_str::<SupervisedConfig>(r#"{"seeds":3}"#).is_err());
    assert!(serde_json::from_str::<SslConfig>(r#"{"tua":0.9}"#).is_err());
}
