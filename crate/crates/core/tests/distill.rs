mod common;

use common::{linear_pair, normal_matrix, set_from};
use featdistill::distill::{
    adamw_step, cosine_schedule, distill_fit, distill_fit_matrices, logsum_loss, AdamHyper,
    AdamState, DistillConfig, EarlyStop, ParamGroup, StopReason, StopSignal, StudentArch,
    ViolationCount,
};
use featdistill::simmetrics::linear_cka;
use featdistill::Matrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fast_config(seed: u64) -> DistillConfig {
    DistillConfig {
        lr_start: 1e-2,
        lr_end: 1e-4,
        total_steps: Some(2000),
        seed,
        ..DistillConfig::default()
    }
}

#[test]
fn learns_a_linear_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (zs, zt) = linear_pair(&mut rng, 2048, 16);
    let before = linear_cka(&zs, &zt).unwrap().value;
    let out = distill_fit_matrices(&zs, &zt, &fast_config(5)).unwrap();
    let first = out.trace[0].loss;
    let last = out.trace.last().unwrap().loss;
    let after = linear_cka(&out.model.project(&zs).unwrap(), &zt).unwrap().value;
    assert!(before < 0.9, "{before}");
    assert!(first - last > 5.0, "{first} -> {last}");
    assert!(after >= 0.99, "{after}");
    assert!(out.steps_run <= 2000);
}

#[test]
fn replay_is_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (zs, zt) = linear_pair(&mut rng, 300, 5);
    let cfg = DistillConfig {
        student_arch: StudentArch::Mlp { hidden: vec![7] },
        total_steps: Some(120),
        ..fast_config(9)
    };
    let a = distill_fit_matrices(&zs, &zt, &cfg).unwrap();
    let b = distill_fit_matrices(&zs, &zt, &cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.model, b.model);
    let c = distill_fit_matrices(&zs, &zt, &DistillConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.trace, c.trace);
}

#[test]
fn trace_follows_the_schedules() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (zs, zt) = linear_pair(&mut rng, 100, 3);
    let cfg = DistillConfig { total_steps: Some(50), max_violations: 1000, ..fast_config(1) };
    let out = distill_fit_matrices(&zs, &zt, &cfg).unwrap();
    assert_eq!(out.stop_reason, StopReason::TotalSteps);
    assert_eq!(out.trace.len(), 50);
    for (t, r) in out.trace.iter().enumerate() {
        assert_eq!(r.step, t);
        assert_eq!(r.lr, cosine_schedule(t, 50, 1e-2, 1e-4));
        assert_eq!(r.wd, cosine_schedule(t, 50, 0.05, 0.5));
    }
}

#[test]
fn sets_are_aligned_by_id() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (zs, zt) = linear_pair(&mut rng, 64, 4);
    let s = set_from(&zs, None, 0);
    let mut rows: Vec<usize> = (0..64).collect();
    rows.shuffle(&mut rng);
    let shuffled = zt.select_rows(&rows);
    let mut t = set_from(&shuffled, None, 0);
    // relabel so teacher row k carries the id of student row rows[k]
    let meta = rows
        .iter()
        .map(|&r| featdistill::embedstore::SampleMeta::new(format!("s{r:05}")))
        .collect();
    t = featdistill::embedstore::EmbeddingSet::new(4, t.data().to_vec(), meta, vec![], "").unwrap();
    let cfg = DistillConfig { total_steps: Some(30), ..fast_config(4) };
    let (fit, pairs) = distill_fit::<f64>(&s, &t, &cfg).unwrap();
    assert_eq!(pairs.pairs.len(), 64);
    let direct = distill_fit_matrices(&s.to_matrix::<f64>(), &zt.map(|v| v as f32 as f64), &cfg).unwrap();
    assert_eq!(fit.trace, direct.trace);
}

#[test]
fn early_stop_long_runs() {
    for count in [ViolationCount::Cumulative, ViolationCount::Consecutive] {
        let mut flat = EarlyStop::new(100, 10, count);
        let mut down = EarlyStop::new(100, 10, count);
        for t in 0..100_000 {
            assert_eq!(flat.update(0.25).unwrap(), StopSignal::Continue);
            assert_eq!(down.update(-(t as f64)).unwrap(), StopSignal::Continue);
        }
        assert_eq!(flat.violations() + down.violations(), 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn loss_is_homogeneous_and_order_free(
        b in 1usize..6,
        d in 1usize..6,
        c in prop_oneof![-50.0f64..-0.02, 0.02f64..50.0],
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = normal_matrix(&mut rng, b, d);
        let base = logsum_loss(&e, 4.0, 1e-12).unwrap();
        prop_assume!(base > (1e-9f64).ln());
        let scaled = logsum_loss(&e.scale(c), 4.0, 1e-12).unwrap();
        prop_assert!((scaled - base - 4.0 * c.abs().ln()).abs() <= 1e-9);

        let mut flat = e.as_slice().to_vec();
        flat.shuffle(&mut rng);
        let permuted = Matrix::from_vec(d, b, flat).unwrap();
        prop_assert!((logsum_loss(&permuted, 4.0, 1e-12).unwrap() - base).abs() <= 1e-12);
    }

    #[test]
    fn schedule_is_monotone_with_exact_ends(total in 1usize..5000, a in 1e-8f64..1.0, frac in 0.0f64..1.0) {
        let b = a * frac;
        prop_assert_eq!(cosine_schedule(0, total, a, b), a);
        prop_assert_eq!(cosine_schedule(total, total, a, b), b);
        let mut prev = a;
        for t in 1..=total.min(500) {
            let v = cosine_schedule(t, total, a, b);
            prop_assert!(v <= prev && v >= b);
            prev = v;
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_identity(values in prop::collection::vec(-10.0f64..10.0, 1..20), steps in 1usize..5) {
        let mut p = values.clone();
        let g = vec![0.0; values.len()];
        let mut st = AdamState::default();
        for _ in 0..steps {
            adamw_step(&mut [ParamGroup { values: &mut p, grads: &g, decay: true }], &mut st, &AdamHyper::default(), 0.1, 0.0).unwrap();
        }
        prop_assert_eq!(p, values);
    }
}
