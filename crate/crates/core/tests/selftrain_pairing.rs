use fracheat::harness::experiment::{run_trials, Method, SelfTrainArm};
use fracheat::harness::load_preset;
use fracheat::selftrain::{ConfidenceKind, ThetaSchedule};

/// Two-Moon, 3 labels per class, θ0 = 0.4: self-training should match or
/// beat plain scheme 3 in most paired trials.
#[test]
fn self_training_pairs_against_scheme3() {
    let mut cfg = load_preset("two-moon-benchmark").unwrap().config;
    cfg.cells.retain(|c| c.s == 0.2 && c.labels == 3);
    cfg.methods = vec![Method::Scheme3, Method::SelfTrain];
    cfg.self_train = Some(SelfTrainArm {
        theta0: 0.4,
        t_max: 10,
        schedule: ThetaSchedule::Constant,
        confidence: ConfidenceKind::Base,
    });
    assert_eq!(cfg.trials, 50);
    let res = run_trials(&cfg, None).unwrap();
    let base = &res.get(0.2, 3, Method::Scheme3).unwrap().stats;
    let st = &res.get(0.2, 3, Method::SelfTrain).unwrap().stats;
    let wins = st.accuracies.iter().zip(&base.accuracies).filter(|(a, b)| a >= b).count();
    eprintln!("self-train >= scheme 3 in {wins}/50 trials ({:.3} vs {:.3})", st.mean, base.mean);
    assert!(wins * 10 >= 6 * 50, "{wins}/50");
}
