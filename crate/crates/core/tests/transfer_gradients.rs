use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tac_core::dmpnn::Pooling;
use tac_core::gradcheck::{check_total_with, grl_contract, run_transfer_suite, GradcheckConfig};
use tac_core::transfer::{GradReversal, Variant};

#[test]
fn transfer_suite_matches_finite_differences() {
    let entries = run_transfer_suite(&GradcheckConfig { seed: 1, ..Default::default() }).unwrap();
    assert!(entries.len() >= 20);
    for e in &entries {
        assert!(e.passed(), "{} / {}: {:.3e} at {}", e.loss, e.params, e.max_rel_error, e.worst);
    }
}

#[test]
fn reversal_is_exact_negation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = GradcheckConfig::default();
    for variant in [Variant::TAcF, Variant::TAcC, Variant::TAcFC, Variant::Dann] {
        for pooling in [Pooling::Mean, Pooling::Attention] {
            let report = grl_contract(&mut rng, &cfg, variant, pooling).unwrap();
            assert!(report.holds(), "{variant} {pooling:?}: {report:?}");
        }
    }
}

#[test]
fn bypassing_the_reversal_is_caught() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = GradcheckConfig::default();
    let entries = check_total_with(&mut rng, &cfg, Variant::TAcFC, Pooling::Mean, GradReversal::Bypassed).unwrap();
    let encoder = entries.iter().find(|e| e.params == "encoder+classifier").unwrap();
    assert!(!encoder.passed(), "{encoder:?}");
}
