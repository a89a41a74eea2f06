//! Gradient-based evasion attacks on flattened `[0, 1]` inputs, with
//! bookkeeping of which samples changed prediction.
//!
//! Attacks are looked up by name in [`attack_registry`]; hyperparameters
//! default to the torchattacks values.

mod config;
mod methods;
mod suite;

pub use config::{default_params, display_name, AttackConfig, AttackParams, METHODS};
pub use methods::{
    attack_registry, build_attack, Attack, Budget, DeepFool, Ffgsm, Fgsm, GaussianNoise, Mifgsm, Pgd, PgdL2, Rfgsm,
};
pub use suite::{run_attack, run_attack_suite, sample_rng, AdversarialSet, ATTACK_BATCH};
