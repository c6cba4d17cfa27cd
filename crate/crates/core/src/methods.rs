//! Training methods selectable by name.
//!
//! A method is a rule for turning a base [`TrainConfig`] into the config it
//! actually trains with. The registry maps names to methods so commands and
//! experiments can pick one at runtime.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::iom::{train_iom, RunRecord, TrainConfig};
use crate::tasks::Dataset;

pub trait Method: Send + Sync {
    fn name(&self) -> &str;

    fn description(&self) -> &str;

    /// The config this method trains with, derived from `base`.
    fn configure(&self, base: &TrainConfig) -> TrainConfig;

    /// Whether the method's runs are meaningful to sweep over `lambda`.
    fn uses_lambda(&self) -> bool {
        true
    }

    fn train(&self, dataset: &Dataset, base: &TrainConfig) -> Result<RunRecord> {
        train_iom(dataset, &self.configure(base))
    }
}

/// Invariance-regularized training with co-evolving particles. At λ = 0
/// the invariance term vanishes, so the run is plain regression with the
/// adversarial phase off.
pub struct Iom;

impl Method for Iom {
    fn name(&self) -> &str {
        "iom"
    }

    fn description(&self) -> &str {
        "surrogate regression with an adversarial representation-invariance term"
    }

    fn configure(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            adversarial: base.lambda > 0.0,
            conservatism: None,
            ..base.clone()
        }
    }
}

/// [`Iom`] plus a multiplier-weighted conservatism term.
pub struct IomConservative;

impl Method for IomConservative {
    fn name(&self) -> &str {
        "iom-c"
    }

    fn description(&self) -> &str {
        "iom plus a dual-weighted penalty on particles valued above the data"
    }

    fn configure(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            adversarial: true,
            conservatism: Some(base.conservatism.clone().unwrap_or_default()),
            ..base.clone()
        }
    }
}

/// Plain regression followed by gradient ascent on the fitted surrogate.
pub struct Naive;

impl Method for Naive {
    fn name(&self) -> &str {
        "naive"
    }

    fn description(&self) -> &str {
        "plain regression, no discriminator and no particles during training"
    }

    fn configure(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            lambda: 0.0,
            adversarial: false,
            conservatism: None,
            ..base.clone()
        }
    }

    fn uses_lambda(&self) -> bool {
        false
    }
}

/// Name-indexed collection of methods.
#[derive(Clone, Default)]
pub struct MethodRegistry {
    methods: BTreeMap<String, Arc<dyn Method>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Iom));
        r.register(Arc::new(IomConservative));
        r.register(Arc::new(Naive));
        r
    }

    pub fn register(&mut self, method: Arc<dyn Method>) {
        self.methods.insert(method.name().to_string(), method);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Method>> {
        self.methods
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownMethod {
                name: name.to_string(),
                available: self.names(),
            })
    }

    pub fn names(&self) -> Vec<String> {
        self.methods.keys().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves_builtins() {
        let r = MethodRegistry::builtin();
        assert_eq!(r.names(), vec!["iom", "iom-c", "naive"]);
        let base = TrainConfig::compact();
        let naive = r.get("naive").unwrap().configure(&base);
        assert!(!naive.adversarial);
        assert_eq!(naive.lambda, 0.0);
        assert!(r
            .get("iom-c")
            .unwrap()
            .configure(&base)
            .conservatism
            .is_some());
        assert!(r.get("iom").unwrap().configure(&base).adversarial);
        let zero = TrainConfig {
            lambda: 0.0,
            ..base.clone()
        };
        assert!(!r.get("iom").unwrap().configure(&zero).adversarial);
        match r.get("cbas") {
            Err(Error::UnknownMethod { available, .. }) => assert_eq!(available.len(), 3),
            other => panic!("unexpected {:?}", other.map(|m| m.name().to_string())),
        }
    }
}
