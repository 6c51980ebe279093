use std::collections::BTreeMap;
use std::sync::Arc;

use super::strategies::{
    AcquisitionFunction, ConstrainedExpectedImprovement, ExpectedImprovement, FeasibilityOnly,
};
use crate::error::{Error, Result};

pub type AcquisitionFactory = fn() -> Arc<dyn AcquisitionFunction>;

/// Name → constructor table for acquisition functions.
#[derive(Clone)]
pub struct AcquisitionRegistry {
    factories: BTreeMap<&'static str, AcquisitionFactory>,
}

impl Default for AcquisitionRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("ei", || Arc::new(ExpectedImprovement));
        r.register("eic", || Arc::new(ConstrainedExpectedImprovement));
        r.register("feasibility", || Arc::new(FeasibilityOnly));
        r
    }
}

impl AcquisitionRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    /// Registers (or replaces) a strategy under `name`.
    pub fn register(&mut self, name: &'static str, factory: AcquisitionFactory) {
        self.factories.insert(name, factory);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn AcquisitionFunction>> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown acquisition '{name}', expected one of {:?}",
                    self.names()
                ))
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }
}

impl std::fmt::Debug for AcquisitionRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AcquisitionRegistry")
            .field("names", &self.names())
            .finish()
    }
}
