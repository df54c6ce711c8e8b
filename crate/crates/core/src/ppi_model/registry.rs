use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::ModelError;

type DerivedFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type Builtin = (&'static str, usize, Box<DerivedFn>, Option<(f64, f64)>);

/// User-supplied function combining the results of its children.
pub struct DerivedFunction {
    name: String,
    arity: usize,
    function: Box<DerivedFn>,
    output_range: Option<(f64, f64)>,
}

impl DerivedFunction {
    pub fn new(
        name: impl Into<String>,
        arity: usize,
        function: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        output_range: Option<(f64, f64)>,
    ) -> Self {
        DerivedFunction {
            name: name.into(),
            arity,
            function: Box::new(function),
            output_range,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Declared output range, required by sample-and-aggregate.
    pub fn output_range(&self) -> Option<(f64, f64)> {
        self.output_range
    }

    pub fn call(&self, args: &[f64]) -> f64 {
        (self.function)(args)
    }
}

impl fmt::Debug for DerivedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DerivedFunction")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("output_range", &self.output_range)
            .finish()
    }
}

#[derive(Debug, Clone, Default)]
pub struct DerivedRegistry {
    entries: BTreeMap<String, Arc<DerivedFunction>>,
}

impl DerivedRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry preloaded with `ratio_percent`, `ratio`, `difference` and `identity`.
    pub fn with_builtins() -> Self {
        let mut registry = Self::new();
        let ratio = |a: &[f64]| if a[1] == 0.0 { 0.0 } else { a[0] / a[1] };
        let builtins: [Builtin; 4] = [
            ("ratio_percent", 2, Box::new(move |a| ratio(a) * 100.0), Some((0.0, 100.0))),
            ("ratio", 2, Box::new(ratio), Some((0.0, 1.0))),
            ("difference", 2, Box::new(|a| a[0] - a[1]), None),
            ("identity", 1, Box::new(|a| a[0]), None),
        ];
        for (name, arity, function, range) in builtins {
            registry.register(name, arity, function, range).expect("builtin names are distinct");
        }
        registry
    }

    pub fn register(
        &mut self,
        name: &str,
        arity: usize,
        function: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        output_range: Option<(f64, f64)>,
    ) -> Result<Arc<DerivedFunction>, ModelError> {
        if self.entries.contains_key(name) {
            return Err(ModelError::DuplicateName(name.to_string()));
        }
        let entry = Arc::new(DerivedFunction::new(name, arity, function, output_range));
        self.entries.insert(name.to_string(), Arc::clone(&entry));
        Ok(entry)
    }

    pub fn get(&self, name: &str) -> Option<Arc<DerivedFunction>> {
        self.entries.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}
