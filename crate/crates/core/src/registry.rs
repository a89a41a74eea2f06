use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub type Factory<C, T> = fn(&C) -> Result<Box<T>>;

/// Name-keyed factories for a family of interchangeable strategies.
pub struct Registry<C, T: ?Sized> {
    entries: BTreeMap<String, Factory<C, T>>,
    unknown: fn(String) -> Error,
}

impl<C, T: ?Sized> Registry<C, T> {
    pub fn new(unknown: fn(String) -> Error) -> Self {
        Self {
            entries: BTreeMap::new(),
            unknown,
        }
    }

    /// Registers `factory` under `name` (case-insensitive). A later
    /// registration under the same name replaces the earlier one.
    pub fn register(&mut self, name: &str, factory: Factory<C, T>) -> &mut Self {
        self.entries.insert(name.to_ascii_lowercase(), factory);
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(&name.to_ascii_lowercase())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, config: &C) -> Result<Box<T>> {
        match self.entries.get(&name.to_ascii_lowercase()) {
            Some(factory) => factory(config),
            None => Err((self.unknown)(name.to_string())),
        }
    }
}
