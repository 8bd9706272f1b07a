//! Name-keyed registries of interchangeable strategies.
//!
//! Each algorithm family (inverse-map solvers, Φ evaluators, potential
//! sources) exposes a trait; concrete strategies are registered here under a
//! stable name and instantiated at runtime from configuration or CLI flags.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

type Factory<T> = Box<dyn Fn() -> Box<T> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    factories: BTreeMap<&'static str, Factory<T>>,
    aliases: BTreeMap<&'static str, &'static str>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            factories: BTreeMap::new(),
            aliases: BTreeMap::new(),
        }
    }

    pub fn register<F>(&mut self, name: &'static str, factory: F) -> &mut Self
    where
        F: Fn() -> Box<T> + Send + Sync + 'static,
    {
        self.factories.insert(name, Box::new(factory));
        self
    }

    /// Make `alias` resolve to an already registered `target`.
    pub fn alias(&mut self, alias: &'static str, target: &'static str) -> &mut Self {
        debug_assert!(self.factories.contains_key(target));
        self.aliases.insert(alias, target);
        self
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories
            .keys()
            .chain(self.aliases.keys())
            .copied()
            .collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.resolve(name).is_some()
    }

    fn resolve(&self, name: &str) -> Option<&Factory<T>> {
        let target = self.aliases.get(name).copied().unwrap_or(name);
        self.factories.get(target)
    }

    pub fn create(&self, name: &str) -> Result<Box<T>> {
        self.resolve(name)
            .map(|f| f())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("names", &self.names())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn greet(&self) -> String;
    }

    struct Hello;
    impl Greeter for Hello {
        fn greet(&self) -> String {
            "hello".into()
        }
    }

    #[test]
    fn create_by_name_and_alias() {
        let mut reg: Registry<dyn Greeter> = Registry::new("greeter");
        reg.register("hello", || Box::new(Hello));
        reg.alias("hi", "hello");
        assert_eq!(reg.create("hello").unwrap().greet(), "hello");
        assert_eq!(reg.create("hi").unwrap().greet(), "hello");
        assert!(reg.contains("hi"));
        assert_eq!(reg.names(), vec!["hello", "hi"]);
    }

    #[test]
    fn unknown_name_lists_available() {
        let mut reg: Registry<dyn Greeter> = Registry::new("greeter");
        reg.register("hello", || Box::new(Hello));
        match reg.create("bye") {
            Err(Error::UnknownStrategy { available, .. }) => assert_eq!(available, "hello"),
            _ => panic!("expected UnknownStrategy"),
        }
    }
}
