//! Name-keyed registries of interchangeable strategies.
//!
//! Every algorithm family that can be swapped at runtime (wavelet bases,
//! reconstruction modes, input pipelines) sits behind a trait object and is
//! looked up by its registered name, so config files and CLI flags select
//! implementations without the call sites knowing the concrete type.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

type Factory<T> = Box<dyn Fn() -> Box<T> + Send + Sync>;

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<&'static str, Factory<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register<F>(&mut self, name: &'static str, factory: F) -> &mut Self
    where
        F: Fn() -> Box<T> + Send + Sync + 'static,
    {
        self.entries.insert(name, Box::new(factory));
        self
    }

    pub fn get(&self, name: &str) -> Result<Box<T>> {
        match self.entries.get(name) {
            Some(factory) => Ok(factory()),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().join(", "),
            }),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("kind", &self.kind)
            .field("entries", &self.names())
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
    fn lookup_by_name() {
        let mut reg: Registry<dyn Greeter> = Registry::new("greeter");
        reg.register("hello", || Box::new(Hello));
        assert_eq!(reg.get("hello").unwrap().greet(), "hello");
        assert!(reg.contains("hello"));
        assert_eq!(reg.names(), vec!["hello"]);
    }

    #[test]
    fn unknown_name_lists_known_entries() {
        let mut reg: Registry<dyn Greeter> = Registry::new("greeter");
        reg.register("hello", || Box::new(Hello));
        let err = reg.get("bye").err().unwrap();
        let msg = err.to_string();
        assert!(msg.contains("unknown greeter `bye`"), "{msg}");
        assert!(msg.contains("hello"), "{msg}");
    }
}
