//! Process-wide string interning for names of constants, variables and predicates.

use dashmap::DashMap;
use std::cmp::Ordering;
use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::OnceLock;

struct SymData {
    name: &'static str,
    hash: u64,
}

/// An interned name. Equality is pointer equality; ordering is by the underlying string.
#[derive(Clone, Copy)]
pub struct Sym(&'static SymData);

fn table() -> &'static DashMap<&'static str, &'static SymData> {
    static TABLE: OnceLock<DashMap<&'static str, &'static SymData>> = OnceLock::new();
    TABLE.get_or_init(DashMap::new)
}

pub(crate) fn stable_hash<T: Hash + ?Sized>(value: &T) -> u64 {
    let mut h = DefaultHasher::new();
    value.hash(&mut h);
    h.finish()
}

impl Sym {
    pub fn new(name: &str) -> Sym {
        if let Some(found) = table().get(name) {
            return Sym(*found);
        }
        let leaked: &'static str = Box::leak(name.to_owned().into_boxed_str());
        let data = *table().entry(leaked).or_insert_with(|| {
            Box::leak(Box::new(SymData {
                name: leaked,
                hash: stable_hash(leaked),
            }))
        });
        Sym(data)
    }

    pub fn as_str(self) -> &'static str {
        self.0.name
    }

    pub(crate) fn stable_hash(self) -> u64 {
        self.0.hash
    }
}

impl PartialEq for Sym {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.0, other.0)
    }
}

impl Eq for Sym {}

impl Hash for Sym {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl PartialOrd for Sym {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Sym {
    fn cmp(&self, other: &Self) -> Ordering {
        if self == other {
            Ordering::Equal
        } else {
            self.0.name.cmp(other.0.name)
        }
    }
}

impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0.name)
    }
}

impl fmt::Debug for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0.name)
    }
}
