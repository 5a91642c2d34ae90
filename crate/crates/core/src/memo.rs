use std::collections::HashMap;
use std::hash::Hash;
use std::sync::{Arc, RwLock};

/// A read-mostly memo table shared between threads. When it reaches its
/// capacity it is cleared wholesale; entries are pure functions of their key.
#[derive(Debug)]
pub struct Memo<K, V> {
    map: RwLock<HashMap<K, Arc<V>>>,
    capacity: usize,
}

impl<K: Eq + Hash + Copy, V> Memo<K, V> {
    pub fn new(capacity: usize) -> Self {
        Self {
            map: RwLock::new(HashMap::new()),
            capacity: capacity.max(1),
        }
    }

    pub fn get_or_insert_with(&self, key: K, compute: impl FnOnce() -> V) -> Arc<V> {
        if let Some(v) = self.map.read().unwrap().get(&key) {
            return Arc::clone(v);
        }
        let v = Arc::new(compute());
        let mut map = self.map.write().unwrap();
        if map.len() >= self.capacity {
            map.clear();
        }
        Arc::clone(map.entry(key).or_insert(v))
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
