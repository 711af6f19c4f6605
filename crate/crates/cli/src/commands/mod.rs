pub mod coalescent;
pub mod identities;
pub mod rpc;
pub mod sk;

use serde_json::{Map, Value};

/// Manifest entries shared by every command.
pub fn seeds(master: u64, tasks: &[(&str, u64)]) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("master_seed".into(), Value::from(master));
    m.insert(
        "tasks".into(),
        Value::Object(tasks.iter().map(|(k, v)| ((*k).to_owned(), Value::from(*v))).collect()),
    );
    m
}
