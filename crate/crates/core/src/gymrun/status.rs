use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::TestStatus;

/// How a single suite execution ended.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub exit_code: Option<i32>,
    pub wall_time_secs: f64,
    pub timed_out: bool,
    pub oom: bool,
}

impl RunMeta {
    pub fn is_abnormal(&self) -> bool {
        self.timed_out || self.oom
    }
}

/// Per-test statuses from one run. Tests missing from the map are `NONE`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatusMap {
    pub tests: BTreeMap<String, TestStatus>,
    pub meta: RunMeta,
}

impl StatusMap {
    pub fn new(tests: BTreeMap<String, TestStatus>, meta: RunMeta) -> Self {
        StatusMap { tests, meta }
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, TestStatus)>) -> Self {
        StatusMap {
            tests: pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            meta: RunMeta::default(),
        }
    }

    pub fn get(&self, id: &str) -> TestStatus {
        self.tests.get(id).copied().unwrap_or(TestStatus::None)
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    pub fn count(&self, status: TestStatus) -> usize {
        self.tests.values().filter(|&&s| s == status).count()
    }
}
