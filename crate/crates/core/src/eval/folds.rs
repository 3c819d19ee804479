use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One leave-one-subject-out split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test_subject: String,
    pub train_subjects: Vec<String>,
}

/// One fold per distinct subject, in sorted subject order.
pub fn loso_folds<I, S>(subjects: I) -> Result<Vec<Fold>>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let distinct: BTreeSet<String> = subjects.into_iter().map(|s| s.as_ref().to_owned()).collect();
    if distinct.len() < 2 {
        return Err(Error::TooFewSubjects(distinct.len()));
    }
    Ok(distinct
        .iter()
        .map(|test| Fold {
            test_subject: test.clone(),
            train_subjects: distinct.iter().filter(|s| *s != test).cloned().collect(),
        })
        .collect())
}
