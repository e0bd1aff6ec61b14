use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;

use super::{write_file, ExperimentError, SplitSpec};
use crate::dataset::QuestionRecord;
use crate::seed::derive_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<QuestionRecord>,
    pub dev: Vec<QuestionRecord>,
    pub test: Vec<QuestionRecord>,
}

impl DatasetSplit {
    pub fn parts(&self) -> [(&'static str, &[QuestionRecord]); 3] {
        [("train", &self.train), ("dev", &self.dev), ("test", &self.test)]
    }

    /// Writes `{train,dev,test}.txt`, one qid per line.
    pub fn write_manifests(&self, dir: &Path) -> Result<(), ExperimentError> {
        for (name, records) in self.parts() {
            let mut buf = Vec::new();
            for r in records {
                writeln!(buf, "{}", r.qid).expect("writing to a Vec cannot fail");
            }
            write_file(&dir.join(format!("{name}.txt")), &buf)?;
        }
        Ok(())
    }
}

/// Sorts by qid, shuffles with the spec's seed, then slices train, dev and
/// test off the front in that order. Leftover records are unused.
pub fn split_dataset(records: &[QuestionRecord], spec: SplitSpec) -> Result<DatasetSplit, ExperimentError> {
    if spec.total() > records.len() {
        return Err(ExperimentError::InfeasibleSplit {
            requested: spec.total(),
            available: records.len(),
        });
    }
    let mut sorted: Vec<QuestionRecord> = records.to_vec();
    sorted.sort_by(|a, b| a.qid.cmp(&b.qid));
    let mut rng = derive_rng(spec.seed, "split", "shuffle");
    sorted.shuffle(&mut rng);
    let mut rest = sorted.into_iter();
    let train = rest.by_ref().take(spec.train).collect();
    let dev = rest.by_ref().take(spec.dev).collect();
    let test = rest.take(spec.test).collect();
    Ok(DatasetSplit { train, dev, test })
}
