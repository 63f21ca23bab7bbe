use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcompError};
use crate::model::kernel::{KernelKind, StructureKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationClass {
    /// Member of a monozygotic twin pair.
    Mz,
    /// Member of a dizygotic twin pair.
    Dz,
    FullSib,
    HalfSib,
    Unrelated,
}

impl RelationClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationClass::Mz => "mz",
            RelationClass::Dz => "dz",
            RelationClass::FullSib => "full_sib",
            RelationClass::HalfSib => "half_sib",
            RelationClass::Unrelated => "unrelated",
        }
    }

    fn is_twin(self) -> bool {
        matches!(self, RelationClass::Mz | RelationClass::Dz)
    }
}

impl FromStr for RelationClass {
    type Err = VcompError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mz" => Ok(RelationClass::Mz),
            "dz" => Ok(RelationClass::Dz),
            "full_sib" => Ok(RelationClass::FullSib),
            "half_sib" => Ok(RelationClass::HalfSib),
            "unrelated" => Ok(RelationClass::Unrelated),
            other => Err(VcompError::UnsupportedRelation(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PedigreeRecord {
    pub subject_id: String,
    pub family_id: String,
    pub relation: RelationClass,
    /// Twin-pair identifier; required for `mz`/`dz`, ignored otherwise.
    pub pair_id: Option<String>,
}

impl PedigreeRecord {
    pub fn new(subject: &str, family: &str, relation: RelationClass, pair: Option<&str>) -> Self {
        Self {
            subject_id: subject.to_string(),
            family_id: family.to_string(),
            relation,
            pair_id: pair.map(str::to_string),
        }
    }
}

/// Family membership and relation class of each subject.
///
/// Within a family, twins and full siblings form one sibship (kinship 0.5
/// to each other, 1 between MZ co-twins); a half-sibling shares 0.25 with
/// every related family member; `unrelated` members share nothing.
#[derive(Debug, Clone)]
pub struct Pedigree {
    records: Vec<PedigreeRecord>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    subject_id: String,
    family_id: String,
    relation_class: String,
    #[serde(default)]
    pair_id: Option<String>,
}

impl Pedigree {
    pub fn new(records: Vec<PedigreeRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.subject_id.clone(), i).is_some() {
                return Err(VcompError::InvalidInput(format!("duplicate subject id `{}`", r.subject_id)));
            }
        }
        let mut pairs: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if !r.relation.is_twin() {
                continue;
            }
            let pair = r.pair_id.as_deref().filter(|p| !p.is_empty()).ok_or_else(|| {
                VcompError::InvalidInput(format!("twin `{}` has no pair id", r.subject_id))
            })?;
            let members = pairs.entry(pair).or_default();
            members.push(i);
            if members.len() > 2 {
                return Err(VcompError::DuplicateTwin(r.subject_id.clone()));
            }
        }
        for (pair, members) in &pairs {
            if members.len() != 2 {
                return Err(VcompError::InvalidInput(format!(
                    "twin pair `{pair}` references {} subject(s), expected 2",
                    members.len()
                )));
            }
            let (a, b) = (&records[members[0]], &records[members[1]]);
            if a.relation != b.relation || a.family_id != b.family_id {
                return Err(VcompError::DuplicateTwin(b.subject_id.clone()));
            }
        }
        Ok(Self { records, index })
    }

    /// Reads `subject_id,family_id,relation_class,pair_id`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        Self::from_rows(reader.deserialize())
    }

    pub fn from_csv_reader<R: std::io::Read>(rdr: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rdr);
        Self::from_rows(reader.deserialize())
    }

    fn from_rows(rows: impl Iterator<Item = csv::Result<CsvRow>>) -> Result<Self> {
        let mut records = Vec::new();
        for row in rows {
            let row = row?;
            records.push(PedigreeRecord {
                subject_id: row.subject_id,
                family_id: row.family_id,
                relation: row.relation_class.parse()?,
                pair_id: row.pair_id.filter(|p| !p.is_empty()),
            });
        }
        Self::new(records)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["subject_id", "family_id", "relation_class", "pair_id"])?;
        for r in &self.records {
            w.write_record([
                r.subject_id.as_str(),
                r.family_id.as_str(),
                r.relation.as_str(),
                r.pair_id.as_deref().unwrap_or(""),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn records(&self) -> &[PedigreeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn subject_ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.subject_id.clone()).collect()
    }

    pub fn get(&self, subject: &str) -> Option<&PedigreeRecord> {
        self.index.get(subject).map(|&i| &self.records[i])
    }

    /// Family id per subject in `order`.
    pub fn families_of(&self, order: &[String]) -> Result<Vec<String>> {
        order
            .iter()
            .map(|s| {
                self.get(s)
                    .map(|r| r.family_id.clone())
                    .ok_or_else(|| VcompError::UnknownSubject(s.clone()))
            })
            .collect()
    }
}

fn pair_kinship(a: &PedigreeRecord, b: &PedigreeRecord) -> f64 {
    use RelationClass::*;
    if a.family_id != b.family_id || a.relation == Unrelated || b.relation == Unrelated {
        return 0.0;
    }
    if a.relation.is_twin() && a.pair_id.is_some() && a.pair_id == b.pair_id {
        return if a.relation == Mz { 1.0 } else { 0.5 };
    }
    if a.relation == HalfSib || b.relation == HalfSib {
        return 0.25;
    }
    0.5
}

/// Kinship matrix ordered by `subject_order`: 1 on the diagonal and between
/// MZ co-twins, 0.5 for DZ co-twins and full siblings, 0.25 for
/// half-siblings, 0 otherwise.
pub fn build_kinship(pedigree: &Pedigree, subject_order: &[String]) -> Result<StructureKernel> {
    let recs = subject_order
        .iter()
        .map(|s| pedigree.get(s).ok_or_else(|| VcompError::UnknownSubject(s.clone())))
        .collect::<Result<Vec<_>>>()?;
    let n = recs.len();
    let mut k = DMatrix::identity(n, n);
    for i in 0..n {
        for l in (i + 1)..n {
            if recs[i].subject_id == recs[l].subject_id {
                return Err(VcompError::InvalidInput(format!(
                    "subject `{}` repeated in ordering",
                    recs[i].subject_id
                )));
            }
            let v = pair_kinship(recs[i], recs[l]);
            k[(i, l)] = v;
            k[(l, i)] = v;
        }
    }
    StructureKernel::new(k, KernelKind::Kinship)
}

/// Shared-household indicator `1([K]_{il} > 0)` derived from a kinship kernel.
pub fn build_household(kinship: &StructureKernel) -> Result<StructureKernel> {
    if kinship.kind() != KernelKind::Kinship {
        return Err(VcompError::InvalidInput(format!(
            "household construction needs a kinship kernel, got {:?}",
            kinship.kind()
        )));
    }
    let h = kinship.matrix().map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    StructureKernel::new(h, KernelKind::Household)
}
