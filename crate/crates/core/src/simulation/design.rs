use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcompError};
use crate::estimate::CovarianceSet;
use crate::model::{
    build_household, build_kinship, ComponentSpec, Pedigree, PedigreeRecord, RelationClass, StructureKernel,
    TraitMatrix,
};
use crate::regression::BlockPartition;
use crate::simulation::sampling::MatrixNormalSampler;
use crate::simulation::truth::{connectome_truth, make_lowdim_truth, ConnectomeTruthConfig};

/// Synthetic family composition. Fractions are shares of subjects in the
/// base block; whatever is left over are singletons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilyMix {
    pub mz_pairs: f64,
    pub dz_pairs: f64,
    pub sib_pairs: f64,
    pub base_size: usize,
    /// Seed for the order in which families appear in the base block.
    pub seed: u64,
}

impl Default for FamilyMix {
    fn default() -> Self {
        Self { mz_pairs: 0.15, dz_pairs: 0.10, sib_pairs: 0.25, base_size: 1000, seed: 17 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FamilyShape {
    Mz,
    Dz,
    Sibs,
    Single,
}

impl FamilyShape {
    fn size(self) -> usize {
        if self == FamilyShape::Single {
            1
        } else {
            2
        }
    }
}

impl FamilyMix {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.mz_pairs, self.dz_pairs, self.sib_pairs];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || fr.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(VcompError::InvalidInput("family mix fractions must be in [0, 1] and sum to at most 1".into()));
        }
        if self.base_size == 0 {
            return Err(VcompError::InvalidInput("family mix base size must be positive".into()));
        }
        Ok(())
    }

    fn base_families(&self) -> Vec<FamilyShape> {
        let pairs = |f: f64| ((f * self.base_size as f64) / 2.0).floor() as usize;
        let (mz, dz, sib) = (pairs(self.mz_pairs), pairs(self.dz_pairs), pairs(self.sib_pairs));
        let singles = self.base_size.saturating_sub(2 * (mz + dz + sib));
        let mut fams = Vec::with_capacity(mz + dz + sib + singles);
        fams.extend(std::iter::repeat_n(FamilyShape::Mz, mz));
        fams.extend(std::iter::repeat_n(FamilyShape::Dz, dz));
        fams.extend(std::iter::repeat_n(FamilyShape::Sibs, sib));
        fams.extend(std::iter::repeat_n(FamilyShape::Single, singles));
        fams.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        fams
    }

    /// Pedigree of `n` subjects: the base block repeated as often as needed
    /// (so the kinship matrix is block diagonal in base-sized blocks) and cut
    /// at `n`. A pair split by the cut leaves a singleton.
    pub fn pedigree(&self, n: usize) -> Result<Pedigree> {
        self.validate()?;
        let base = self.base_families();
        let mut records = Vec::with_capacity(n);
        let mut fam_no = 0usize;
        'tiles: for tile in 0.. {
            for shape in &base {
                if records.len() >= n {
                    break 'tiles;
                }
                let family = format!("f{tile}_{fam_no}");
                fam_no += 1;
                let room = n - records.len();
                let id = |k: usize| format!("s{:06}", k);
                if shape.size() > room || *shape == FamilyShape::Single {
                    records.push(PedigreeRecord::new(&id(records.len()), &family, RelationClass::Unrelated, None));
                    continue;
                }
                let (rel, pair) = match shape {
                    FamilyShape::Mz => (RelationClass::Mz, Some(family.clone())),
                    FamilyShape::Dz => (RelationClass::Dz, Some(family.clone())),
                    _ => (RelationClass::FullSib, None),
                };
                for _ in 0..2 {
                    records.push(PedigreeRecord::new(&id(records.len()), &family, rel, pair.as_deref()));
                }
            }
            if base.is_empty() {
                break;
            }
        }
        Pedigree::new(records)
    }
}

/// Ground-truth covariances together with everything needed to simulate
/// data from them.
#[derive(Debug, Clone)]
pub struct SimulationDesign {
    pub n_grid: Vec<usize>,
    pub truth: CovarianceSet,
    pub family_mix: FamilyMix,
    pub replicates: usize,
    pub seed: u64,
    /// Predictor/response split used for the regression metrics.
    pub partition: Option<BlockPartition>,
}

impl SimulationDesign {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(VcompError::InvalidInput("replicates must be >= 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.iter().any(|&n| n < 2) {
            return Err(VcompError::InvalidInput("n_grid must hold sample sizes >= 2".into()));
        }
        if !self.truth.all_certified() {
            return Err(VcompError::InvalidInput("ground-truth covariances must be PSD".into()));
        }
        let labels = self.truth.labels();
        if labels.first().map(String::as_str) != Some("E") || labels.iter().any(|l| !["E", "G", "C"].contains(&l.as_str())) {
            return Err(VcompError::InvalidInput(format!(
                "truth labels must start with E and use only E/G/C, got {labels:?}"
            )));
        }
        if let Some(part) = &self.partition {
            if part.max_index() >= self.truth.n_traits() {
                return Err(VcompError::DimensionMismatch("partition references traits beyond q".into()));
            }
        }
        self.family_mix.validate()
    }

    pub fn n_traits(&self) -> usize {
        self.truth.n_traits()
    }

    /// Kernels for `n` subjects ordered to match the truth labels.
    pub fn component_spec(&self, n: usize) -> Result<ComponentSpec> {
        let ped = self.family_mix.pedigree(n)?;
        let ids = ped.subject_ids();
        let kinship = build_kinship(&ped, &ids)?;
        let mut kernels = Vec::with_capacity(self.truth.n_components());
        for label in self.truth.labels() {
            kernels.push(match label.as_str() {
                "E" => StructureKernel::identity(n),
                "G" => kinship.clone(),
                _ => build_household(&kinship)?,
            });
        }
        ComponentSpec::new(kernels, self.truth.labels().to_vec())
    }

    /// Kernels and samplers for one sample size, reusable across replicates.
    pub fn prepare(&self, n: usize) -> Result<PreparedDesign> {
        self.validate()?;
        let spec = self.component_spec(n)?;
        let samplers = spec
            .kernels()
            .iter()
            .zip(self.truth.sigmas())
            .map(|(k, s)| MatrixNormalSampler::new(k, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedDesign { spec, samplers, n })
    }
}

#[derive(Debug, Clone)]
pub struct PreparedDesign {
    spec: ComponentSpec,
    samplers: Vec<MatrixNormalSampler>,
    n: usize,
}

impl PreparedDesign {
    pub fn spec(&self) -> &ComponentSpec {
        &self.spec
    }

    pub fn n_subjects(&self) -> usize {
        self.n
    }

    /// `Y = Σ_k Γ_k` with independent `Γ_k ~ MN(0, D_k, Σ_k)`, drawn in label
    /// order from one stream.
    pub fn sample(&self, seed: u64) -> Result<TraitMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = self.samplers.first().map_or(0, |s| s.cols());
        let mut y = DMatrix::zeros(self.n, q);
        for s in &self.samplers {
            y += s.sample(&mut rng);
        }
        TraitMatrix::from_matrix(y)
    }
}

/// One simulated trait matrix for `n` subjects.
pub fn sample_observed(design: &SimulationDesign, n: usize, seed: u64) -> Result<TraitMatrix> {
    design.prepare(n)?.sample(seed)
}

/// Where the ground truth comes from in a design file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthSource {
    Lowdim { q: usize, heritability: f64, seed: u64 },
    Connectome(ConnectomeTruthConfig),
    /// One square CSV per label (no header; see `io::read_matrix_csv`).
    Files { labels: Vec<String>, paths: Vec<PathBuf> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub predictors: Vec<usize>,
    pub responses: Vec<usize>,
    #[serde(default)]
    pub matrix_side: Option<usize>,
}

impl PartitionConfig {
    pub fn build(&self) -> Result<BlockPartition> {
        let part = BlockPartition::new(self.predictors.clone(), self.responses.clone())?;
        match self.matrix_side {
            Some(p) => part.with_matrix_shape(p),
            None => Ok(part),
        }
    }
}

fn default_replicates() -> usize {
    20
}

/// JSON form of a simulation design. Relative truth paths resolve against
/// the directory of the design file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    pub truth: TruthSource,
    #[serde(default)]
    pub family_mix: FamilyMix,
    #[serde(default)]
    pub partition: Option<PartitionConfig>,
    #[serde(default)]
    pub sweep: crate::simulation::sweep::SweepOptions,
}

impl DesignConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        if let (TruthSource::Files { paths, .. }, Some(dir)) = (&mut cfg.truth, path.as_ref().parent()) {
            for p in paths.iter_mut() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn build(&self) -> Result<SimulationDesign> {
        let (truth, implied) = match &self.truth {
            TruthSource::Lowdim { q, heritability, seed } => (make_lowdim_truth(*q, *heritability, *seed)?, None),
            TruthSource::Connectome(cfg) => {
                let (t, p) = connectome_truth(cfg)?;
                (t, Some(p))
            }
            TruthSource::Files { labels, paths } => {
                if labels.len() != paths.len() {
                    return Err(VcompError::InvalidInput("truth labels and paths differ in length".into()));
                }
                let sigmas = paths.iter().map(crate::io::read_matrix_csv).collect::<Result<Vec<_>>>()?;
                (CovarianceSet::new(sigmas, labels.clone())?, None)
            }
        };
        let partition = match &self.partition {
            Some(p) => Some(p.build()?),
            None => implied,
        };
        let design = SimulationDesign {
            n_grid: self.n_grid.clone(),
            truth,
            family_mix: self.family_mix.clone(),
            replicates: self.replicates,
            seed: self.seed,
            partition,
        };
        design.validate()?;
        Ok(design)
    }
}
