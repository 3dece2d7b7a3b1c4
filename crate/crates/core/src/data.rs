//! Feature datasets, class-level splits and episode sampling.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::random_unit;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSamples {
    pub name: String,
    pub samples: Vec<Vec<f64>>,
}

/// Feature vectors grouped by class. All samples share `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: Vec<ClassSamples>,
    pub dim: usize,
}

impl Dataset {
    /// Validates dimensions, finiteness and class-name uniqueness.
    pub fn new(classes: Vec<ClassSamples>, dim: usize) -> Result<Self> {
        let mut seen = HashMap::new();
        for (ci, class) in classes.iter().enumerate() {
            if seen.insert(class.name.as_str(), ci).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate class name `{}`", class.name)));
            }
            for s in &class.samples {
                if s.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: s.len() });
                }
                if s.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("sample of class `{}`", class.name)));
                }
            }
        }
        Ok(Self { classes, dim })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_samples(&self) -> usize {
        self.classes.iter().map(|c| c.samples.len()).sum()
    }

    /// Drops classes with fewer than `min_size` samples.
    pub fn retain_min_class_size(mut self, min_size: usize) -> Self {
        self.classes.retain(|c| c.samples.len() >= min_size);
        self
    }

    fn subset(&self, class_indices: &[usize]) -> Dataset {
        Dataset {
            classes: class_indices.iter().map(|&i| self.classes[i].clone()).collect(),
            dim: self.dim,
        }
    }
}

/// Reads `class_name,v1,...,vD` rows.
///
/// A first row whose second field is not numeric is taken as a header. Lines
/// starting with `#` are comments. Samples keep file order within each class
/// and classes are ordered by first appearance.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = File::open(path.as_ref())?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut classes: Vec<ClassSamples> = Vec::new();
    let mut by_name: HashMap<String, usize> = HashMap::new();
    let mut dim: Option<usize> = None;
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if first {
            first = false;
            if record.len() >= 2 && record[1].parse::<f64>().is_err() {
                continue;
            }
        }
        if record.len() < 2 {
            return Err(Error::Csv { line, message: "row has no feature values".into() });
        }
        let values = record
            .iter()
            .enumerate()
            .skip(1)
            .map(|(col, field)| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Csv {
                        line,
                        message: format!("column {}: `{field}` is not a finite number", col + 1),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Csv {
                    line,
                    message: format!("expected {d} feature values, found {}", values.len()),
                })
            }
            _ => {}
        }
        let name = &record[0];
        let ci = *by_name.entry(name.to_string()).or_insert_with(|| {
            classes.push(ClassSamples { name: name.to_string(), samples: Vec::new() });
            classes.len() - 1
        });
        classes[ci].samples.push(values);
    }
    let dim = dim.ok_or(Error::Csv { line: 0, message: "file contains no data rows".into() })?;
    Ok(Dataset { classes, dim })
}

/// Writes `d` in the format [`load_csv`] reads. Floats use the shortest
/// representation that parses back to the same value. `comment` lines, if
/// any, are written first with a `# ` prefix.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    if let Some(text) = comment {
        for line in text.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    for class in &d.classes {
        for sample in &class.samples {
            write!(out, "{}", class.name)?;
            for v in sample {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Parameters of the Gaussian-cluster generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// One class center per class drawn uniformly on the unit sphere; each sample
/// is its center plus independent `N(0, σ²)` noise per coordinate.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "synthetic data needs at least 2 classes, got {}",
            spec.n_classes
        )));
    }
    if spec.dim < 2 {
        return Err(Error::InvalidArgument(format!("synthetic dim must be ≥ 2, got {}", spec.dim)));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be nonnegative, got {}",
            spec.noise_sigma
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma validated above");
    let width = (spec.n_classes - 1).to_string().len().max(3);
    let classes = (0..spec.n_classes)
        .map(|c| {
            let center = random_unit(spec.dim, &mut rng);
            let samples = (0..spec.per_class)
                .map(|_| center.as_slice().iter().map(|x| x + noise.sample(&mut rng)).collect())
                .collect();
            ClassSamples { name: format!("class_{c:0width$}"), samples }
        })
        .collect();
    Ok(Dataset { classes, dim: spec.dim })
}

/// Fractions of classes assigned to train / validation / test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.5, val: 0.25, test: 0.25 }
    }
}

/// Every split must hold at least this many classes.
pub const MIN_SPLIT_CLASSES: usize = 2;

/// Class-disjoint split. Classes are shuffled with `seed`, then cut into
/// contiguous blocks of `round(train·n)`, `round(val·n)` and the remainder.
pub fn split_by_class(d: &Dataset, fractions: SplitFractions, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let f = [fractions.train, fractions.val, fractions.test];
    if f.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be nonnegative and sum to 1, got {f:?}"
        )));
    }
    let n = d.num_classes();
    let n_train = (fractions.train * n as f64).round() as usize;
    let n_val = ((fractions.val * n as f64).round() as usize).min(n.saturating_sub(n_train));
    let n_test = n - n_train - n_val;
    if n_train.min(n_val).min(n_test) < MIN_SPLIT_CLASSES {
        let smallest = f.iter().copied().fold(f64::INFINITY, f64::min);
        let needed = if smallest > 0.0 {
            ((MIN_SPLIT_CLASSES as f64 - 0.5) / smallest).ceil() as usize
        } else {
            usize::MAX
        };
        return Err(Error::Insufficient(format!(
            "split of {n} classes into {n_train}/{n_val}/{n_test} leaves a split below {MIN_SPLIT_CLASSES} classes{}",
            if needed == usize::MAX {
                " (a zero fraction can never satisfy this)".to_string()
            } else {
                format!(" (these fractions need at least {needed} classes)")
            }
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((
        d.subset(&order[..n_train]),
        d.subset(&order[n_train..n_train + n_val]),
        d.subset(&order[n_train + n_val..]),
    ))
}

/// Shape of one episode: `way` categories, `shot` support and `query` query
/// samples per category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub way: usize,
    pub shot: usize,
    pub query: usize,
}

impl EpisodeSpec {
    pub fn new(way: usize, shot: usize, query: usize) -> Result<Self> {
        let spec = Self { way, shot, query };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.way < 2 || self.shot < 1 || self.query < 1 {
            return Err(Error::InvalidArgument(format!(
                "episode needs way ≥ 2, shot ≥ 1, query ≥ 1; got {}-way {}-shot {} queries",
                self.way, self.shot, self.query
            )));
        }
        Ok(())
    }

    pub fn samples_per_class(&self) -> usize {
        self.shot + self.query
    }
}

/// One labelled sample inside an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSample {
    /// Episode label in `0..way`.
    pub label: usize,
    /// Index of the source class in the dataset.
    pub class: usize,
    /// Index of the sample within its source class.
    pub index: usize,
    pub features: Vec<f64>,
}

/// A sampled task. Support and query are ordered by episode label, then by
/// draw order; `class_map[label]` is the source class of that label.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub spec: EpisodeSpec,
    pub support: Vec<EpisodeSample>,
    pub query: Vec<EpisodeSample>,
    pub class_map: Vec<usize>,
}

impl Episode {
    pub fn support_labels(&self) -> Vec<usize> {
        self.support.iter().map(|s| s.label).collect()
    }

    pub fn query_labels(&self) -> Vec<usize> {
        self.query.iter().map(|s| s.label).collect()
    }
}

/// Independent generator for episode `index` of a run seeded with `seed`.
///
/// Each index selects its own ChaCha stream, so episodes can be drawn in any
/// order or in parallel without changing their content.
pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws `spec.way` distinct eligible classes (those with at least
/// `shot + query` samples), then `shot + query` distinct samples from each,
/// the first `shot` forming the support set. Episode labels are a fresh
/// uniformly random bijection onto the chosen classes.
pub fn sample_episode<R: Rng + ?Sized>(d: &Dataset, spec: &EpisodeSpec, rng: &mut R) -> Result<Episode> {
    spec.validate()?;
    let needed = spec.samples_per_class();
    let eligible: Vec<usize> = d
        .classes
        .iter()
        .enumerate()
        .filter(|(_, c)| c.samples.len() >= needed)
        .map(|(i, _)| i)
        .collect();
    if eligible.len() < spec.way {
        return Err(Error::Insufficient(format!(
            "{}-way episodes need {} classes with ≥ {needed} samples; only {} of {} classes qualify",
            spec.way,
            spec.way,
            eligible.len(),
            d.num_classes()
        )));
    }
    let chosen: Vec<usize> = index::sample(rng, eligible.len(), spec.way)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    let mut labels: Vec<usize> = (0..spec.way).collect();
    labels.shuffle(rng);
    let mut class_map = vec![0; spec.way];
    for (&class, &label) in chosen.iter().zip(&labels) {
        class_map[label] = class;
    }

    let mut support = Vec::with_capacity(spec.way * spec.shot);
    let mut query = Vec::with_capacity(spec.way * spec.query);
    for (label, &class) in class_map.iter().enumerate() {
        let samples = &d.classes[class].samples;
        let picks = index::sample(rng, samples.len(), needed).into_vec();
        for (k, &idx) in picks.iter().enumerate() {
            let s = EpisodeSample { label, class, index: idx, features: samples[idx].clone() };
            if k < spec.shot {
                support.push(s);
            } else {
                query.push(s);
            }
        }
    }
    Ok(Episode { spec: *spec, support, query, class_map })
}
