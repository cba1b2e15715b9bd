//! Candidate pools: the synthetic 2D generator, a loader for precomputed
//! embeddings stored as JSON lines, and question manifests.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prefcore::{Baseline, Candidate, CandidatePool, ModelParams};
use crate::scalar::Scalar;
use crate::seeding::derive_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Synth2dConfig {
    pub num_candidates: usize,
    pub candidate_radius: f64,
    pub theta_radius: f64,
    pub num_questions: usize,
    pub num_users: usize,
    pub master_seed: u64,
}

impl Default for Synth2dConfig {
    fn default() -> Self {
        Self {
            num_candidates: 20,
            candidate_radius: 0.5,
            theta_radius: 3.0,
            num_questions: 10,
            num_users: 3,
            master_seed: 0,
        }
    }
}

impl Synth2dConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_candidates < 2 {
            return Err(Error::InvalidArgument("synth2d needs at least two candidates".into()));
        }
        if !(self.candidate_radius > 0.0 && self.candidate_radius <= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "candidate radius must lie in (0, 0.5] to keep differences within the unit bound, got {}",
                self.candidate_radius
            )));
        }
        if !(self.theta_radius > 0.0 && self.theta_radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("theta radius must be positive, got {}", self.theta_radius)));
        }
        Ok(())
    }
}

/// A simulated user's hidden preference vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Persona<T: Scalar> {
    pub id: String,
    pub theta_star: ModelParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthQuestion<T: Scalar> {
    pub pool: CandidatePool<T>,
    pub personas: Vec<Persona<T>>,
}

/// Synthetic 2D questions: `K` candidates uniform in the disk of radius
/// `candidate_radius` (polar sampling, `r = R √U`), a separate baseline at
/// their centroid, and personas with `θ★` uniform on the circle of radius
/// `theta_radius`. Each question and persona has its own derived stream.
pub fn generate_synth2d<T: Scalar>(cfg: &Synth2dConfig) -> Result<Vec<SynthQuestion<T>>> {
    cfg.validate()?;
    let tau = std::f64::consts::TAU;
    let mut out = Vec::with_capacity(cfg.num_questions);
    for q in 0..cfg.num_questions {
        let question_id = format!("synth2d-q{q}");
        let mut rng = derive_rng(cfg.master_seed, &format!("synth2d/question/{q}"));
        let mut points = Vec::with_capacity(cfg.num_candidates);
        for _ in 0..cfg.num_candidates {
            let r = cfg.candidate_radius * rng.gen::<f64>().sqrt();
            let a = rng.gen::<f64>() * tau;
            points.push([r * a.cos(), r * a.sin()]);
        }
        let k = points.len() as f64;
        let centroid = [points.iter().map(|p| p[0]).sum::<f64>() / k, points.iter().map(|p| p[1]).sum::<f64>() / k];
        let candidates = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                Candidate::new(
                    format!("{question_id}-y{i}"),
                    vec![T::lit(p[0]), T::lit(p[1])],
                    format!("response {i} at ({:.4}, {:.4})", p[0], p[1]),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let baseline = Candidate::new(
            format!("{question_id}-baseline"),
            vec![T::lit(centroid[0]), T::lit(centroid[1])],
            "baseline response",
        )?;
        let pool = CandidatePool::new(question_id.clone(), candidates, Some(Baseline::Separate(baseline)))?;
        let personas = (0..cfg.num_users)
            .map(|u| {
                let mut prng = derive_rng(cfg.master_seed, &format!("synth2d/persona/{q}/{u}"));
                let a = prng.gen::<f64>() * tau;
                let s = cfg.theta_radius;
                Ok(Persona {
                    id: format!("{question_id}-u{u}"),
                    theta_star: ModelParams::new(vec![T::lit(s * a.cos()), T::lit(s * a.sin())], T::lit(s))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(SynthQuestion { pool, personas });
    }
    Ok(out)
}

/// Personas uniform on the sphere of radius `radius` in `d` dimensions
/// (normalized Gaussian directions), for pools without built-in users.
pub fn sample_personas<T: Scalar>(
    d: usize,
    radius: f64,
    count: usize,
    master_seed: u64,
    key: &str,
) -> Result<Vec<Persona<T>>> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    (0..count)
        .map(|u| {
            let mut rng = derive_rng(master_seed, &format!("persona/{key}/{u}"));
            let dir = loop {
                let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-12 {
                    break v.into_iter().map(|x| x / n * radius).collect::<Vec<_>>();
                }
            };
            Ok(Persona {
                id: format!("{key}-u{u}"),
                theta_star: ModelParams::new(dir.into_iter().map(T::lit).collect(), T::lit(radius))?,
            })
        })
        .collect()
}

/// One line of an embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    /// Display payload: response text or an image URI.
    pub payload: String,
    pub embedding: Vec<f64>,
}

/// Reads JSON-lines embedding records; blank lines are skipped. Errors name
/// the 0-based record index.
pub fn read_embedding_records(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRecord>> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let mut records = Vec::new();
    let mut dim = None;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = records.len();
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| Error::Load { record, message: e.to_string() })?;
        if rec.embedding.is_empty() {
            return Err(Error::Load { record, message: "empty embedding".into() });
        }
        if let Some(j) = rec.embedding.iter().position(|v| !v.is_finite()) {
            return Err(Error::Load { record, message: format!("non-finite entry at position {j}") });
        }
        match dim {
            None => dim = Some(rec.embedding.len()),
            Some(d) if d != rec.embedding.len() => {
                return Err(Error::Load {
                    record,
                    message: format!("embedding has dimension {}, expected {d}", rec.embedding.len()),
                });
            }
            _ => {}
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn write_embedding_records(path: impl AsRef<Path>, records: &[EmbeddingRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Builds a pool from records. The record named `baseline_id` becomes the
/// separate baseline; all embeddings (baseline included) are scaled jointly
/// so the farthest pair is at distance one. The factor is kept as
/// [`CandidatePool::scale`].
pub fn pool_from_records<T: Scalar>(
    records: &[EmbeddingRecord],
    question_id: &str,
    baseline_id: &str,
) -> Result<CandidatePool<T>> {
    let mut baseline = None;
    let mut candidates = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let values = r.embedding.iter().map(|&v| T::lit(v)).collect();
        let c = Candidate::new(r.id.clone(), values, r.payload.clone())
            .map_err(|e| Error::Load { record: i, message: e.to_string() })?;
        if r.id == baseline_id {
            if baseline.is_some() {
                return Err(Error::Load { record: i, message: format!("duplicate baseline id {baseline_id:?}") });
            }
            baseline = Some(c);
        } else {
            candidates.push(c);
        }
    }
    let baseline = baseline.ok_or_else(|| Error::Load {
        record: records.len(),
        message: format!("baseline id {baseline_id:?} not found"),
    })?;
    if candidates.is_empty() {
        return Err(Error::Load { record: records.len(), message: "no candidates besides the baseline".into() });
    }
    CandidatePool::normalized(question_id, candidates, Some(Baseline::Separate(baseline)))
}

pub fn load_embedding_pool<T: Scalar>(
    path: impl AsRef<Path>,
    question_id: &str,
    baseline_id: &str,
) -> Result<CandidatePool<T>> {
    pool_from_records(&read_embedding_records(path)?, question_id, baseline_id)
}

/// One question of a file-based domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionManifest {
    pub question_id: String,
    pub prompt: String,
    pub baseline_id: String,
    /// Relative paths are resolved against the manifest's directory.
    pub pool_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<String>,
    /// Interaction steps whose selections enter the evaluation stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    /// Per-domain interaction budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
}

impl QuestionManifest {
    pub fn load_pool<T: Scalar>(&self) -> Result<CandidatePool<T>> {
        load_embedding_pool(&self.pool_path, &self.question_id, &self.baseline_id)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestFile {
    Many(Vec<QuestionManifest>),
    One(QuestionManifest),
}

/// Reads a manifest holding one question object or an array of them.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<QuestionManifest>> {
    let path = path.as_ref();
    let file: ManifestFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let mut list = match file {
        ManifestFile::Many(v) => v,
        ManifestFile::One(m) => vec![m],
    };
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for m in &mut list {
        if m.pool_path.is_relative() {
            m.pool_path = base.join(&m.pool_path);
        }
    }
    Ok(list)
}
