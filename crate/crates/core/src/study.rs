//! Blind comparative study: paired responses from two models, rated on
//! 1 to 5 scales by participants who never learn which model produced which
//! side.
//!
//! Persistence is append-only JSON lines (`samples.jsonl`,
//! `assignments.jsonl`, `ratings.jsonl`) under a data directory, replayed
//! into memory at startup. All mutations go through one lock.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::TableSketch;
use crate::enrichment::Narrative;
use crate::response::Recommendation;
use crate::vegazero::{render, VegaLiteDoc};

pub const SAMPLES_PER_PARTICIPANT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResponse {
    pub model_tag: String,
    pub recommendation: Recommendation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySample {
    pub id: String,
    pub sketch: TableSketch,
    pub query: String,
    pub responses: [StudyResponse; 2],
    #[serde(default)]
    pub assignment_count: u32,
}

/// What a participant sees of one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindResponse {
    pub vegazero: String,
    pub doc: Option<VegaLiteDoc>,
    pub narrative: Narrative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindSample {
    pub sample_id: String,
    pub sketch: TableSketch,
    pub query: String,
    pub a: BlindResponse,
    pub b: BlindResponse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarrativeScores {
    pub informativeness: u8,
    pub usefulness: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideScores {
    pub vis_quality: u8,
    pub explanation: NarrativeScores,
    pub caption: NarrativeScores,
    pub suggestions: NarrativeScores,
    pub overall_narrative: u8,
}

impl SideScores {
    pub fn uniform(v: u8) -> Self {
        let n = NarrativeScores {
            informativeness: v,
            usefulness: v,
        };
        SideScores {
            vis_quality: v,
            explanation: n,
            caption: n,
            suggestions: n,
            overall_narrative: v,
        }
    }

    fn dimensions(&self) -> [(Dimension, u8); 8] {
        [
            (Dimension::VisQuality, self.vis_quality),
            (Dimension::ExplanationInformativeness, self.explanation.informativeness),
            (Dimension::ExplanationUsefulness, self.explanation.usefulness),
            (Dimension::CaptionInformativeness, self.caption.informativeness),
            (Dimension::CaptionUsefulness, self.caption.usefulness),
            (Dimension::SuggestionsInformativeness, self.suggestions.informativeness),
            (Dimension::SuggestionsUsefulness, self.suggestions.usefulness),
            (Dimension::OverallNarrative, self.overall_narrative),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub participant_id: String,
    pub sample_id: String,
    /// Scores for the side shown as A.
    pub a: SideScores,
    pub b: SideScores,
    /// Self-reported visualization expertise, 1 to 5.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expertise: Option<u8>,
    #[serde(default = "Utc::now")]
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub participant_id: String,
    pub sample_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    VisQuality,
    ExplanationInformativeness,
    ExplanationUsefulness,
    CaptionInformativeness,
    CaptionUsefulness,
    SuggestionsInformativeness,
    SuggestionsUsefulness,
    OverallNarrative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    Expert,
    NonExpert,
    Unknown,
}

impl Cohort {
    /// Expertise above 3 counts as expert.
    pub fn of(expertise: Option<u8>) -> Cohort {
        match expertise {
            Some(e) if e > 3 => Cohort::Expert,
            Some(_) => Cohort::NonExpert,
            None => Cohort::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StudyError {
    #[error("pool has {available} samples left for this participant, {needed} needed")]
    PoolExhausted { available: usize, needed: usize },
    #[error("sample `{sample_id}` is not assigned to participant `{participant_id}`")]
    NotAssigned { participant_id: String, sample_id: String },
    #[error("`{0}` must be an integer from 1 to 5")]
    RangeError(String),
    #[error("no ratings yet")]
    EmptyInput,
    #[error("unknown sample `{0}`")]
    UnknownSample(String),
    #[error("duplicate sample id `{0}`")]
    DuplicateSample(String),
    #[error("study storage: {0}")]
    Io(String),
}

fn seed_for(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap_or_default())
}

/// Whether the participant sees the pair's second response as side A.
pub fn sides_swapped(seed: u64, participant: &str, sample: &str) -> bool {
    seed_for(seed, &["sides", participant, sample]) & 1 == 1
}

/// Picks the `SAMPLES_PER_PARTICIPANT` least-assigned samples (ties broken by
/// a shuffle seeded from `seed` and the participant id) and bumps their
/// counts.
pub fn assign_samples(participant_id: &str, pool: &mut [StudySample], seed: u64) -> Result<Assignment, StudyError> {
    if pool.len() < SAMPLES_PER_PARTICIPANT {
        return Err(StudyError::PoolExhausted {
            available: pool.len(),
            needed: SAMPLES_PER_PARTICIPANT,
        });
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed_for(seed, &["assign", participant_id])));
    order.sort_by_key(|&i| pool[i].assignment_count);
    let chosen = &order[..SAMPLES_PER_PARTICIPANT];
    for &i in chosen {
        pool[i].assignment_count += 1;
    }
    Ok(Assignment {
        participant_id: participant_id.to_string(),
        sample_ids: chosen.iter().map(|&i| pool[i].id.clone()).collect(),
    })
}

pub fn check_rating(r: &Rating) -> Result<(), StudyError> {
    for (side, scores) in [("a", &r.a), ("b", &r.b)] {
        for (dim, v) in scores.dimensions() {
            if !(1..=5).contains(&v) {
                let name = serde_json::to_value(dim).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                return Err(StudyError::RangeError(format!("{side}.{name}")));
            }
        }
    }
    if let Some(e) = r.expertise {
        if !(1..=5).contains(&e) {
            return Err(StudyError::RangeError("expertise".into()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` below two observations.
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Some(Stat { n, mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub n_ratings: usize,
    pub n_participants: usize,
    /// model tag, then dimension.
    pub models: BTreeMap<String, BTreeMap<Dimension, Stat>>,
    /// cohort, then model tag, then dimension.
    pub cohorts: BTreeMap<Cohort, BTreeMap<String, BTreeMap<Dimension, Stat>>>,
}

type Scores = BTreeMap<String, BTreeMap<Dimension, Vec<f64>>>;

fn finish(scores: Scores) -> BTreeMap<String, BTreeMap<Dimension, Stat>> {
    scores
        .into_iter()
        .map(|(m, dims)| {
            let stats = dims.into_iter().filter_map(|(d, v)| Some((d, Stat::of(&v)?))).collect();
            (m, stats)
        })
        .collect()
}

/// Unblinds ratings and aggregates them per model and per expertise cohort.
pub fn study_summary<'a>(
    ratings: impl IntoIterator<Item = &'a Rating>,
    samples: &[StudySample],
    seed: u64,
) -> Result<StudySummary, StudyError> {
    let by_id: BTreeMap<&str, &StudySample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut models: Scores = BTreeMap::new();
    let mut cohorts: BTreeMap<Cohort, Scores> = BTreeMap::new();
    let mut participants = BTreeSet::new();
    let mut n = 0;
    for r in ratings {
        let sample = by_id
            .get(r.sample_id.as_str())
            .ok_or_else(|| StudyError::UnknownSample(r.sample_id.clone()))?;
        let (first, second) = if sides_swapped(seed, &r.participant_id, &r.sample_id) {
            (&sample.responses[1], &sample.responses[0])
        } else {
            (&sample.responses[0], &sample.responses[1])
        };
        let cohort = Cohort::of(r.expertise);
        for (resp, scores) in [(first, &r.a), (second, &r.b)] {
            for (dim, v) in scores.dimensions() {
                let v = f64::from(v);
                models.entry(resp.model_tag.clone()).or_default().entry(dim).or_default().push(v);
                cohorts
                    .entry(cohort)
                    .or_default()
                    .entry(resp.model_tag.clone())
                    .or_default()
                    .entry(dim)
                    .or_default()
                    .push(v);
            }
        }
        participants.insert(r.participant_id.clone());
        n += 1;
    }
    if n == 0 {
        return Err(StudyError::EmptyInput);
    }
    Ok(StudySummary {
        n_ratings: n,
        n_participants: participants.len(),
        models: finish(models),
        cohorts: cohorts.into_iter().map(|(c, s)| (c, finish(s))).collect(),
    })
}

fn blind_side(resp: &StudyResponse) -> BlindResponse {
    BlindResponse {
        vegazero: render(&resp.recommendation.spec),
        doc: resp.recommendation.doc.clone(),
        narrative: resp.recommendation.narrative.clone(),
    }
}

pub fn blind_view(sample: &StudySample, participant: &str, seed: u64) -> BlindSample {
    let (a, b) = if sides_swapped(seed, participant, &sample.id) {
        (&sample.responses[1], &sample.responses[0])
    } else {
        (&sample.responses[0], &sample.responses[1])
    };
    BlindSample {
        sample_id: sample.id.clone(),
        sketch: sample.sketch.clone(),
        query: sample.query.clone(),
        a: blind_side(a),
        b: blind_side(b),
    }
}

/// Next item for a participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextItem {
    pub participant_id: String,
    pub done: usize,
    pub total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<BlindSample>,
}

#[derive(Debug, Default)]
struct State {
    samples: Vec<StudySample>,
    assignments: BTreeMap<String, Assignment>,
    ratings: BTreeMap<(String, String), Rating>,
}

/// Study state plus its append-only files. Without a directory it is purely
/// in memory.
#[derive(Debug)]
pub struct StudyStore {
    dir: Option<PathBuf>,
    seed: u64,
    state: Mutex<State>,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, StudyError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| StudyError::Io(e.to_string()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| StudyError::Io(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

impl StudyStore {
    pub fn in_memory(seed: u64) -> Self {
        StudyStore {
            dir: None,
            seed,
            state: Mutex::new(State::default()),
        }
    }

    /// Opens (or creates) a store and replays its files.
    pub fn open(dir: &Path, seed: u64) -> Result<Self, StudyError> {
        fs::create_dir_all(dir).map_err(|e| StudyError::Io(e.to_string()))?;
        let mut state = State {
            samples: read_jsonl(&dir.join("samples.jsonl"))?,
            ..State::default()
        };
        for s in &mut state.samples {
            s.assignment_count = 0;
        }
        for a in read_jsonl::<Assignment>(&dir.join("assignments.jsonl"))? {
            for id in &a.sample_ids {
                if let Some(s) = state.samples.iter_mut().find(|s| &s.id == id) {
                    s.assignment_count += 1;
                }
            }
            state.assignments.insert(a.participant_id.clone(), a);
        }
        for r in read_jsonl::<Rating>(&dir.join("ratings.jsonl"))? {
            upsert_rating(&mut state.ratings, r);
        }
        Ok(StudyStore {
            dir: Some(dir.to_path_buf()),
            seed,
            state: Mutex::new(state),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn append<T: Serialize>(&self, file: &str, value: &T) -> Result<(), StudyError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(file))
            .map_err(|e| StudyError::Io(e.to_string()))?;
        let line = serde_json::to_string(value).map_err(|e| StudyError::Io(e.to_string()))?;
        writeln!(f, "{line}").map_err(|e| StudyError::Io(e.to_string()))
    }

    pub fn add_samples(&self, samples: Vec<StudySample>) -> Result<usize, StudyError> {
        let mut st = self.state.lock().unwrap();
        let mut seen: BTreeSet<String> = st.samples.iter().map(|s| s.id.clone()).collect();
        for s in &samples {
            if !seen.insert(s.id.clone()) {
                return Err(StudyError::DuplicateSample(s.id.clone()));
            }
        }
        for mut s in samples {
            s.assignment_count = 0;
            self.append("samples.jsonl", &s)?;
            st.samples.push(s);
        }
        Ok(st.samples.len())
    }

    pub fn samples(&self) -> Vec<StudySample> {
        self.state.lock().unwrap().samples.clone()
    }

    pub fn assignment_counts(&self) -> Vec<u32> {
        self.state.lock().unwrap().samples.iter().map(|s| s.assignment_count).collect()
    }

    /// Returns the participant's assignment, creating it on first contact.
    pub fn assignment(&self, participant_id: &str) -> Result<Assignment, StudyError> {
        let mut st = self.state.lock().unwrap();
        if let Some(a) = st.assignments.get(participant_id) {
            return Ok(a.clone());
        }
        let a = assign_samples(participant_id, &mut st.samples, self.seed)?;
        if let Err(e) = self.append("assignments.jsonl", &a) {
            for id in &a.sample_ids {
                if let Some(s) = st.samples.iter_mut().find(|s| &s.id == id) {
                    s.assignment_count -= 1;
                }
            }
            return Err(e);
        }
        st.assignments.insert(participant_id.to_string(), a.clone());
        Ok(a)
    }

    /// The first sample in the participant's assignment not yet rated.
    pub fn next(&self, participant_id: &str) -> Result<NextItem, StudyError> {
        let a = self.assignment(participant_id)?;
        let st = self.state.lock().unwrap();
        let rated = |id: &String| st.ratings.contains_key(&(participant_id.to_string(), id.clone()));
        let done = a.sample_ids.iter().filter(|id| rated(id)).count();
        let sample = a
            .sample_ids
            .iter()
            .find(|id| !rated(id))
            .and_then(|id| st.samples.iter().find(|s| &s.id == id))
            .map(|s| blind_view(s, participant_id, self.seed));
        Ok(NextItem {
            participant_id: participant_id.to_string(),
            done,
            total: a.sample_ids.len(),
            sample,
        })
    }

    pub fn record_rating(&self, rating: Rating) -> Result<(), StudyError> {
        check_rating(&rating)?;
        let mut st = self.state.lock().unwrap();
        let assigned = st
            .assignments
            .get(&rating.participant_id)
            .is_some_and(|a| a.sample_ids.contains(&rating.sample_id));
        if !assigned {
            return Err(StudyError::NotAssigned {
                participant_id: rating.participant_id,
                sample_id: rating.sample_id,
            });
        }
        self.append("ratings.jsonl", &rating)?;
        upsert_rating(&mut st.ratings, rating);
        Ok(())
    }

    pub fn ratings(&self) -> Vec<Rating> {
        self.state.lock().unwrap().ratings.values().cloned().collect()
    }

    pub fn summary(&self) -> Result<StudySummary, StudyError> {
        let st = self.state.lock().unwrap();
        study_summary(st.ratings.values(), &st.samples, self.seed)
    }
}

/// Keeps the rating with the latest timestamp per (participant, sample).
fn upsert_rating(map: &mut BTreeMap<(String, String), Rating>, r: Rating) {
    let key = (r.participant_id.clone(), r.sample_id.clone());
    match map.get(&key) {
        Some(old) if old.timestamp > r.timestamp => {}
        _ => {
            map.insert(key, r);
        }
    }
}
