use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::definition::StudyDefinition;
use crate::stats::Summary;
use crate::{Result, StudyError};

pub const MIN_SCORE: f64 = 0.0;
pub const MAX_SCORE: f64 = 100.0;

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Study {
        salt: String,
        stimuli: Vec<String>,
    },
    Session {
        id: String,
        order: Vec<usize>,
        created_ms: u64,
    },
    Rating {
        session: String,
        trial: usize,
        stimulus: usize,
        score: f64,
        timestamp_ms: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SessionInfo {
    pub session: String,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TrialView {
    Trial {
        session: String,
        index: usize,
        total: usize,
        trial_token: String,
        reference_url: String,
        test_url: String,
        rated: bool,
    },
    End {
        session: String,
        end: bool,
        total: usize,
        rated: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatingAck {
    pub session: String,
    pub index: usize,
    pub rated: usize,
    pub remaining: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageResult {
    pub image: String,
    pub method: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Results {
    /// Once true, method names are real; before that they are opaque labels.
    pub complete: bool,
    pub sessions: usize,
    pub ratings: usize,
    pub methods: Vec<MethodResult>,
    pub images: Vec<ImageResult>,
}

struct Session {
    id: String,
    order: Vec<usize>,
    tokens: Vec<String>,
    ratings: BTreeMap<usize, f64>,
}

#[derive(Default)]
struct State {
    sessions: Vec<Session>,
    by_id: HashMap<String, usize>,
    by_token: HashMap<String, (usize, usize)>,
    /// (stimulus, score) in submission order.
    ratings: Vec<(usize, f64)>,
}

/// A loaded study with its append-only event log.
pub struct Study {
    def: StudyDefinition,
    salt: String,
    seed: Option<u64>,
    original_urls: Vec<String>,
    test_urls: Vec<String>,
    files: HashMap<String, PathBuf>,
    state: RwLock<State>,
    log: Mutex<Option<(PathBuf, File)>>,
}

fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn extension(path: &Path) -> String {
    path.extension()
        .map(|e| format!(".{}", e.to_string_lossy().to_ascii_lowercase()))
        .unwrap_or_default()
}

impl Study {
    /// In-memory study without persistence.
    pub fn in_memory(def: StudyDefinition, seed: Option<u64>) -> Self {
        let salt = Self::fresh_salt(seed);
        Self::build(def, salt, seed, None)
    }

    /// Opens (or creates) the event log at `log_path` and replays it.
    pub fn open(def: StudyDefinition, log_path: &Path, seed: Option<u64>) -> Result<Self> {
        let io = |e| StudyError::Io(log_path.to_path_buf(), e);
        let mut events = Vec::new();
        if log_path.exists() {
            let f = File::open(log_path).map_err(io)?;
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let ev: Event = serde_json::from_str(&line)
                    .map_err(|e| StudyError::Corrupt(format!("{} line {}: {e}", log_path.display(), n + 1)))?;
                events.push(ev);
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(log_path).map_err(io)?;
        let salt = match events.first() {
            Some(Event::Study { salt, stimuli }) => {
                if *stimuli != def.fingerprint() {
                    return Err(StudyError::Invalid(format!(
                        "{} was recorded for a different set of images or methods",
                        log_path.display()
                    )));
                }
                salt.clone()
            }
            Some(_) => return Err(StudyError::Corrupt(format!("{} does not start with a study header", log_path.display()))),
            None => {
                let salt = Self::fresh_salt(seed);
                let header = Event::Study {
                    salt: salt.clone(),
                    stimuli: def.fingerprint(),
                };
                writeln!(file, "{}", serde_json::to_string(&header).expect("event serializes")).map_err(io)?;
                file.flush().map_err(io)?;
                salt
            }
        };
        let study = Self::build(def, salt, seed, Some((log_path.to_path_buf(), file)));
        {
            let mut st = study.state.write().expect("state lock");
            for ev in events.into_iter().skip(1) {
                study.apply(&mut st, ev)?;
            }
        }
        Ok(study)
    }

    fn fresh_salt(seed: Option<u64>) -> String {
        match seed {
            Some(s) => digest(&["salt", &s.to_string()])[..32].to_string(),
            None => {
                let mut bytes = [0u8; 16];
                rand::rng().fill_bytes(&mut bytes);
                hex::encode(bytes)
            }
        }
    }

    fn build(def: StudyDefinition, salt: String, seed: Option<u64>, log: Option<(PathBuf, File)>) -> Self {
        let mut files = HashMap::new();
        let mut alias = |path: &Path| {
            let name = format!("{}{}", &digest(&[&salt, "image", &path.to_string_lossy()])[..20], extension(path));
            files.insert(name.clone(), path.to_path_buf());
            format!("/images/{name}")
        };
        let original_urls = def.stimuli.iter().map(|s| alias(&s.original)).collect();
        let test_urls = def.stimuli.iter().map(|s| alias(&s.test)).collect();
        Study {
            def,
            salt,
            seed,
            original_urls,
            test_urls,
            files,
            state: RwLock::new(State::default()),
            log: Mutex::new(log),
        }
    }

    pub fn definition(&self) -> &StudyDefinition {
        &self.def
    }

    /// File behind an `/images/{alias}` URL.
    pub fn image_path(&self, alias: &str) -> Option<&Path> {
        self.files.get(alias).map(PathBuf::as_path)
    }

    fn token(&self, session: &str, index: usize) -> String {
        digest(&[&self.salt, "trial", session, &index.to_string()])[..24].to_string()
    }

    fn blinded_label(&self, method: &str) -> String {
        format!("method-{}", &digest(&[&self.salt, "label", method])[..8])
    }

    fn append(&self, ev: &Event) -> Result<()> {
        let mut log = self.log.lock().expect("log lock");
        if let Some((path, file)) = log.as_mut() {
            let line = serde_json::to_string(ev).expect("event serializes");
            let io = |e| StudyError::Io(path.clone(), e);
            writeln!(file, "{line}").map_err(io)?;
            file.flush().map_err(io)?;
        }
        Ok(())
    }

    fn apply(&self, st: &mut State, ev: Event) -> Result<()> {
        match ev {
            Event::Study { .. } => Err(StudyError::Corrupt("repeated study header".into())),
            Event::Session { id, order, .. } => {
                let mut sorted = order.clone();
                sorted.sort_unstable();
                if sorted != (0..self.def.trial_count()).collect::<Vec<_>>() {
                    return Err(StudyError::Corrupt(format!("session {id}: order is not a permutation of the trials")));
                }
                let idx = st.sessions.len();
                let tokens: Vec<String> = (0..order.len()).map(|k| self.token(&id, k)).collect();
                for (k, t) in tokens.iter().enumerate() {
                    st.by_token.insert(t.clone(), (idx, k));
                }
                st.by_id.insert(id.clone(), idx);
                st.sessions.push(Session {
                    id,
                    order,
                    tokens,
                    ratings: BTreeMap::new(),
                });
                Ok(())
            }
            Event::Rating {
                session,
                trial,
                stimulus,
                score,
                ..
            } => {
                let idx = *st
                    .by_id
                    .get(&session)
                    .ok_or_else(|| StudyError::Corrupt(format!("rating for unknown session {session}")))?;
                let s = &mut st.sessions[idx];
                if s.order.get(trial) != Some(&stimulus) || s.ratings.contains_key(&trial) {
                    return Err(StudyError::Corrupt(format!("inconsistent rating for session {session} trial {trial}")));
                }
                s.ratings.insert(trial, score);
                st.ratings.push((stimulus, score));
                Ok(())
            }
        }
    }

    /// Starts a session with a fresh random presentation order.
    pub fn create_session(&self) -> Result<SessionInfo> {
        let mut st = self.state.write().expect("state lock");
        let n = self.def.trial_count();
        let mut order: Vec<usize> = (0..n).collect();
        let id = match self.seed {
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(st.sessions.len() as u64 + 1);
                order.shuffle(&mut rng);
                hex::encode(rng.random::<[u8; 8]>())
            }
            None => {
                let mut rng = rand::rng();
                order.shuffle(&mut rng);
                hex::encode(rng.random::<[u8; 8]>())
            }
        };
        if st.by_id.contains_key(&id) {
            return Err(StudyError::Conflict("session id collision; retry".into()));
        }
        let ev = Event::Session {
            id: id.clone(),
            order,
            created_ms: now_ms(),
        };
        self.append(&ev)?;
        self.apply(&mut st, ev)?;
        Ok(SessionInfo { session: id, total: n })
    }

    /// Presentation order of a session as stimulus indices.
    pub fn session_order(&self, session: &str) -> Result<Vec<usize>> {
        let st = self.state.read().expect("state lock");
        let idx = *st.by_id.get(session).ok_or_else(|| StudyError::NotFound(format!("session {session}")))?;
        Ok(st.sessions[idx].order.clone())
    }

    pub fn get_trial(&self, session: &str, index: usize) -> Result<TrialView> {
        let st = self.state.read().expect("state lock");
        let idx = *st.by_id.get(session).ok_or_else(|| StudyError::NotFound(format!("session {session}")))?;
        let s = &st.sessions[idx];
        if index >= s.order.len() {
            return Ok(TrialView::End {
                session: s.id.clone(),
                end: true,
                total: s.order.len(),
                rated: s.ratings.len(),
            });
        }
        let stim = s.order[index];
        Ok(TrialView::Trial {
            session: s.id.clone(),
            index,
            total: s.order.len(),
            trial_token: s.tokens[index].clone(),
            reference_url: self.original_urls[stim].clone(),
            test_url: self.test_urls[stim].clone(),
            rated: s.ratings.contains_key(&index),
        })
    }

    pub fn submit_rating(&self, session: &str, token: &str, score: f64) -> Result<RatingAck> {
        if !(score.is_finite() && (MIN_SCORE..=MAX_SCORE).contains(&score)) {
            return Err(StudyError::Invalid(format!("score {score} is outside [{MIN_SCORE}, {MAX_SCORE}]")));
        }
        let mut st = self.state.write().expect("state lock");
        let &(idx, trial) = st
            .by_token
            .get(token)
            .ok_or_else(|| StudyError::NotFound(format!("trial token {token}")))?;
        let s = &st.sessions[idx];
        if s.id != session {
            return Err(StudyError::NotFound(format!("trial token {token} in session {session}")));
        }
        if s.ratings.contains_key(&trial) {
            return Err(StudyError::Conflict(format!("trial {trial} of session {session} is already rated")));
        }
        let ev = Event::Rating {
            session: s.id.clone(),
            trial,
            stimulus: s.order[trial],
            score,
            timestamp_ms: now_ms(),
        };
        self.append(&ev)?;
        self.apply(&mut st, ev)?;
        let s = &st.sessions[idx];
        Ok(RatingAck {
            session: s.id.clone(),
            index: trial,
            rated: s.ratings.len(),
            remaining: s.order.len() - s.ratings.len(),
        })
    }

    /// Every session has rated every trial.
    pub fn is_complete(&self) -> bool {
        let st = self.state.read().expect("state lock");
        !st.sessions.is_empty() && st.sessions.iter().all(|s| s.ratings.len() == s.order.len())
    }

    /// MOS per method and per (image, method), folded over all ratings.
    pub fn results(&self) -> Results {
        let complete = self.is_complete();
        let st = self.state.read().expect("state lock");
        let label = |m: &str| if complete { m.to_string() } else { self.blinded_label(m) };
        let mut by_method: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut by_image: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
        for &(stim, score) in &st.ratings {
            let s = &self.def.stimuli[stim];
            by_method.entry(&s.method).or_default().push(score);
            by_image.entry((&s.image, &s.method)).or_default().push(score);
        }
        let mut methods: Vec<MethodResult> = self
            .def
            .methods
            .iter()
            .filter_map(|m| {
                Summary::of(by_method.get(m.as_str())?).map(|summary| MethodResult {
                    method: label(m),
                    summary,
                })
            })
            .collect();
        let mut images: Vec<ImageResult> = by_image
            .iter()
            .filter_map(|((image, method), scores)| {
                Summary::of(scores).map(|summary| ImageResult {
                    image: image.to_string(),
                    method: label(method),
                    summary,
                })
            })
            .collect();
        if !complete {
            // definition order would let a viewer map labels back to methods
            methods.sort_by(|a, b| a.method.cmp(&b.method));
            images.sort_by(|a, b| (&a.image, &a.method).cmp(&(&b.image, &b.method)));
        }
        Results {
            complete,
            sessions: st.sessions.len(),
            ratings: st.ratings.len(),
            methods,
            images,
        }
    }
}
