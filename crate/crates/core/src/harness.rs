//! Rating sessions: every grid state is shown once, in a seeded random
//! order, and graded on a 1–6 scale.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bus::{MessageType, PoseCommandPayload, Publisher, RatingPayload, Subscription};
use crate::error::{Error, Result};
use crate::kinematics::{movement_between, DEFAULT_MOVEMENT_MS};
use crate::mentality::{grid_states, MentalityState, GRID_LEN};

pub const MIN_GRADE: u8 = 1;
pub const MAX_GRADE: u8 = 6;

pub const RECORDS_CSV_HEADER: [&str; 8] = [
    "session_id",
    "subject_id",
    "trial_index",
    "x_pl",
    "x_ar",
    "stimulus",
    "grade",
    "response_ms",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub seed: u64,
    pub subject_id: String,
    pub stimulus: String,
    #[serde(default = "default_duration")]
    pub movement_duration_ms: u64,
}

fn default_duration() -> u64 {
    DEFAULT_MOVEMENT_MS
}

impl SessionConfig {
    pub fn new(seed: u64, subject_id: impl Into<String>, stimulus: impl Into<String>) -> Self {
        Self {
            seed,
            subject_id: subject_id.into(),
            stimulus: stimulus.into(),
            movement_duration_ms: DEFAULT_MOVEMENT_MS,
        }
    }

    /// Derived from subject and seed so reruns name their files identically.
    pub fn session_id(&self) -> String {
        format!("{}-{}", self.subject_id, self.seed)
    }

    fn validate(&self) -> Result<()> {
        let id = &self.subject_id;
        if id.is_empty()
            || !id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(Error::config(format!(
                "subject id `{id}` must be non-empty and use only letters, digits, '-', '_' or '.'"
            )));
        }
        Ok(())
    }
}

/// Seeded Fisher–Yates permutation of the grid indices.
pub fn presentation_order(seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..GRID_LEN).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub session_id: String,
    pub subject_id: String,
    pub trial_index: usize,
    pub state: MentalityState,
    pub stimulus: String,
    pub grade: u8,
    pub response_ms: u64,
}

impl EvaluationRecord {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_GRADE..=MAX_GRADE).contains(&self.grade) {
            return Err(Error::OutOfRange {
                what: "grade",
                value: self.grade.into(),
                lo: MIN_GRADE.into(),
                hi: MAX_GRADE.into(),
            });
        }
        if self.trial_index >= GRID_LEN {
            return Err(Error::config(format!(
                "trial index {} exceeds {}",
                self.trial_index,
                GRID_LEN - 1
            )));
        }
        if grid_states().index_of(&self.state).is_none() {
            return Err(Error::config(format!(
                "state {:?} is not a grid state",
                self.state
            )));
        }
        Ok(())
    }
}

/// What the grader is shown.
#[derive(Debug, Clone, Copy)]
pub struct Trial<'a> {
    pub index: usize,
    pub state: &'a MentalityState,
    pub label: &'a str,
    pub stimulus: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GradeOutcome {
    Grade { grade: u8, response_ms: u64 },
    Abort(String),
}

/// A source of ratings: a person at a console, a remote UI, or a model.
pub trait Grader {
    fn grade(&mut self, trial: &Trial<'_>) -> GradeOutcome;
}

/// Grades from arousal and pleasure plus seeded uniform noise, with zero
/// response time so sessions are reproducible byte for byte.
#[derive(Debug, Clone)]
pub struct SyntheticGrader {
    rng: ChaCha8Rng,
    noise: f64,
}

impl SyntheticGrader {
    pub const DEFAULT_NOISE: f64 = 0.5;

    pub fn new(seed: u64) -> Self {
        Self::with_noise(seed, Self::DEFAULT_NOISE)
    }

    pub fn with_noise(seed: u64, noise: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // keep the noise independent of the presentation shuffle
        rng.set_stream(1);
        Self {
            rng,
            noise: noise.abs(),
        }
    }

    /// Noise-free grade for a state.
    pub fn expected(state: &MentalityState) -> f64 {
        1.0 + 5.0 * (state.arousal() + 200.0) / 400.0 + 0.5 * state.pleasure() / 200.0
    }
}

impl Grader for SyntheticGrader {
    fn grade(&mut self, trial: &Trial<'_>) -> GradeOutcome {
        let jitter = if self.noise > 0.0 {
            self.rng.gen_range(-self.noise..=self.noise)
        } else {
            0.0
        };
        let g = (Self::expected(trial.state) + jitter).round();
        GradeOutcome::Grade {
            grade: g.clamp(MIN_GRADE.into(), MAX_GRADE.into()) as u8,
            response_ms: 0,
        }
    }
}

/// Prompts on a writer and reads grades line by line. `q` or end of input
/// aborts the session.
pub struct ConsoleGrader<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> ConsoleGrader<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }
}

impl<R: BufRead, W: Write> Grader for ConsoleGrader<R, W> {
    fn grade(&mut self, trial: &Trial<'_>) -> GradeOutcome {
        let started = Instant::now();
        loop {
            let _ = write!(
                self.output,
                "trial {}/{} [{}] \"{}\" grade 1-6 (q quits): ",
                trial.index + 1,
                GRID_LEN,
                trial.label,
                trial.stimulus
            );
            let _ = self.output.flush();
            let mut line = String::new();
            match self.input.read_line(&mut line) {
                Ok(0) => return GradeOutcome::Abort("input closed".into()),
                Ok(_) => {}
                Err(e) => return GradeOutcome::Abort(format!("input error: {e}")),
            }
            let line = line.trim();
            if line.eq_ignore_ascii_case("q") {
                return GradeOutcome::Abort("aborted by subject".into());
            }
            match line.parse::<u8>() {
                Ok(g) if (MIN_GRADE..=MAX_GRADE).contains(&g) => {
                    return GradeOutcome::Grade {
                        grade: g,
                        response_ms: started.elapsed().as_millis() as u64,
                    }
                }
                _ => {
                    let _ = writeln!(self.output, "please enter a whole number from 1 to 6");
                }
            }
        }
    }
}

/// Waits for RATING.SUBMIT messages from a remote console.
pub struct BusGrader {
    ratings: Subscription,
    timeout: Duration,
    session_id: Option<String>,
}

impl BusGrader {
    /// `ratings` must be subscribed to RATING.SUBMIT before the first
    /// stimulus is published.
    pub fn new(ratings: Subscription, timeout: Duration) -> Self {
        Self {
            ratings,
            timeout,
            session_id: None,
        }
    }

    /// Ignore ratings tagged with a different session.
    pub fn for_session(mut self, session_id: impl Into<String>) -> Self {
        self.session_id = Some(session_id.into());
        self
    }
}

impl Grader for BusGrader {
    fn grade(&mut self, trial: &Trial<'_>) -> GradeOutcome {
        let started = Instant::now();
        loop {
            let left = self.timeout.saturating_sub(started.elapsed());
            if left.is_zero() {
                return GradeOutcome::Abort(format!(
                    "no rating for trial {} within {:?}",
                    trial.index, self.timeout
                ));
            }
            let msg = match self.ratings.recv_timeout(left) {
                Ok(Some(m)) => m,
                Ok(None) => continue,
                Err(_) => return GradeOutcome::Abort("rating subscription closed".into()),
            };
            if msg.kind != MessageType::RatingSubmit {
                continue;
            }
            let Ok(r) = msg.decode::<RatingPayload>() else {
                continue;
            };
            let other_session =
                matches!((&self.session_id, &r.session_id), (Some(a), Some(b)) if a != b);
            if r.trial_index != trial.index || other_session {
                continue;
            }
            return GradeOutcome::Grade {
                grade: r.grade,
                response_ms: started.elapsed().as_millis() as u64,
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub session_id: String,
    pub subject_id: String,
    pub seed: u64,
    pub stimulus: String,
    /// Grid indices in presentation order.
    pub order: Vec<usize>,
    pub aborted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    #[serde(skip)]
    pub records: Vec<EvaluationRecord>,
}

/// Runs one session. Each trial publishes the movement from neutral to the
/// trial's grid state, then waits for the grader. An abort ends the session
/// early; the records collected so far are kept.
pub fn run_session(
    cfg: &SessionConfig,
    grader: &mut dyn Grader,
    out: &mut Publisher,
) -> Result<SessionOutcome> {
    cfg.validate()?;
    let grid = grid_states();
    let order = presentation_order(cfg.seed);
    let session_id = cfg.session_id();
    let mut outcome = SessionOutcome {
        session_id: session_id.clone(),
        subject_id: cfg.subject_id.clone(),
        seed: cfg.seed,
        stimulus: cfg.stimulus.clone(),
        order: order.clone(),
        aborted: false,
        abort_reason: None,
        records: Vec::with_capacity(GRID_LEN),
    };
    for (trial_index, &g) in order.iter().enumerate() {
        let (state, label) = grid.get(g).expect("order indexes the grid");
        let movement = movement_between(&MentalityState::NEUTRAL, state, cfg.movement_duration_ms)?;
        out.send(
            MessageType::PoseCommand,
            PoseCommandPayload {
                robot: None,
                trial_index: Some(trial_index),
                movement,
            },
        )
        .map_err(|e| Error::Bus(e.to_string()))?;
        let trial = Trial {
            index: trial_index,
            state,
            label,
            stimulus: &cfg.stimulus,
        };
        match grader.grade(&trial) {
            GradeOutcome::Grade { grade, response_ms } => {
                let record = EvaluationRecord {
                    session_id: session_id.clone(),
                    subject_id: cfg.subject_id.clone(),
                    trial_index,
                    state: *state,
                    stimulus: cfg.stimulus.clone(),
                    grade,
                    response_ms,
                };
                record.validate()?;
                outcome.records.push(record);
            }
            GradeOutcome::Abort(reason) => {
                log::warn!("session {session_id} aborted at trial {trial_index}: {reason}");
                outcome.aborted = true;
                outcome.abort_reason = Some(reason);
                break;
            }
        }
    }
    Ok(outcome)
}

/// Paths written by [`SessionOutcome::save`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionFiles {
    pub jsonl: PathBuf,
    pub csv: PathBuf,
    pub meta: PathBuf,
}

impl SessionOutcome {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_records_csv(&self.records, out)
    }

    /// Writes `<id>.jsonl`, `<id>.csv` and `<id>.meta.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<SessionFiles> {
        std::fs::create_dir_all(dir)?;
        let files = SessionFiles {
            jsonl: dir.join(format!("{}.jsonl", self.session_id)),
            csv: dir.join(format!("{}.csv", self.session_id)),
            meta: dir.join(format!("{}.meta.json", self.session_id)),
        };
        self.write_jsonl(BufWriter::new(File::create(&files.jsonl)?))?;
        self.write_csv(BufWriter::new(File::create(&files.csv)?))?;
        let mut meta = BufWriter::new(File::create(&files.meta)?);
        serde_json::to_writer_pretty(&mut meta, self)?;
        meta.write_all(b"\n")?;
        meta.flush()?;
        Ok(files)
    }

    /// Reads a session back from its meta file and the JSON-lines file next
    /// to it.
    pub fn load(meta_path: &Path) -> Result<Self> {
        let mut outcome: SessionOutcome =
            serde_json::from_reader(BufReader::new(File::open(meta_path)?))?;
        let jsonl = meta_path.with_file_name(format!("{}.jsonl", outcome.session_id));
        outcome.records = read_jsonl(BufReader::new(File::open(jsonl)?))?;
        Ok(outcome)
    }
}

pub fn write_records_csv<W: Write>(records: &[EvaluationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORDS_CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.session_id.clone(),
            r.subject_id.clone(),
            r.trial_index.to_string(),
            r.state.pleasure().to_string(),
            r.state.arousal().to_string(),
            r.stimulus.clone(),
            r.grade.to_string(),
            r.response_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<EvaluationRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: EvaluationRecord = serde_json::from_str(&line)?;
        r.validate()?;
        records.push(r);
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateStats {
    pub index: usize,
    pub label: String,
    pub state: MentalityState,
    pub n: usize,
    /// `None` when the state was never rated.
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// One entry per grid state, in grid order.
    pub states: Vec<StateStats>,
    /// For grade g at position g-1: the rated state whose mean grade is
    /// closest to g, ties going to the earlier grid state.
    pub best_by_grade: [Option<usize>; MAX_GRADE as usize],
}

/// Per-state statistics. Sums are kept in integers so the result does not
/// depend on record order.
pub fn summarize(records: &[EvaluationRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::config("no records to summarize"));
    }
    let grid = grid_states();
    let mut acc = [(0u64, 0u64, 0u64); GRID_LEN];
    for r in records {
        r.validate()?;
        let i = grid.index_of(&r.state).expect("validated");
        let g = u64::from(r.grade);
        acc[i].0 += 1;
        acc[i].1 += g;
        acc[i].2 += g * g;
    }
    let states: Vec<StateStats> = acc
        .iter()
        .enumerate()
        .map(|(i, &(n, sum, sumsq))| {
            let (state, label) = grid.get(i).expect("grid index");
            let (mean, std) = if n == 0 {
                (None, None)
            } else {
                let var = (n * sumsq - sum * sum) as f64 / (n * n) as f64;
                (Some(sum as f64 / n as f64), Some(var.sqrt()))
            };
            StateStats {
                index: i,
                label: label.to_string(),
                state: *state,
                n: n as usize,
                mean,
                std,
            }
        })
        .collect();
    let mut best_by_grade = [None; MAX_GRADE as usize];
    for (slot, g) in best_by_grade.iter_mut().zip(MIN_GRADE..=MAX_GRADE) {
        let mut best: Option<(usize, f64)> = None;
        for s in &states {
            let Some(m) = s.mean else { continue };
            let d = (m - f64::from(g)).abs();
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((s.index, d));
            }
        }
        *slot = best.map(|(i, _)| i);
    }
    Ok(Summary {
        states,
        best_by_grade,
    })
}

impl Summary {
    /// Grades for which `index` is the best-expressing state.
    pub fn grades_for(&self, index: usize) -> Vec<u8> {
        (MIN_GRADE..=MAX_GRADE)
            .filter(|&g| self.best_by_grade[usize::from(g - 1)] == Some(index))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "index",
            "label",
            "x_pl",
            "x_ar",
            "n",
            "mean",
            "std",
            "best_for_grades",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        for s in &self.states {
            let best: Vec<String> = self.grades_for(s.index).iter().map(u8::to_string).collect();
            w.write_record([
                s.index.to_string(),
                s.label.clone(),
                s.state.pleasure().to_string(),
                s.state.arousal().to_string(),
                s.n.to_string(),
                opt(s.mean),
                opt(s.std),
                best.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>3}  {:<28} {:>3} {:>6} {:>6}  best for",
            "#", "state", "n", "mean", "std"
        )?;
        for s in &self.states {
            let num = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
            let best: Vec<String> = self.grades_for(s.index).iter().map(u8::to_string).collect();
            writeln!(
                f,
                "{:>3}  {:<28} {:>3} {:>6} {:>6}  {}",
                s.index,
                s.label,
                s.n,
                num(s.mean),
                num(s.std),
                best.join(",")
            )?;
        }
        Ok(())
    }
}
