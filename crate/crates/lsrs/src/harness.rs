//! Evaluation, reporting, timing comparison and the end-to-end pipeline.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lsrs_core::audit::{audit_encoder, certified_ball_attack, AttackConfig, AuditReport};
use lsrs_core::data::{Dataset, Split};
use lsrs_core::layers::Layer;
use lsrs_core::network::SplitNetwork;
use lsrs_core::smoothing::{certify, Clock, Mode, NoClock, Prediction, SmoothingConfig};
use lsrs_core::train::{train, LossRecord};

use crate::checkpoint;
use crate::config::{DataSource, ExperimentConfig};
use crate::idx;

/// Pipeline stage an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Data,
    Train,
    Audit,
    Certify,
    Evaluate,
    Bench,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Data => "data",
            Stage::Train => "train",
            Stage::Audit => "audit",
            Stage::Certify => "certify",
            Stage::Evaluate => "evaluate",
            Stage::Bench => "bench",
            Stage::Report => "report",
        }
    }

    /// Process exit code for a failure in this stage.
    pub fn exit_code(self) -> i32 {
        2 + self as i32
    }
}

#[derive(Debug)]
pub struct HarnessError {
    pub stage: Stage,
    pub message: String,
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage.name(), self.message)
    }
}

impl std::error::Error for HarnessError {}

pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, HarnessError>;
}

impl<T, E: fmt::Display> StageExt<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, HarnessError> {
        self.map_err(|e| HarnessError { stage, message: e.to_string() })
    }
}

fn fail<T>(stage: Stage, message: impl Into<String>) -> Result<T, HarnessError> {
    Err(HarnessError { stage, message: message.into() })
}

/// Monotonic wall clock.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

pub const CSV_HEADER: [&str; 8] =
    ["idx", "label", "predict", "radius_latent", "radius_input", "p_lower", "correct", "time_s"];

/// One row of the certification CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CertRecord {
    pub idx: usize,
    pub label: usize,
    pub predicted: Prediction,
    pub radius_latent: f64,
    pub radius_input: f64,
    pub p_lower: f64,
    pub correct: bool,
    pub time_s: f64,
}

/// Certifies every example of `data`. Per-example noise is keyed by the
/// example index, so the result does not depend on `workers`. With
/// `timing` off every `time_s` is 0.
pub fn certify_dataset(
    net: &SplitNetwork,
    data: &Dataset,
    mode: Mode,
    cfg: &SmoothingConfig,
    workers: usize,
    timing: bool,
) -> lsrs_core::Result<Vec<CertRecord>> {
    let one = |i: usize| -> lsrs_core::Result<CertRecord> {
        let wall = WallClock::new();
        let clock: &dyn Clock = if timing { &wall } else { &NoClock };
        let cert = certify(net, &data.example(i), mode, cfg, i as u64, clock)?;
        let label = data.labels[i];
        Ok(CertRecord {
            idx: i,
            label,
            predicted: cert.predicted,
            radius_latent: cert.radius_latent,
            radius_input: cert.radius_input,
            p_lower: cert.p_lower,
            correct: cert.predicted == Prediction::Class(label),
            time_s: cert.elapsed,
        })
    };
    let workers = workers.clamp(1, data.len().max(1));
    if workers == 1 {
        return (0..data.len()).map(one).collect();
    }
    let mut out: Vec<CertRecord> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let one = &one;
                s.spawn(move || (w..data.len()).step_by(workers).map(one).collect::<lsrs_core::Result<Vec<_>>>())
            })
            .collect();
        let mut all = Vec::with_capacity(data.len());
        for h in handles {
            all.extend(h.join().expect("certification worker panicked")?);
        }
        Ok::<_, lsrs_core::Error>(all)
    })?;
    out.sort_by_key(|r| r.idx);
    Ok(out)
}

pub fn write_csv(records: &[CertRecord], out: impl std::io::Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.idx.to_string(),
            r.label.to_string(),
            r.predicted.code().to_string(),
            r.radius_latent.to_string(),
            r.radius_input.to_string(),
            r.p_lower.to_string(),
            u8::from(r.correct).to_string(),
            r.time_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("line {line}: {msg}")]
    Field { line: u64, msg: String },
}

pub fn read_csv(input: impl std::io::Read) -> Result<Vec<CertRecord>, CsvError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(CsvError::Field { line: 1, msg: format!("unexpected header {header:?}") });
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |col: &str| CsvError::Field { line, msg: format!("bad {col} value") };
        let int = |i: usize| row[i].parse::<i64>().map_err(|_| bad(CSV_HEADER[i]));
        let float = |i: usize| row[i].parse::<f64>().map_err(|_| bad(CSV_HEADER[i]));
        let code = int(2)?;
        out.push(CertRecord {
            idx: int(0)? as usize,
            label: int(1)? as usize,
            predicted: if code < 0 { Prediction::Abstain } else { Prediction::Class(code as usize) },
            radius_latent: float(3)?,
            radius_input: float(4)?,
            p_lower: float(5)?,
            correct: int(6)? != 0,
            time_s: float(7)?,
        });
    }
    Ok(out)
}

/// Aggregate certification metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub examples: usize,
    /// Mean of `radius_input` over all examples, with abstained and
    /// misclassified examples counted as 0.
    pub acr: f64,
    /// `(r, fraction correct with radius_input ≥ r)`, ascending in `r`.
    pub certified_accuracy: Vec<(f64, f64)>,
    /// Plain argmax accuracy of the base network, no noise.
    pub clean_accuracy: f64,
    pub mean_time_per_example: f64,
    pub abstain_rate: f64,
}

impl EvalSummary {
    pub fn from_records(records: &[CertRecord], radii: &[f64], clean_accuracy: f64) -> Self {
        let n = records.len().max(1) as f64;
        let acr = records.iter().map(|r| if r.correct { r.radius_input } else { 0.0 }).sum::<f64>() / n;
        let mut radii = radii.to_vec();
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        let certified_accuracy = radii
            .iter()
            .map(|&t| {
                let k = records.iter().filter(|r| r.correct && r.radius_input >= t).count();
                (t, k as f64 / n)
            })
            .collect();
        let abstain = records.iter().filter(|r| r.predicted == Prediction::Abstain).count();
        Self {
            examples: records.len(),
            acr,
            certified_accuracy,
            clean_accuracy,
            mean_time_per_example: records.iter().map(|r| r.time_s).sum::<f64>() / n,
            abstain_rate: abstain as f64 / n,
        }
    }

    pub fn to_text(&self, mode: Mode, cfg: &SmoothingConfig) -> String {
        let mut s = String::new();
        s.push_str("# certification summary\n");
        s.push_str("# acr: abstained and misclassified examples count as radius 0\n");
        s.push_str("# time: sampling and inference per example, data loading excluded\n");
        s.push_str(&format!("mode = {}\n", mode.name()));
        s.push_str(&format!("sigma = {}\n", cfg.sigma));
        s.push_str(&format!("n0 = {}\nn = {}\nalpha = {}\n", cfg.n0, cfg.n, cfg.alpha));
        s.push_str(&format!("examples = {}\n", self.examples));
        s.push_str(&format!("acr = {}\n", self.acr));
        s.push_str(&format!("clean_accuracy = {}\n", self.clean_accuracy));
        s.push_str(&format!("abstain_rate = {}\n", self.abstain_rate));
        s.push_str(&format!("mean_time_per_example = {}\n", self.mean_time_per_example));
        for (r, a) in &self.certified_accuracy {
            s.push_str(&format!("certified_accuracy@{r} = {a}\n"));
        }
        s
    }

    /// Inverse of [`EvalSummary::to_text`] for the metric lines.
    pub fn parse_text(text: &str) -> Option<Self> {
        let mut out = EvalSummary {
            examples: 0,
            acr: f64::NAN,
            certified_accuracy: Vec::new(),
            clean_accuracy: f64::NAN,
            mean_time_per_example: f64::NAN,
            abstain_rate: f64::NAN,
        };
        for line in text.lines().filter(|l| !l.starts_with('#')) {
            let (k, v) = line.split_once(" = ")?;
            match k {
                "examples" => out.examples = v.parse().ok()?,
                "acr" => out.acr = v.parse().ok()?,
                "clean_accuracy" => out.clean_accuracy = v.parse().ok()?,
                "abstain_rate" => out.abstain_rate = v.parse().ok()?,
                "mean_time_per_example" => out.mean_time_per_example = v.parse().ok()?,
                _ => {
                    if let Some(r) = k.strip_prefix("certified_accuracy@") {
                        out.certified_accuracy.push((r.parse().ok()?, v.parse().ok()?));
                    }
                }
            }
        }
        Some(out)
    }
}

pub fn clean_accuracy(net: &SplitNetwork, data: &Dataset) -> lsrs_core::Result<f64> {
    let pred = net.predict_clean(&data.inputs)?;
    let hits = pred.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub records: Vec<CertRecord>,
    pub summary: EvalSummary,
}

pub fn evaluate(
    net: &SplitNetwork,
    data: &Dataset,
    mode: Mode,
    cfg: &SmoothingConfig,
    radii: &[f64],
    workers: usize,
    timing: bool,
) -> lsrs_core::Result<Evaluation> {
    let records = certify_dataset(net, data, mode, cfg, workers, timing)?;
    let summary = EvalSummary::from_records(&records, radii, clean_accuracy(net, data)?);
    Ok(Evaluation { records, summary })
}

/// Attacks the first `limit` certified examples; returns `(points, violations)`.
pub fn attack_certified(
    net: &SplitNetwork,
    data: &Dataset,
    records: &[CertRecord],
    mode: Mode,
    cfg: &SmoothingConfig,
    attack: &AttackConfig,
    limit: usize,
) -> lsrs_core::Result<(usize, usize)> {
    let mut points = 0;
    let mut violations = 0;
    for r in records.iter().filter(|r| r.predicted != Prediction::Abstain).take(limit) {
        let x = data.example(r.idx);
        let cert = certify(net, &x, mode, cfg, r.idx as u64, &NoClock)?;
        violations += certified_ball_attack(net, &x, &cert, mode, cfg, attack, r.idx as u64)?.violations;
        points += 1;
    }
    Ok((points, violations))
}

pub fn audit_text(report: &AuditReport, net: &SplitNetwork, tol: f64) -> String {
    let (o, b) = net.for_fraction();
    format!(
        "# encoder Lipschitz audit (diagnostic; radii use the declared bound)\n\
         for_fraction = {o}/{b}\n\
         split_index = {}\n\
         declared_bound = {}\n\
         max_pairwise_ratio = {}\n\
         max_jacobian_norm = {}\n\
         pairs = {}\n\
         jacobian_points = {}\n\
         attack_points = {}\n\
         attack_violations = {}\n\
         tolerance = {tol}\n\
         passes = {}\n",
        net.split_index(),
        report.declared_bound,
        report.max_pairwise_ratio,
        report.max_jacobian_norm,
        report.pairs,
        report.jacobian_points,
        report.attack_points,
        report.attack_violations,
        report.passes(tol),
    )
}

pub const AUDIT_CSV_HEADER: &str = "for_ortho,for_blocks,split_index,declared_bound,max_pairwise_ratio,\
max_jacobian_norm,pairs,jacobian_points,attack_points,attack_violations,passes";

pub fn audit_csv_row(report: &AuditReport, net: &SplitNetwork, tol: f64) -> String {
    let (o, b) = net.for_fraction();
    format!(
        "{o},{b},{},{},{},{},{},{},{},{},{}",
        net.split_index(),
        report.declared_bound,
        report.max_pairwise_ratio,
        report.max_jacobian_norm,
        report.pairs,
        report.jacobian_points,
        report.attack_points,
        report.attack_violations,
        u8::from(report.passes(tol)),
    )
}

/// Layer index after `blocks` blocks, skipping a leading channel lift.
pub fn block_split(net: &SplitNetwork, blocks: usize) -> usize {
    if blocks == 0 {
        return 0;
    }
    let lift = net.layers().iter().take_while(|l| matches!(l, Layer::ChannelLift { .. })).count();
    lift + blocks
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub mode: Mode,
    /// Encoder depth in blocks (0 for input-space smoothing).
    pub split_blocks: usize,
    pub split_index: usize,
    pub mean_time: f64,
    /// Input-space mean time divided by this row's.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub examples: usize,
    pub samples_per_example: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub workers: usize,
}

impl BenchReport {
    pub fn latent_rows(&self) -> impl Iterator<Item = &BenchRow> {
        self.rows.iter().filter(|r| r.mode == Mode::LatentSpace)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# certify time per example, input-space vs latent-space smoothing\n");
        s.push_str(&format!(
            "# held fixed across rows: n0 + n = {} samples, sigma = {}, alpha = {}, workers = {}, same examples and machine\n",
            self.samples_per_example, self.sigma, self.alpha, self.workers
        ));
        s.push_str(&format!("# examples = {}\n", self.examples));
        s.push_str(&format!("{:<6} {:>12} {:>11} {:>14} {:>8}\n", "mode", "split_blocks", "split_index", "mean_time_s", "speedup"));
        for r in &self.rows {
            s.push_str(&format!(
                "{:<6} {:>12} {:>11} {:>14.6} {:>8.3}\n",
                r.mode.name(),
                r.split_blocks,
                r.split_index,
                r.mean_time,
                r.speedup
            ));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("mode,split_blocks,split_index,mean_time_s,speedup,samples_per_example,sigma,alpha,workers\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.mode.name(),
                r.split_blocks,
                r.split_index,
                r.mean_time,
                r.speedup,
                self.samples_per_example,
                self.sigma,
                self.alpha,
                self.workers
            ));
        }
        s
    }
}

/// Times certification of the same examples under input-space smoothing and
/// under latent-space smoothing at each encoder depth in `splits` (blocks).
/// Runs on one thread; calls are interleaved per example so drift in machine
/// speed hits every row alike.
pub fn bench_modes(
    net: &SplitNetwork,
    data: &Dataset,
    cfg: &SmoothingConfig,
    splits: &[usize],
    clock: &dyn Clock,
) -> lsrs_core::Result<BenchReport> {
    let mut configs = vec![(Mode::InputSpace, 0, net.with_split_index(0)?)];
    for &b in splits {
        configs.push((Mode::LatentSpace, b, net.with_split_index(block_split(net, b))?));
    }
    // Warm-up, untimed.
    if !data.is_empty() {
        certify(&configs[0].2, &data.example(0), Mode::InputSpace, cfg, 0, &NoClock)?;
    }
    let mut totals = vec![0.0; configs.len()];
    for i in 0..data.len() {
        let x = data.example(i);
        for (t, (mode, _, n)) in totals.iter_mut().zip(&configs) {
            let cert = certify(n, &x, *mode, cfg, i as u64, clock)?;
            if cert.counts.iter().sum::<u64>() != cfg.n as u64 {
                return Err(lsrs_core::Error::Domain("sample count differs between rows".into()));
            }
            *t += cert.elapsed;
        }
    }
    let count = data.len().max(1) as f64;
    let base = totals[0] / count;
    let rows = configs
        .iter()
        .zip(&totals)
        .map(|((mode, b, n), t)| BenchRow {
            mode: *mode,
            split_blocks: *b,
            split_index: n.split_index(),
            mean_time: t / count,
            speedup: base / (t / count),
        })
        .collect();
    Ok(BenchReport {
        rows,
        examples: data.len(),
        samples_per_example: cfg.n0 + cfg.n,
        sigma: cfg.sigma,
        alpha: cfg.alpha,
        workers: 1,
    })
}

/// Train and test sets described by the configuration.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset), HarnessError> {
    let d = &cfg.data;
    let (train_set, mut test_set) = match d.source {
        DataSource::Blobs => {
            let blobs = cfg.blobs();
            (
                blobs.sample(d.train_per_class, Split::Train).stage(Stage::Data)?,
                blobs.sample(d.test_per_class, Split::Test).stage(Stage::Data)?,
            )
        }
        DataSource::Idx => {
            let path = |p: &Option<PathBuf>| p.clone().expect("validated");
            let classes = Some(d.classes);
            (
                idx::load_idx(&path(&d.train_images), &path(&d.train_labels), classes, Split::Train)
                    .stage(Stage::Data)?,
                idx::load_idx(&path(&d.test_images), &path(&d.test_labels), classes, Split::Test)
                    .stage(Stage::Data)?,
            )
        }
    };
    let want = [cfg.input_channels(), cfg.model.spatial, cfg.model.spatial];
    for set in [&train_set, &test_set] {
        if set.example_shape() != want {
            return fail(
                Stage::Data,
                format!("examples have shape {:?}, model expects {want:?}", set.example_shape()),
            );
        }
    }
    if let Some(limit) = d.test_limit {
        test_set = test_set.take(limit).stage(Stage::Data)?;
    }
    Ok((train_set, test_set))
}

pub fn train_log_csv(history: &[LossRecord]) -> String {
    let mut s = String::from("epoch,step,lr,loss,train_acc\n");
    for r in history {
        s.push_str(&format!("{},{},{},{},{}\n", r.epoch, r.step, r.lr, r.loss, r.train_acc));
    }
    s
}

/// Files written by [`run`], relative to the output directory.
pub mod files {
    pub const CONFIG: &str = "config.toml";
    pub const MODEL: &str = "model.ckpt";
    pub const TRAIN_LOG: &str = "train_log.csv";
    pub const AUDIT_TXT: &str = "audit.txt";
    pub const AUDIT_CSV: &str = "audit.csv";
    pub const CERTIFY_CSV: &str = "certify.csv";
    pub const SUMMARY: &str = "summary.txt";
    /// Present while a run is in progress or after it failed.
    pub const INCOMPLETE: &str = "INCOMPLETE";
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| HarnessError {
        stage: Stage::Report,
        message: format!("{}: {e}", path.display()),
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub net: SplitNetwork,
    pub audit: AuditReport,
    pub evaluation: Evaluation,
}

/// train → audit → evaluate → report. The output directory holds an
/// `INCOMPLETE` marker until the last file is written; on failure the marker
/// names the failed stage.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    cfg.validate().stage(Stage::Config)?;
    let out = cfg.run.out.clone();
    fs::create_dir_all(&out).stage(Stage::Report)?;
    let marker = out.join(files::INCOMPLETE);
    write(&marker, "running\n")?;
    match run_stages(cfg, &out) {
        Ok(outcome) => {
            fs::remove_file(&marker).stage(Stage::Report)?;
            Ok(outcome)
        }
        Err(e) => {
            let _ = fs::write(&marker, format!("failed at stage {}: {}\n", e.stage.name(), e.message));
            Err(e)
        }
    }
}

fn run_stages(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome, HarnessError> {
    write(&out.join(files::CONFIG), cfg.to_toml())?;
    let (train_set, test_set) = load_data(cfg)?;

    let mut net = cfg.arch().build().stage(Stage::Config)?;
    let history = train(&mut net, &train_set, &cfg.train_config()).stage(Stage::Train)?;
    write(&out.join(files::TRAIN_LOG), train_log_csv(&history))?;
    checkpoint::save(&net, &out.join(files::MODEL)).stage(Stage::Report)?;

    let tol = cfg.audit.tolerance;
    let mut audit = audit_encoder(&net, &cfg.audit_config()).stage(Stage::Audit)?;
    write(&out.join(files::AUDIT_TXT), audit_text(&audit, &net, tol))?;

    let mode = cfg.mode();
    let smoothing = cfg.smoothing_config();
    let evaluation = evaluate(&net, &test_set, mode, &smoothing, &cfg.run.radii, cfg.run.workers, cfg.run.timing)
        .stage(Stage::Evaluate)?;
    let mut csv = Vec::new();
    write_csv(&evaluation.records, &mut csv).stage(Stage::Report)?;
    write(&out.join(files::CERTIFY_CSV), csv)?;

    if cfg.audit.attack_points > 0 {
        let (points, violations) = attack_certified(
            &net,
            &test_set,
            &evaluation.records,
            mode,
            &smoothing,
            &cfg.attack_config(),
            cfg.audit.attack_points,
        )
        .stage(Stage::Audit)?;
        audit.attack_points = points;
        audit.attack_violations = violations;
        write(&out.join(files::AUDIT_TXT), audit_text(&audit, &net, tol))?;
    }
    write(&out.join(files::AUDIT_CSV), format!("{AUDIT_CSV_HEADER}\n{}\n", audit_csv_row(&audit, &net, tol)))?;
    write(&out.join(files::SUMMARY), evaluation.summary.to_text(mode, &smoothing))?;
    if !audit.passes(tol) {
        return fail(Stage::Audit, format!("encoder audit failed: {audit:?}"));
    }
    Ok(RunOutcome { out: out.to_path_buf(), net, audit, evaluation })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(idx: usize, predicted: Prediction, label: usize, radius: f64) -> CertRecord {
        CertRecord {
            idx,
            label,
            predicted,
            radius_latent: radius,
            radius_input: radius,
            p_lower: 0.9,
            correct: predicted == Prediction::Class(label),
            time_s: 0.5,
        }
    }

    #[test]
    fn five_example_fixture() {
        let records = vec![
            rec(0, Prediction::Class(1), 1, 0.5),
            rec(1, Prediction::Class(0), 1, 0.8),
            rec(2, Prediction::Abstain, 0, 0.0),
            rec(3, Prediction::Class(2), 2, 1.25),
            rec(4, Prediction::Class(0), 0, 0.25),
        ];
        let s = EvalSummary::from_records(&records, &[0.5, 0.0, 1.0], 0.8);
        // Hand sum: (0.5 + 0 + 0 + 1.25 + 0.25) / 5.
        assert_eq!(s.acr, 0.4);
        assert_eq!(s.certified_accuracy, vec![(0.0, 0.6), (0.5, 0.4), (1.0, 0.2)]);
        assert_eq!(s.abstain_rate, 0.2);
        assert_eq!(s.mean_time_per_example, 0.5);
        // r = 0: 1 − abstain rate − error rate.
        assert!((s.certified_accuracy[0].1 - (1.0 - 0.2 - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn all_abstain_scores_zero() {
        let records: Vec<_> = (0..4).map(|i| rec(i, Prediction::Abstain, 0, 0.0)).collect();
        let s = EvalSummary::from_records(&records, &[0.0, 0.5], 0.0);
        assert_eq!(s.acr, 0.0);
        assert!(s.certified_accuracy.iter().all(|&(_, a)| a == 0.0));
        assert_eq!(s.abstain_rate, 1.0);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut records = vec![rec(0, Prediction::Class(3), 3, 0.1 + 0.2), rec(1, Prediction::Abstain, 2, 0.0)];
        records[0].p_lower = 0.999_000_000_000_000_1;
        records[0].time_s = 1e-7;
        let mut buf = Vec::new();
        write_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("idx,label,predict,radius_latent,radius_input,p_lower,correct,time_s\n"));
        assert!(text.lines().nth(2).unwrap().starts_with("1,2,-1,"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn summary_text_round_trip() {
        let records = vec![rec(0, Prediction::Class(1), 1, 0.3), rec(1, Prediction::Class(0), 0, 0.7)];
        let s = EvalSummary::from_records(&records, &[0.0, 0.5], 0.5);
        let text = s.to_text(Mode::LatentSpace, &SmoothingConfig::default());
        assert_eq!(EvalSummary::parse_text(&text).unwrap(), s);
    }

    #[test]
    fn stage_tags_and_codes() {
        let e: Result<(), _> = Err::<(), _>("boom").stage(Stage::Train);
        let e = e.unwrap_err();
        assert_eq!(e.to_string(), "[train] boom");
        assert_ne!(Stage::Config.exit_code(), Stage::Train.exit_code());
        assert!(Stage::Config.exit_code() > 1);
    }
}
