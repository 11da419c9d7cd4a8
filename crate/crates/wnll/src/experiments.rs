//! The subcommands as library calls. Every driver loads all its inputs
//! before touching the output directory, so a failed load leaves nothing
//! behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use wnll_core::classifier::{accuracy, batched_vote, predict_softmax, train_softmax, wnll_classify_scores};
use wnll_core::coverage::{expected_samples, simulate_coverage};
use wnll_core::data::split_template;
use wnll_core::knn::build_graph;
use wnll_core::net::init_network;
use wnll_core::solver::SolveStats;
use wnll_core::synth::two_moons;
use wnll_core::train::{alternate_train, evaluate_wnll, Batching, EvalSet, TrainReport};
use wnll_core::{DataMatrix, LabelVector};

use crate::checkpoint::{read_checkpoint, write_checkpoint, write_partial};
use crate::config::{RunConfig, TOOL_VERSION};
use crate::error::{Error, Result};
use crate::idx::load_idx;
use crate::report::{self, AccuracyRow, CouponRow};
use crate::table::load_csv;

pub const CONFIG_FILE: &str = "config.txt";

/// A labeled train split and a labeled test split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub train: DataMatrix,
    pub train_labels: LabelVector,
    pub test: DataMatrix,
    pub test_labels: LabelVector,
}

fn idx_pair(dir: &Path, prefix: &str) -> Option<(PathBuf, PathBuf)> {
    let find = |base: &str| {
        [base.to_string(), format!("{base}.gz")].into_iter().map(|f| dir.join(f)).find(|p| p.is_file())
    };
    Some((find(&format!("{prefix}images-idx3-ubyte"))?, find(&format!("{prefix}labels-idx1-ubyte"))?))
}

fn take_first(data: &DataMatrix, labels: &LabelVector, range: std::ops::Range<usize>) -> Result<(DataMatrix, LabelVector)> {
    let idx: Vec<usize> = range.collect();
    Ok((data.select_rows(&idx)?, labels.select(&idx)))
}

fn wanted(requested: usize, available: usize, what: &str, source: &str) -> Result<usize> {
    match requested {
        0 => Ok(available),
        n if n <= available => Ok(n),
        n => Err(Error::Config(format!("{what} = {n} but {source} only has {available} points available"))),
    }
}

/// Splits one labeled pool: the first `n_train` rows train, the next
/// `n_test` rows test.
fn split_pool(name: String, data: DataMatrix, labels: LabelVector, cfg: &RunConfig) -> Result<Dataset> {
    let n = data.rows();
    let n_train = wanted(cfg.usize("n_train")?, n, "n_train", &name)?;
    let n_test = wanted(cfg.usize("n_test")?, n - n_train, "n_test", &name)?;
    let (train, train_labels) = take_first(&data, &labels, 0..n_train)?;
    let (test, test_labels) = take_first(&data, &labels, n_train..n_train + n_test)?;
    Ok(Dataset { name, train, train_labels, test, test_labels })
}

/// `dataset` is `moons`, a CSV file, or a directory holding either
/// `train-*`/`t10k-*` IDX files or a single `images-idx3-ubyte` pool.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let spec = cfg.get("dataset");
    if spec == "moons" {
        let total = cfg.usize("n_train")? + cfg.usize("n_test")?;
        let n_train = cfg.usize("n_train")?;
        if n_train == 0 || total == n_train {
            return Err(Error::Config("moons needs n_train > 0 and n_test > 0".into()));
        }
        // Points come out ordered along the arcs, so a prefix split would
        // hold out whole arc ends.
        let seed = cfg.u64("seed")?;
        let (x, y) = two_moons(total, cfg.f64("noise")?, seed)?;
        let split = split_template(&y, n_train as f64 / total as f64, seed, true)?;
        return Ok(Dataset {
            name: "moons".into(),
            train: x.select_rows(&split.template)?,
            train_labels: y.select(&split.template),
            test: x.select_rows(&split.remainder)?,
            test_labels: y.select(&split.remainder),
        });
    }
    let path = Path::new(spec);
    let name = path.file_stem().map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned());
    if path.is_dir() {
        if let (Some((tri, trl)), Some((tei, tel))) = (idx_pair(path, "train-"), idx_pair(path, "t10k-")) {
            let (x, y) = load_idx(&tri, &trl)?;
            let (tx, ty) = load_idx(&tei, &tel)?;
            let n_train = wanted(cfg.usize("n_train")?, x.rows(), "n_train", &name)?;
            let n_test = wanted(cfg.usize("n_test")?, tx.rows(), "n_test", &name)?;
            let (train, train_labels) = take_first(&x, &y, 0..n_train)?;
            let (test, test_labels) = take_first(&tx, &ty, 0..n_test)?;
            return Ok(Dataset { name, train, train_labels, test, test_labels });
        }
        if let Some((images, labels)) = idx_pair(path, "") {
            let (x, y) = load_idx(&images, &labels)?;
            return split_pool(name, x, y, cfg);
        }
        return Err(Error::Config(format!("{}: no IDX image/label files found", path.display())));
    }
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    let table = load_csv(path, cfg.get("label_column"))?;
    split_pool(name, table.data, table.labels, cfg)
}

fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let p = out.join(CONFIG_FILE);
    fs::write(&p, cfg.to_text()).map_err(|e| Error::io(&p, e))
}

struct Clock {
    on: bool,
    start: Instant,
}

impl Clock {
    fn new(cfg: &RunConfig) -> Result<Self> {
        Ok(Self { on: cfg.flag("timing")?, start: Instant::now() })
    }

    fn lap(&mut self) -> u64 {
        let ms = if self.on { self.start.elapsed().as_millis() as u64 } else { 0 };
        self.start = Instant::now();
        ms
    }
}

fn check_min(value: f64, min: f64, what: &str) -> Result<()> {
    if value < min {
        Err(Error::Threshold(format!("{what} {value:.4} is below the required {min:.4}")))
    } else {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table1Outcome {
    pub rows: Vec<AccuracyRow>,
    pub stats: SolveStats,
}

impl Table1Outcome {
    pub fn accuracy(&self, method: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method).map(|r| r.accuracy)
    }
}

/// Softmax regression against WNLL interpolation on the same split, plus a
/// batched-vote row when `template_batch` is set. Writes `table1.csv`,
/// `table1.json`, `solution.csv` and `solver_stats.jsonl`.
pub fn table1(cfg: &RunConfig, out: &Path) -> Result<Table1Outcome> {
    let data = load_dataset(cfg)?;
    let params = cfg.wnll()?;
    let softmax_cfg = cfg.softmax()?;
    let template_batch = cfg.usize("template_batch")?;
    let mut clock = Clock::new(cfg)?;
    let row = |method: &str, accuracy: f64, wall_time_ms: u64| AccuracyRow {
        dataset: data.name.clone(),
        method: method.into(),
        n_train: data.train.rows(),
        n_test: data.test.rows(),
        k: params.graph.k,
        r: params.graph.r,
        accuracy,
        wall_time_ms,
    };

    let model = train_softmax(&data.train, &data.train_labels, softmax_cfg)?;
    let softmax_acc = accuracy(&predict_softmax(&model, &data.test)?, &data.test_labels)?;
    let mut rows = vec![row("softmax", softmax_acc, clock.lap())];
    let outcome = wnll_classify_scores(&data.train, &data.train_labels, &data.test, &params)?;
    let wnll_acc = accuracy(&outcome.predictions, &data.test_labels)?;
    rows.push(row("wnll", wnll_acc, clock.lap()));
    if template_batch > 0 {
        let (votes, _) =
            batched_vote(&data.train, &data.train_labels, &data.test, &params, template_batch, cfg.u64("seed")?)?;
        rows.push(row("wnll-vote", accuracy(&votes, &data.test_labels)?, clock.lap()));
    }

    prepare_out(out, cfg)?;
    report::write_csv_rows(&out.join("table1.csv"), &rows)?;
    report::write_json(&out.join("table1.json"), &rows)?;
    report::write_solution_csv(&out.join("solution.csv"), data.train.rows(), &outcome.scores, &outcome.predictions)?;
    report::write_solver_stats(&out.join("solver_stats.jsonl"), &outcome.stats)?;

    check_min(wnll_acc, cfg.f64("min_accuracy")?, "WNLL accuracy")?;
    check_min(wnll_acc - softmax_acc, cfg.f64("min_margin")?, "WNLL margin over softmax")?;
    Ok(Table1Outcome { rows, stats: outcome.stats })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainSummary {
    pub version: &'static str,
    pub dataset: String,
    pub layers: Vec<usize>,
    pub parameters: usize,
    pub stages: usize,
    pub linear_accuracy: f64,
    pub wnll_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub summary: TrainSummary,
    pub report: TrainReport,
}

/// `[input, hidden.., buffer, classes]`.
pub fn layer_spec(cfg: &RunConfig, input: usize, classes: usize) -> Result<Vec<usize>> {
    let mut spec = vec![input];
    spec.extend(cfg.usize_list("hidden")?);
    spec.push(cfg.usize("buffer")?);
    spec.push(classes);
    Ok(spec)
}

/// Alternating training with per-epoch scoring on the test split, the
/// whole training split serving as WNLL template. Writes
/// `checkpoint.tnet`, `stages.csv`, `curve.csv`, `run_log.jsonl` and
/// `summary.json`. A diverged run leaves `checkpoint.tnet.partial`.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<TrainOutcome> {
    let data = load_dataset(cfg)?;
    let tc = cfg.train()?;
    let threads = cfg.usize("threads")?;
    let spec = layer_spec(cfg, data.train.cols(), data.train_labels.classes())?;
    let net = init_network(&spec, tc.seed)?;
    let eval = EvalSet {
        test: &data.test,
        test_labels: &data.test_labels,
        template: &data.train,
        template_labels: &data.train_labels,
        wnll: cfg.wnll()?,
    };
    tc.validate(data.train_labels.classes())?;
    prepare_out(out, cfg)?;
    let ckpt = out.join("checkpoint.tnet");

    let (net, report) = match alternate_train(net, &data.train, &data.train_labels, &tc, Some(&eval)) {
        Ok(done) => done,
        Err(wnll_core::Error::Diverged { pass, epoch, last_good }) => {
            write_partial(&ckpt, &last_good)?;
            return Err(wnll_core::Error::Diverged { pass, epoch, last_good }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_checkpoint(&ckpt, &net)?;
    let scores = eval.score(&net)?;
    let curve = report::curve_rows(&report);
    report::write_csv_rows(&out.join("stages.csv"), &report::stage_rows(&report))?;
    report::write_csv_rows(&out.join("curve.csv"), &curve)?;
    report::write_run_log(&out.join("run_log.jsonl"), TOOL_VERSION, threads, tc.seed, &curve)?;
    let summary = TrainSummary {
        version: TOOL_VERSION,
        dataset: data.name,
        layers: spec,
        parameters: net.param_count(),
        stages: report.stages.len(),
        linear_accuracy: scores.linear,
        wnll_accuracy: scores.wnll,
    };
    report::write_json(&out.join("summary.json"), &summary)?;
    check_min(scores.wnll, cfg.f64("min_accuracy")?, "WNLL accuracy")?;
    Ok(TrainOutcome { summary, report })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub version: &'static str,
    pub dataset: String,
    pub checkpoint: String,
    pub template: String,
    pub eval_on: String,
    pub template_batch: usize,
    pub points: usize,
    pub accuracy: f64,
}

fn pick<'a>(data: &'a Dataset, which: &str, key: &str) -> Result<(&'a DataMatrix, &'a LabelVector)> {
    match which {
        "train" => Ok((&data.train, &data.train_labels)),
        "test" => Ok((&data.test, &data.test_labels)),
        other => Err(Error::Config(format!("{key} = {other:?}: expected train or test"))),
    }
}

/// WNLL prediction in a checkpoint's feature space. Writes
/// `predictions.csv` and `summary.json`.
pub fn eval(cfg: &RunConfig, out: &Path) -> Result<EvalSummary> {
    let ckpt = cfg.get("checkpoint");
    if ckpt.is_empty() {
        return Err(Error::Config("eval needs checkpoint = <path>".into()));
    }
    let net = read_checkpoint(Path::new(ckpt))?;
    let data = load_dataset(cfg)?;
    let (template, template_labels) = pick(&data, cfg.get("template"), "template")?;
    let (points, labels) = pick(&data, cfg.get("eval_on"), "eval_on")?;
    if net.input_dim() != points.cols() || net.classes() != labels.classes() {
        return Err(Error::Config(format!(
            "checkpoint expects {} features and {} classes, dataset has {} and {}",
            net.input_dim(),
            net.classes(),
            points.cols(),
            labels.classes()
        )));
    }
    let template_batch = cfg.usize("template_batch")?;
    let batching = (template_batch > 0).then(|| cfg.u64("seed").map(|seed| Batching { template_batch, seed })).transpose()?;
    let result = evaluate_wnll(&net, points, labels, template, template_labels, &cfg.wnll()?, batching)?;

    prepare_out(out, cfg)?;
    report::write_predictions(&out.join("predictions.csv"), &result.predictions, labels)?;
    let summary = EvalSummary {
        version: TOOL_VERSION,
        dataset: data.name.clone(),
        checkpoint: ckpt.to_string(),
        template: cfg.get("template").into(),
        eval_on: cfg.get("eval_on").into(),
        template_batch,
        points: points.rows(),
        accuracy: result.accuracy,
    };
    report::write_json(&out.join("summary.json"), &summary)?;
    check_min(result.accuracy, cfg.f64("min_accuracy")?, "WNLL accuracy")?;
    Ok(summary)
}

/// Exact and simulated coverage cost for each class count. Writes
/// `coupon.csv`.
pub fn coupon(cfg: &RunConfig, out: &Path) -> Result<Vec<CouponRow>> {
    let trials = cfg.usize("trials")?;
    let seed = cfg.u64("seed")?;
    let classes = cfg.usize_list("classes")?;
    if classes.is_empty() {
        return Err(Error::Config("classes is empty".into()));
    }
    let rows = classes
        .iter()
        .map(|&n| Ok(CouponRow::new(&expected_samples(n)?, &simulate_coverage(n, trials, seed)?)))
        .collect::<Result<Vec<_>>>()?;
    prepare_out(out, cfg)?;
    report::write_csv_rows(&out.join("coupon.csv"), &rows)?;
    Ok(rows)
}

/// The kNN weight graph of the training split. Writes `graph.csv` and
/// returns the edge count.
pub fn graph_dump(cfg: &RunConfig, out: &Path) -> Result<usize> {
    let data = load_dataset(cfg)?;
    let graph = build_graph(&data.train, cfg.graph()?)?;
    prepare_out(out, cfg)?;
    report::write_graph_csv(&out.join("graph.csv"), &graph)?;
    Ok(graph.edge_count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(pairs: &[(&str, &str)]) -> RunConfig {
        let flags: Vec<(String, String)> = pairs.iter().map(|&(k, v)| (k.into(), v.into())).collect();
        RunConfig::resolve(&[], None, &flags).unwrap()
    }

    #[test]
    fn moons_splits_follow_sizes() {
        let d = load_dataset(&cfg(&[("n_train", "30"), ("n_test", "10")])).unwrap();
        assert_eq!((d.train.rows(), d.test.rows()), (30, 10));
        assert_eq!(d.train_labels.classes(), 2);
    }

    #[test]
    fn csv_pool_and_oversized_request() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pts.csv");
        let (x, y) = two_moons(50, 0.1, 2).unwrap();
        crate::table::write_csv(&p, &x, &y, &["a".into(), "b".into()]).unwrap();
        let path = p.to_str().unwrap();
        let d = load_dataset(&cfg(&[("dataset", path), ("n_train", "40"), ("n_test", "0")])).unwrap();
        assert_eq!((d.name.as_str(), d.train.rows(), d.test.rows()), ("pts", 40, 10));
        assert!(matches!(
            load_dataset(&cfg(&[("dataset", path), ("n_train", "60")])).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn failed_load_creates_no_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let missing = dir.path().join("nope.csv");
        let err = table1(&cfg(&[("dataset", missing.to_str().unwrap())]), &out).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(!out.exists());
    }

    #[test]
    fn coupon_table() {
        let dir = tempfile::tempdir().unwrap();
        let rows = coupon(&cfg(&[("classes", "2,3"), ("trials", "2000")]), dir.path()).unwrap();
        assert_eq!(rows[0].exact, 3.0);
        assert!((rows[1].simulated - 5.5).abs() < 5.0 * rows[1].stderr);
        let text = fs::read_to_string(dir.path().join("coupon.csv")).unwrap();
        assert!(text.starts_with("N,exact,asymptotic,simulated,stderr\n2,3.0,"));
        assert!(fs::read_to_string(dir.path().join(CONFIG_FILE)).unwrap().contains(TOOL_VERSION));
    }
}
