//! Runs one configured experiment end to end.
//!
//! Every run writes into `output.dir`:
//!
//! * `config.toml`: the fully resolved configuration,
//! * `metrics.jsonl` (and `metrics.csv` when enabled),
//! * `summary.json`,
//! * `checkpoint.bin` for training tasks (`checkpoint-init<k>.bin` per
//!   sysid initialization).
//!
//! If training hits a non-finite loss the error is returned and the last
//! periodic checkpoint is left in place.

use std::fs;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gradcheck::{gradcheck, random_instance, GradcheckReport};
use crate::model::{accuracy, evaluate, LossKind, ParamGroup, Recurrence, RecurrenceKind, SequenceBatch, UrnnModel};
use crate::random::Rng;
use crate::restricted::{capacity_verdict, fit_to_target, sample_wide_unitary, FitOptions, RestrictedParams};
use crate::stiefel::StiefelPoint;
use crate::tasks::copy::{copy_baseline, gen_copy_indexed, INPUT_CLASSES, OUTPUT_CLASSES};
use crate::tasks::sysid::{complex_targets, gen_sysid_dataset, gen_sysid_system, nmse, oracle_model};

use super::checkpoint::{load_checkpoint, promote, save_checkpoint};
use super::config::{ExperimentConfig, Task};
use super::metrics::{MetricsRecord, MetricsWriter, Split};
use super::optim::{train_step, Optimizer};

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum Summary {
    Copymem(CopymemSummary),
    Sysid(SysidSummary),
    Capacity(CapacitySummary),
    Gradcheck(GradcheckSummary),
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalPoint {
    pub iteration: u64,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CopymemSummary {
    pub n: usize,
    pub recurrence: RecurrenceKind,
    /// Trainable reals, frozen groups excluded.
    pub trainable_params: usize,
    pub t_delay: usize,
    pub baseline: f64,
    pub iterations: usize,
    pub initial_test_loss: f64,
    pub final_test_loss: f64,
    pub best_test_loss: f64,
    pub final_test_accuracy: f64,
    pub max_unitarity_defect: f64,
    pub reprojections: usize,
    pub seed_data: u64,
    pub seed_init: u64,
    pub evals: Vec<EvalPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SysidInitResult {
    pub seed: u64,
    pub initial_test_nmse: f64,
    pub best_test_nmse: f64,
    pub best_valid_nmse: f64,
    /// Test NMSE at the epoch with the lowest validation NMSE.
    pub test_at_best_valid: f64,
    pub final_test_nmse: f64,
    pub max_unitarity_defect: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SysidSummary {
    pub n: usize,
    pub recurrence: RecurrenceKind,
    pub origin: crate::tasks::SystemOrigin,
    pub oracle_freeze: bool,
    pub epochs: usize,
    pub best_test_nmse: f64,
    pub best_init: u64,
    pub seed_data: u64,
    pub inits: Vec<SysidInitResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityRow {
    pub n: usize,
    pub param_count: usize,
    pub manifold_dim: usize,
    pub provably_restricted: bool,
    /// Best `‖W(θ) − T‖_F` for a target inside the parameterization's image.
    pub in_image_residual: f64,
    /// Same for a product of two independent draws.
    pub wide_residual: f64,
    pub in_image_restarts: Vec<f64>,
    pub wide_restarts: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacitySummary {
    pub restarts: usize,
    pub iterations: usize,
    pub lr: f64,
    pub seed_data: u64,
    pub seed_init: u64,
    pub rows: Vec<CapacityRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckCase {
    pub n: usize,
    pub recurrence: RecurrenceKind,
    pub loss: LossKind,
    pub seed: u64,
    pub report: GradcheckReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckSummary {
    pub passed: bool,
    pub cases: Vec<GradcheckCase>,
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

struct Sink {
    metrics: MetricsWriter,
    start: Option<Instant>,
}

impl Sink {
    fn open(config: &ExperimentConfig) -> Result<Self> {
        let dir = &config.output.dir;
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), config.to_toml_string())?;
        let csv = config.output.csv.then(|| dir.join("metrics.csv"));
        Ok(Self {
            metrics: MetricsWriter::create(&dir.join("metrics.jsonl"), csv.as_deref())?,
            start: config.output.timing.then(Instant::now),
        })
    }

    fn record(&mut self, mut record: MetricsRecord) -> Result<()> {
        record.wall_ms = self.start.map(|s| s.elapsed().as_secs_f64() * 1e3);
        self.metrics.write(&record)
    }
}

/// Validates the configuration, runs the task and writes all artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary> {
    config.validate()?;
    let mut sink = Sink::open(config)?;
    let summary = match config.task {
        Task::Copymem => Summary::Copymem(run_copymem(config, &mut sink)?),
        Task::Sysid => Summary::Sysid(run_sysid(config, &mut sink)?),
        Task::Capacity => Summary::Capacity(run_capacity(config, &mut sink)?),
        Task::Gradcheck => Summary::Gradcheck(run_gradcheck(config, &mut sink)?),
    };
    fs::write(config.output.dir.join("summary.json"), summary.to_json() + "\n")?;
    Ok(summary)
}

fn initial_model(config: &ExperimentConfig, m: usize, l: usize, real_output: bool, rng: &mut Rng) -> Result<UrnnModel> {
    let kind = config.model.recurrence;
    let model = match &config.model.init_checkpoint {
        Some(path) => promote(load_checkpoint(path)?, kind)?,
        None => UrnnModel::init(Recurrence::sample(kind, config.model.n, rng), m, l, real_output, rng),
    };
    if (model.n(), model.m(), model.l(), model.real_output) != (config.model.n, m, l, real_output) {
        return Err(Error::Config(format!(
            "checkpoint has shape n={}, m={}, l={}, which does not fit this task",
            model.n(),
            model.m(),
            model.l()
        )));
    }
    Ok(model)
}

fn trainable_params(model: &UrnnModel, frozen: &[ParamGroup]) -> usize {
    ParamGroup::ALL
        .iter()
        .filter(|g| !frozen.contains(g))
        .map(|&g| match (g, &model.recurrence) {
            // dense W counts its n² real degrees of freedom on U(n)
            (ParamGroup::Recurrence, r) => r.param_count(),
            (g, _) => model.group_len(g),
        })
        .sum()
}

fn checkpoint_due(config: &ExperimentConfig, iteration: usize) -> bool {
    let every = config.output.checkpoint_every;
    every > 0 && iteration % every == 0
}

/// Copy-task training state, advanced one update at a time. This is the
/// loop behind the `copymem` task, exposed for callers that want their own
/// stopping rule.
pub struct CopySession {
    model: UrnnModel,
    opt: Optimizer,
    test: SequenceBatch,
    train_stream: Rng,
    order_stream: Rng,
    order: Vec<u64>,
    t_delay: usize,
    train_size: usize,
    batch_size: usize,
    iteration: usize,
    trainable: usize,
}

impl CopySession {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let c = &config.copymem;
        let data = Rng::new(config.seeds.data);
        let test_ids: Vec<u64> = (0..c.test_size as u64).collect();
        let test = gen_copy_indexed(c.t_delay, &data.derive(2), &test_ids)?;
        let mut init = Rng::new(config.seeds.init);
        let model = initial_model(config, INPUT_CLASSES, OUTPUT_CLASSES, true, &mut init)?;
        let frozen = if config.model.train_h0 { vec![] } else { vec![ParamGroup::H0] };
        let trainable = trainable_params(&model, &frozen);
        let opt = Optimizer::new(&model, config.optimizer_settings(frozen))?;
        Ok(Self {
            model,
            opt,
            test,
            train_stream: data.derive(1),
            order_stream: data.derive(3),
            order: Vec::new(),
            t_delay: c.t_delay,
            train_size: c.train_size,
            batch_size: config.optimizer.batch_size,
            iteration: 0,
            trainable,
        })
    }

    pub fn model(&self) -> &UrnnModel {
        &self.model
    }

    pub fn optimizer(&self) -> &Optimizer {
        &self.opt
    }

    /// Updates taken so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn per_epoch(&self) -> usize {
        self.train_size.div_ceil(self.batch_size)
    }

    /// Epoch the next update belongs to.
    pub fn epoch(&self) -> usize {
        self.iteration / self.per_epoch()
    }

    /// Trainable reals, frozen groups excluded.
    pub fn trainable_params(&self) -> usize {
        self.trainable
    }

    /// One update on the next training batch; returns its loss.
    pub fn step(&mut self) -> Result<f64> {
        let slot = self.iteration % self.per_epoch();
        if slot == 0 {
            self.order = (0..self.train_size as u64).collect();
            self.order_stream.derive(self.epoch() as u64).shuffle(&mut self.order);
        }
        let ids = &self.order[slot * self.batch_size..((slot + 1) * self.batch_size).min(self.order.len())];
        let batch = gen_copy_indexed(self.t_delay, &self.train_stream, ids)?;
        let loss = train_step(&mut self.model, &batch, LossKind::CrossEntropy, &mut self.opt)?;
        self.iteration += 1;
        Ok(loss)
    }

    /// Test cross entropy and per-position accuracy.
    pub fn evaluate(&self) -> Result<(f64, f64)> {
        let (loss, out) = evaluate(&self.model, &self.test, LossKind::CrossEntropy)?;
        Ok((loss, accuracy(&out, &self.test).unwrap_or(f64::NAN)))
    }
}

fn run_copymem(config: &ExperimentConfig, sink: &mut Sink) -> Result<CopymemSummary> {
    let mut session = CopySession::new(config)?;
    let ckpt = config.output.dir.join("checkpoint.bin");
    let seed = config.seeds.init;
    let iterations = config.optimizer.iterations;

    let mut evals = Vec::new();
    let mut eval = |session: &CopySession, epoch: usize, defect: f64, sink: &mut Sink| -> Result<()> {
        let (loss, acc) = session.evaluate()?;
        let iteration = session.iteration() as u64;
        sink.record(MetricsRecord {
            iteration,
            epoch: epoch as u64,
            split: Split::Test,
            loss,
            nmse: None,
            accuracy: Some(acc),
            unitarity_defect: defect,
            wall_ms: None,
            seed,
        })?;
        evals.push(EvalPoint {
            iteration,
            loss,
            accuracy: acc,
        });
        Ok(())
    };

    let mut max_defect = session.model().recurrence.unitarity_defect();
    eval(&session, 0, max_defect, sink)?;
    for _ in 0..iterations {
        let epoch = session.epoch();
        let loss = session.step()?;
        let defect = session.model().recurrence.unitarity_defect();
        max_defect = max_defect.max(defect);
        let done = session.iteration();
        sink.record(MetricsRecord {
            iteration: done as u64,
            epoch: epoch as u64,
            split: Split::Train,
            loss,
            nmse: None,
            accuracy: None,
            unitarity_defect: defect,
            wall_ms: None,
            seed,
        })?;
        if done % config.copymem.eval_every == 0 || done == iterations {
            eval(&session, epoch, defect, sink)?;
        }
        if checkpoint_due(config, done) {
            save_checkpoint(session.model(), &ckpt)?;
        }
    }
    save_checkpoint(session.model(), &ckpt)?;

    let last = evals.last().expect("initial evaluation").clone();
    let model = session.model();
    Ok(CopymemSummary {
        n: model.n(),
        recurrence: model.recurrence.kind(),
        trainable_params: session.trainable_params(),
        t_delay: config.copymem.t_delay,
        baseline: copy_baseline(config.copymem.t_delay),
        iterations,
        initial_test_loss: evals[0].loss,
        final_test_loss: last.loss,
        best_test_loss: evals.iter().map(|e| e.loss).fold(f64::INFINITY, f64::min),
        final_test_accuracy: last.accuracy,
        max_unitarity_defect: max_defect,
        reprojections: session.optimizer().drift_events().len(),
        seed_data: config.seeds.data,
        seed_init: config.seeds.init,
        evals,
    })
}

fn predict_nmse(model: &UrnnModel, data: &SequenceBatch) -> Result<f64> {
    let (_, out) = evaluate(model, data, LossKind::Mse)?;
    let target = complex_targets(data).ok_or_else(|| Error::Invalid("sysid data must have complex targets".into()))?;
    nmse(&out.values, target)
}

fn run_sysid(config: &ExperimentConfig, sink: &mut Sink) -> Result<SysidSummary> {
    let s = &config.sysid;
    let n = config.model.n;
    let data = Rng::new(config.seeds.data);
    let sys = gen_sysid_system(n, s.origin, &mut data.derive(0));
    let train = gen_sysid_dataset(&sys, s.seq_len, s.train_size, &mut data.derive(1))?;
    let valid = gen_sysid_dataset(&sys, s.seq_len, s.valid_size, &mut data.derive(2))?;
    let test = gen_sysid_dataset(&sys, s.seq_len, s.test_size, &mut data.derive(3))?;
    let batch_size = config.optimizer.batch_size;
    let batches = s.train_size / batch_size;
    let kind = config.model.recurrence;

    let mut inits = Vec::with_capacity(s.inits);
    for k in 0..s.inits {
        let seed = config.seeds.init.wrapping_add(k as u64);
        let mut rng = Rng::new(seed);
        // both variants start from the same restricted draw
        let start = RestrictedParams::sample(n, &mut rng);
        let recurrence = match kind {
            RecurrenceKind::Restricted => Recurrence::Restricted(start),
            RecurrenceKind::Full => Recurrence::Full(StiefelPoint::new(start.compose())?),
        };
        let (mut model, frozen) = if s.oracle_freeze {
            let frozen = ParamGroup::ALL.iter().copied().filter(|&g| g != ParamGroup::Recurrence).collect();
            (oracle_model(&sys, recurrence), frozen)
        } else {
            let model = UrnnModel::init(recurrence, n, n, false, &mut rng);
            (model, vec![ParamGroup::H0])
        };
        let mut opt = Optimizer::new(&model, config.optimizer_settings(frozen))?;
        let order_stream = rng.derive(1);
        let ckpt = config.output.dir.join(format!("checkpoint-init{k}.bin"));

        let mut max_defect = model.recurrence.unitarity_defect();
        let record_eval = |model: &UrnnModel, it: u64, epoch: u64, defect: f64, sink: &mut Sink| -> Result<(f64, f64)> {
            let mut pair = [0.0; 2];
            for (slot, (split, set)) in [(Split::Valid, &valid), (Split::Test, &test)].into_iter().enumerate() {
                let (loss, _) = evaluate(model, set, LossKind::Mse)?;
                let value = predict_nmse(model, set)?;
                pair[slot] = value;
                sink.record(MetricsRecord {
                    iteration: it,
                    epoch,
                    split,
                    loss,
                    nmse: Some(value),
                    accuracy: None,
                    unitarity_defect: defect,
                    wall_ms: None,
                    seed,
                })?;
            }
            Ok((pair[0], pair[1]))
        };

        let (v0, t0) = record_eval(&model, 0, 0, max_defect, sink)?;
        let (mut best_valid, mut test_at_best_valid, mut best_test, mut final_test) = (v0, t0, t0, t0);
        let mut it = 0u64;
        for epoch in 1..=config.optimizer.epochs {
            let mut order: Vec<usize> = (0..s.train_size).collect();
            order_stream.derive(epoch as u64).shuffle(&mut order);
            let mut defect = 0.0;
            for b in 0..batches {
                let batch = train.select(&order[b * batch_size..(b + 1) * batch_size]);
                let loss = train_step(&mut model, &batch, LossKind::Mse, &mut opt)?;
                it += 1;
                defect = model.recurrence.unitarity_defect();
                max_defect = max_defect.max(defect);
                sink.record(MetricsRecord {
                    iteration: it,
                    epoch: epoch as u64,
                    split: Split::Train,
                    loss,
                    nmse: None,
                    accuracy: None,
                    unitarity_defect: defect,
                    wall_ms: None,
                    seed,
                })?;
                if checkpoint_due(config, it as usize) {
                    save_checkpoint(&model, &ckpt)?;
                }
            }
            let (v, t) = record_eval(&model, it, epoch as u64, defect, sink)?;
            if v < best_valid {
                best_valid = v;
                test_at_best_valid = t;
            }
            best_test = best_test.min(t);
            final_test = t;
        }
        save_checkpoint(&model, &ckpt)?;
        inits.push(SysidInitResult {
            seed,
            initial_test_nmse: t0,
            best_test_nmse: best_test,
            best_valid_nmse: best_valid,
            test_at_best_valid,
            final_test_nmse: final_test,
            max_unitarity_defect: max_defect,
        });
    }
    let best = inits
        .iter()
        .min_by(|a, b| a.best_test_nmse.total_cmp(&b.best_test_nmse))
        .expect("at least one init");
    Ok(SysidSummary {
        n,
        recurrence: kind,
        origin: s.origin,
        oracle_freeze: s.oracle_freeze,
        epochs: config.optimizer.epochs,
        best_test_nmse: best.best_test_nmse,
        best_init: best.seed,
        seed_data: config.seeds.data,
        inits,
    })
}

fn run_capacity(config: &ExperimentConfig, sink: &mut Sink) -> Result<CapacitySummary> {
    let c = &config.capacity;
    let mut targets = Rng::new(config.seeds.data);
    let mut starts = Rng::new(config.seeds.init);
    let mut rows = Vec::new();
    for (row, &n) in c.n_grid.iter().enumerate() {
        let verdict = capacity_verdict(n);
        let truth = RestrictedParams::sample(n, &mut targets);
        let wide = sample_wide_unitary(n, &mut targets);
        let in_image = fit_to_target(
            &truth.compose(),
            &FitOptions {
                restarts: c.restarts,
                iters: c.iterations,
                lr: c.lr,
                perm: Some(truth.perm().to_vec()),
            },
            &mut starts,
        )?;
        let general = fit_to_target(
            &wide,
            &FitOptions {
                restarts: c.restarts,
                iters: c.iterations,
                lr: c.lr,
                perm: None,
            },
            &mut starts,
        )?;
        for (k, fit) in [&in_image, &general].into_iter().enumerate() {
            let defect = crate::linalg::unitarity_defect(&fit.best_params.compose())?;
            sink.record(MetricsRecord {
                iteration: (2 * row + k) as u64,
                epoch: 0,
                split: Split::Test,
                loss: fit.residual * fit.residual,
                nmse: Some(fit.residual * fit.residual / n as f64),
                accuracy: None,
                unitarity_defect: defect,
                wall_ms: None,
                seed: config.seeds.init,
            })?;
        }
        rows.push(CapacityRow {
            n,
            param_count: verdict.param_count,
            manifold_dim: verdict.manifold_dim,
            provably_restricted: verdict.provably_restricted,
            in_image_residual: in_image.residual,
            wide_residual: general.residual,
            in_image_restarts: in_image.restart_residuals,
            wide_restarts: general.restart_residuals,
        });
    }
    Ok(CapacitySummary {
        restarts: c.restarts,
        iterations: c.iterations,
        lr: c.lr,
        seed_data: config.seeds.data,
        seed_init: config.seeds.init,
        rows,
    })
}

fn run_gradcheck(config: &ExperimentConfig, sink: &mut Sink) -> Result<GradcheckSummary> {
    let g = &config.gradcheck;
    let mut cases = Vec::new();
    for &n in &g.n_grid {
        for recurrence in [RecurrenceKind::Restricted, RecurrenceKind::Full] {
            for loss in [LossKind::Mse, LossKind::CrossEntropy] {
                let index = cases.len() as u64;
                let seed = Rng::new(config.seeds.init).derive(index).seed();
                let (model, batch) = random_instance(n, g.m, g.l, g.steps, g.batch, recurrence, loss, seed);
                let report = gradcheck(&model, &batch, loss, g.step, g.rtol)?;
                sink.record(MetricsRecord {
                    iteration: index,
                    epoch: 0,
                    split: Split::Test,
                    loss: report.loss,
                    nmse: None,
                    accuracy: None,
                    unitarity_defect: model.recurrence.unitarity_defect(),
                    wall_ms: None,
                    seed,
                })?;
                cases.push(GradcheckCase {
                    n,
                    recurrence,
                    loss,
                    seed,
                    report,
                });
            }
        }
    }
    Ok(GradcheckSummary {
        passed: cases.iter().all(|c| c.report.passed),
        cases,
    })
}
