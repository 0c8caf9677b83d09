use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{make_batches, InteractionDataset, Split};
use crate::error::{Error, Result};
use crate::metrics::{rank_of_target, recall_ndcg, ConvergenceTracker, Decision, EvalResult};
use crate::model::{init_model, loss_and_backward, score_last, Batch, ModelSpec, ParamTensor, Tensor};
use crate::optim::{all_adam, classify_params, hybrid_step, init_states};

use super::config::{OptimizerConfig, RunConfig};
use super::output;

/// One validation pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub step: u64,
    /// Mean training loss over the steps since the previous row. Row 0
    /// carries the loss of the first training batch at initialization.
    pub train_loss: f64,
    pub val: EvalResult,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub optimizer: String,
    pub dataset_fingerprint: String,
    pub seed: u64,
    pub converged_step: u64,
    pub best_val_ndcg10: f64,
    /// Test metrics at the best-validation snapshot.
    pub test: EvalResult,
    pub steps_run: u64,
    pub epochs: f64,
    pub initial_train_loss: f64,
    /// Training loss of the last row; `None` when the run diverged.
    pub final_train_loss: Option<f64>,
    pub diverged: bool,
    pub wall_time_seconds: f64,
    pub config: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub rows: Vec<EvalRow>,
    pub summary: RunSummary,
    /// Parameters at the best validation step.
    pub best_params: Vec<ParamTensor<f64>>,
}

/// Builds the dataset, trains, writes outputs when `output_dir` is set.
pub fn run_experiment(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let dataset = config.dataset.load()?;
    let record = run_with_dataset(config, &dataset)?;
    if let Some(dir) = &config.output_dir {
        output::write_run(&record, dir, config.save_checkpoint)?;
    }
    Ok(record)
}

/// Trains on an already loaded dataset. Writes nothing to disk.
pub fn run_with_dataset(config: &RunConfig, dataset: &InteractionDataset) -> Result<RunRecord> {
    config.validate()?;
    let started = Instant::now();
    let spec = config.model.spec(dataset.vocab_size(), config.seed);
    spec.validate()?;
    let ks = config.sorted_ks();

    let mut params = init_model(&spec)?;
    let assignments = match &config.optimizer {
        OptimizerConfig::MuonRec { .. } => classify_params(&params)?,
        _ => all_adam(&params),
    };
    let mut states = init_states(&params, &assignments)?;
    let adam = *config.optimizer.adam();
    // Never consulted when the Muon group is empty.
    let muon = config.optimizer.muon().copied().unwrap_or_default();

    let evaluator = Evaluator::new(dataset, &spec, config.batch_size, config.exclude_history, &ks)?;
    let mut stream = TrainStream::new(dataset, &spec, config.batch_size, config.seed)?;
    let mut tracker = ConvergenceTracker::new(config.convergence);

    let initial_loss = {
        let mut probe = params.clone();
        loss_and_backward(&mut probe, &spec, stream.peek())?
    };
    let mut rows = vec![EvalRow {
        step: 0,
        train_loss: initial_loss,
        val: evaluator.run(&params, Split::Validation)?,
    }];
    let mut best = snapshot(&params);
    let mut stop = tracker.observe(0, rows[0].val.ndcg_at(10))? == Decision::Stop;

    let mut step = 0u64;
    let mut loss_sum = 0.0;
    let mut loss_count = 0u64;
    let mut diverged = !initial_loss.is_finite();
    while !stop && !diverged && step < config.max_steps {
        step += 1;
        let loss = loss_and_backward(&mut params, &spec, stream.next_batch()?)?;
        if !loss.is_finite() || !params.iter().all(|p| p.grad.is_finite()) {
            diverged = true;
            break;
        }
        match hybrid_step(&mut params, &mut states, &assignments, &muon, &adam) {
            Err(Error::NonFinite(_)) => {
                diverged = true;
                break;
            }
            other => other?,
        }
        if !params.iter().all(|p| p.value.is_finite()) {
            diverged = true;
            break;
        }
        loss_sum += loss;
        loss_count += 1;

        if step.is_multiple_of(config.convergence.eval_every) || step == config.max_steps {
            let val = evaluator.run(&params, Split::Validation)?;
            let metric = val.ndcg_at(10);
            rows.push(EvalRow {
                step,
                train_loss: loss_sum / loss_count as f64,
                val,
            });
            loss_sum = 0.0;
            loss_count = 0;
            stop = tracker.observe(step, metric)? == Decision::Stop;
            if tracker.best_step() == Some(step) {
                best = snapshot(&params);
            }
        }
    }

    restore(&mut params, best);
    let test = evaluator.run(&params, Split::Test)?;
    let converged_step = tracker.best_step().unwrap_or(0);
    let summary = RunSummary {
        optimizer: config.optimizer.label().to_string(),
        dataset_fingerprint: dataset.fingerprint(),
        seed: config.seed,
        converged_step,
        best_val_ndcg10: tracker.best_metric().unwrap_or(0.0),
        test,
        steps_run: step,
        epochs: stream.epochs_done(),
        initial_train_loss: initial_loss,
        final_train_loss: (!diverged).then(|| rows[rows.len() - 1].train_loss),
        diverged,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        config: config.resolved(),
    };
    for p in &mut params {
        p.zero_grad();
    }
    Ok(RunRecord {
        rows,
        summary,
        best_params: params,
    })
}

fn snapshot(params: &[ParamTensor<f64>]) -> Vec<Tensor<f64>> {
    params.iter().map(|p| p.value.clone()).collect()
}

fn restore(params: &mut [ParamTensor<f64>], values: Vec<Tensor<f64>>) {
    for (p, v) in params.iter_mut().zip(values) {
        p.value = v;
    }
}

/// Endless sequence of training batches, reshuffled every epoch.
struct TrainStream<'a> {
    dataset: &'a InteractionDataset,
    max_len: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    batches: Vec<Batch>,
    pos: usize,
}

impl<'a> TrainStream<'a> {
    fn new(dataset: &'a InteractionDataset, spec: &ModelSpec, batch_size: usize, seed: u64) -> Result<Self> {
        let batches = make_batches(dataset, spec.max_len, batch_size, Split::Train, seed, 0)?;
        if batches.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            dataset,
            max_len: spec.max_len,
            batch_size,
            seed,
            epoch: 0,
            batches,
            pos: 0,
        })
    }

    fn peek(&self) -> &Batch {
        &self.batches[self.pos]
    }

    fn next_batch(&mut self) -> Result<&Batch> {
        if self.pos == self.batches.len() {
            self.epoch += 1;
            self.batches = make_batches(
                self.dataset,
                self.max_len,
                self.batch_size,
                Split::Train,
                self.seed,
                self.epoch,
            )?;
            self.pos = 0;
        }
        self.pos += 1;
        Ok(&self.batches[self.pos - 1])
    }

    fn epochs_done(&self) -> f64 {
        self.epoch as f64 + self.pos as f64 / self.batches.len() as f64
    }
}

struct Evaluator<'a> {
    dataset: &'a InteractionDataset,
    spec: &'a ModelSpec,
    exclude_history: bool,
    ks: &'a [usize],
    validation: Vec<Batch>,
    test: Vec<Batch>,
}

impl<'a> Evaluator<'a> {
    fn new(
        dataset: &'a InteractionDataset,
        spec: &'a ModelSpec,
        batch_size: usize,
        exclude_history: bool,
        ks: &'a [usize],
    ) -> Result<Self> {
        let validation = make_batches(dataset, spec.max_len, batch_size, Split::Validation, 0, 0)?;
        let test = make_batches(dataset, spec.max_len, batch_size, Split::Test, 0, 0)?;
        Ok(Self {
            dataset,
            spec,
            exclude_history,
            ks,
            validation,
            test,
        })
    }

    fn run(&self, params: &[ParamTensor<f64>], split: Split) -> Result<EvalResult> {
        let batches = match split {
            Split::Validation => &self.validation,
            _ => &self.test,
        };
        let mut ranks = Vec::with_capacity(self.dataset.num_users);
        for batch in batches {
            let scores = score_last(params, self.spec, batch)?;
            for (row, &user) in scores.iter().zip(&batch.users) {
                let target = match split {
                    Split::Validation => self.dataset.validation_item(user),
                    _ => self.dataset.test_item(user),
                };
                let exclude: Vec<usize> = if self.exclude_history {
                    let prefix = self.dataset.train_prefix(user);
                    prefix.iter().copied().filter(|&i| i != target).collect()
                } else {
                    Vec::new()
                };
                ranks.push(rank_of_target(row, target, &exclude)?);
            }
        }
        recall_ndcg(&ranks, self.ks)
    }
}
