//! Stochastic variational training: Monte-Carlo ELBO, Adam, per-epoch edge
//! dropping, early stopping on validation accuracy.

mod config;
mod history;
mod sweep;

use std::borrow::Cow;
use std::collections::BTreeMap;

pub use config::{KlScale, TrainConfig, KEYS as CONFIG_KEYS};
pub use history::{EpochRecord, TrainHistory};
pub use sweep::{parse_grid, sweep, sweep_table, SweepGrid, SweepMetrics, SweepPoint, SweepRow};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics;
use crate::model::{self, Backbone, Checkpoint, Dropout, LayerPlan, ModelParams, ParamVars};
use crate::process::{
    active_scope, kl_nu_with_grad, record_kl_z, record_mask_sample, MaskNoise, StickBreakingPrior, VariationalPosterior,
};
use crate::rng::{derive_seed, substream, tag};
use crate::tensor::{AdamState, Matrix, Propagator, Tape};

/// Where the hop masks of an ELBO evaluation come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskSource {
    /// Fresh relaxed samples from the posterior.
    Sampled,
    /// Every mask entry fixed to 1 at full depth `T`.
    AllOnes,
}

/// Loss terms and gradients of one ELBO evaluation.
#[derive(Clone, Debug)]
pub struct ElboStep {
    /// Negative ELBO: `nll + scale · (kl_nu + kl_z)`.
    pub loss: f64,
    /// Mean over samples of the train-mask cross-entropy.
    pub nll: f64,
    pub kl_nu: f64,
    /// Mean over samples.
    pub kl_z: f64,
    pub kl_scale: f64,
    /// One entry per weight matrix in [`ModelParams::matrices`] order; `None`
    /// when no sample reached that layer.
    pub weight_grads: Vec<Option<Matrix>>,
    /// Gradients w.r.t. `log a` and `log b` (1×T each); `None` for baselines.
    pub posterior_grads: Option<(Matrix, Matrix)>,
    /// Scope of each sample.
    pub scopes: Vec<usize>,
    /// Mean over samples of the sampled stick probabilities.
    pub mean_pi: Vec<f64>,
}

impl ElboStep {
    pub fn breakdown(&self) -> String {
        format!(
            "loss={} nll={} kl_nu={} kl_z={} kl_scale={}",
            self.loss, self.nll, self.kl_nu, self.kl_z, self.kl_scale
        )
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Option<Matrix>) {
    if let Some(g) = g {
        match slot {
            Some(acc) => acc.add_assign(&g),
            None => *slot = Some(g),
        }
    }
}

/// Monte-Carlo negative ELBO on the train mask with gradients. Randomness
/// comes from substreams of `stream`, so equal streams give common random
/// numbers.
#[allow(clippy::too_many_arguments)]
pub fn elbo_step_with(
    adjacency: &Propagator,
    graph: &Graph,
    params: &ModelParams,
    posterior: &VariationalPosterior,
    prior: &StickBreakingPrior,
    config: &TrainConfig,
    source: MaskSource,
    stream: u64,
) -> Result<ElboStep> {
    let train = &graph.splits().train;
    let labels = graph.labels_of(train);
    let kl_scale = config.kl_scale.factor(train.len());
    let bna = config.backbone == Backbone::Bna;
    let samples = if bna { config.samples } else { 1 };
    let t = posterior.truncation();
    let o = params.hidden();
    let pi_prior = prior.expected_sticks(t);

    let mut weight_grads: Vec<Option<Matrix>> = vec![None; params.matrices().len()];
    let (mut ga, mut gb) = (Matrix::zeros(1, t), Matrix::zeros(1, t));
    let mut nll_total = 0.0;
    let mut kl_z_total = 0.0;
    let mut scopes = Vec::with_capacity(samples);
    let mut mean_pi = vec![0.0; t];
    let inv_s = 1.0 / samples as f64;

    let mut tape = Tape::new();
    for s in 0..samples {
        tape.reset();
        let x = tape.constant(graph.features().clone());
        let vars = ParamVars::record(&mut tape, params, true);
        let mut dropout_rng = substream(stream, &[tag::DROPOUT, s as u64]);
        let mut dropout = (config.dropout > 0.0).then(|| Dropout {
            rate: config.dropout,
            rng: &mut dropout_rng,
        });
        let mut extra = None;
        let mut post_vars = None;
        let plan = match (config.backbone, source) {
            (Backbone::Gcn, _) => LayerPlan::Gcn,
            (Backbone::ResGcn, _) => LayerPlan::ResGcn,
            (Backbone::Bna, MaskSource::AllOnes) => {
                scopes.push(t);
                LayerPlan::Masked {
                    z_rows: tape.constant(Matrix::filled(t, o, 1.0)),
                    depth: t,
                }
            }
            (Backbone::Bna, MaskSource::Sampled) => {
                let la = tape.param(Matrix::from_vec(1, t, posterior.log_a.clone())?);
                let lb = tape.param(Matrix::from_vec(1, t, posterior.log_b.clone())?);
                let noise = MaskNoise::draw(t, o, &mut substream(stream, &[tag::SAMPLE, s as u64]));
                let mv = record_mask_sample(&mut tape, la, lb, posterior.tau, &noise)?;
                let scope = active_scope(&tape.value(mv.z_rows).transpose(), config.threshold);
                scopes.push(scope);
                for (m, p) in mean_pi.iter_mut().zip(tape.value(mv.pi).as_slice()) {
                    *m += p * inv_s;
                }
                let kz = record_kl_z(&mut tape, mv.pi, &pi_prior, o)?;
                kl_z_total += tape.value(kz).item();
                extra = Some(tape.scale(kz, kl_scale * inv_s));
                post_vars = Some((la, lb));
                LayerPlan::Masked {
                    z_rows: mv.z_rows,
                    depth: scope,
                }
            }
        };
        let out = model::record_forward(&mut tape, adjacency, x, &vars, plan, &mut dropout)?;
        let nll = tape.softmax_nll(out.logits, train, &labels)?;
        nll_total += tape.value(nll).item();
        let mut loss = tape.scale(nll, inv_s);
        if let Some(e) = extra {
            loss = tape.add(loss, e)?;
        }
        let mut grads = tape.backward(loss)?;
        for (slot, v) in weight_grads.iter_mut().zip(vars.vars()) {
            accumulate(slot, grads.take(v));
        }
        if let Some((la, lb)) = post_vars {
            if let Some(g) = grads.take(la) {
                ga.add_assign(&g);
            }
            if let Some(g) = grads.take(lb) {
                gb.add_assign(&g);
            }
        }
    }

    let nll = nll_total * inv_s;
    let kl_z = kl_z_total * inv_s;
    let (kl_nu, posterior_grads) = if bna && source == MaskSource::Sampled {
        let (v, da, db) = kl_nu_with_grad(posterior, prior, config.kl_method);
        ga.add_scaled(&Matrix::from_vec(1, t, da)?, kl_scale);
        gb.add_scaled(&Matrix::from_vec(1, t, db)?, kl_scale);
        (v, Some((ga, gb)))
    } else {
        (0.0, None)
    };
    Ok(ElboStep {
        loss: nll + kl_scale * (kl_nu + kl_z),
        nll,
        kl_nu,
        kl_z,
        kl_scale,
        weight_grads,
        posterior_grads,
        scopes,
        mean_pi,
    })
}

/// [`elbo_step_with`] on sampled masks.
pub fn elbo_step(
    adjacency: &Propagator,
    graph: &Graph,
    params: &ModelParams,
    posterior: &VariationalPosterior,
    prior: &StickBreakingPrior,
    config: &TrainConfig,
    stream: u64,
) -> Result<ElboStep> {
    elbo_step_with(adjacency, graph, params, posterior, prior, config, MaskSource::Sampled, stream)
}

/// Trained weights, posterior and the per-epoch record.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub posterior: VariationalPosterior,
    pub history: TrainHistory,
    /// Epoch (1-based) of the returned snapshot.
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best_val_loss: f64,
}

impl TrainOutcome {
    pub fn checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        Checkpoint {
            backbone: config.backbone,
            params: self.params.clone(),
            posterior: (config.backbone == Backbone::Bna).then(|| self.posterior.clone()),
            config: config.to_map(),
        }
    }
}

/// Initial weights and posterior for `config`.
pub fn initialize(graph: &Graph, config: &TrainConfig) -> Result<(ModelParams, VariationalPosterior)> {
    let prior = StickBreakingPrior::new(config.alpha, config.beta)?;
    let depth = if config.backbone == Backbone::Bna { config.truncation } else { config.layers };
    let params = ModelParams::init(
        graph.n_features(),
        config.hidden,
        depth,
        graph.num_classes(),
        &mut substream(config.seed, &[tag::INIT]),
    );
    let posterior = VariationalPosterior::from_prior(&prior, config.truncation, config.tau)?;
    Ok((params, posterior))
}

/// `graph` under the adjacency normalization of `config`.
fn normalized<'g>(graph: &'g Graph, config: &TrainConfig) -> Cow<'g, Graph> {
    if graph.normalization() == config.normalization {
        Cow::Borrowed(graph)
    } else {
        Cow::Owned(graph.clone().with_normalization(config.normalization))
    }
}

/// Predictive probabilities for all nodes on the full graph.
pub fn predict_probs(
    graph: &Graph,
    params: &ModelParams,
    posterior: &VariationalPosterior,
    config: &TrainConfig,
    stream: u64,
) -> Result<Matrix> {
    let graph = &*normalized(graph, config);
    model::predict(
        graph.adjacency(),
        graph.features(),
        params,
        config.backbone,
        posterior,
        config.eval_policy,
        config.eval_samples,
        config.threshold,
        &mut substream(stream, &[]),
    )
}

/// Test-time probabilities, drawn from the evaluation stream of `config.seed`.
pub fn evaluate(graph: &Graph, params: &ModelParams, posterior: &VariationalPosterior, config: &TrainConfig) -> Result<Matrix> {
    predict_probs(graph, params, posterior, config, derive_seed(config.seed, &[tag::EVAL]))
}

fn mode(values: &[usize]) -> usize {
    let mut counts = BTreeMap::new();
    for &v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    counts.into_iter().find(|&(_, c)| c == best).map_or(0, |(v, _)| v)
}

/// Runs Adam on the negative ELBO with early stopping and returns the
/// snapshot with the best validation accuracy (ties: lower validation loss).
pub fn train(graph: &Graph, config: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(graph, config, |_, _, _| {})
}

/// [`train`] that also hands the parameters after every epoch's update to
/// `observer`.
pub fn train_observed(
    graph: &Graph,
    config: &TrainConfig,
    mut observer: impl FnMut(usize, &ModelParams, &VariationalPosterior),
) -> Result<TrainOutcome> {
    config.validate()?;
    let graph = &*normalized(graph, config);
    if graph.splits().train.is_empty() || graph.splits().val.is_empty() {
        return Err(Error::Precondition("training needs nonempty train and val masks".into()));
    }
    let prior = StickBreakingPrior::new(config.alpha, config.beta)?;
    let (mut params, mut posterior) = initialize(graph, config)?;
    let bna = config.backbone == Backbone::Bna;
    let mut shapes: Vec<(usize, usize)> = params.matrices().iter().map(|m| m.shape()).collect();
    if bna {
        shapes.extend([(1, config.truncation), (1, config.truncation)]);
    }
    let mut adam = AdamState::new(&shapes, config.lr);
    let val = &graph.splits().val;
    let val_labels = graph.labels_of(val);
    let mut history = TrainHistory::new(config.truncation);
    let mut best: Option<(f64, f64, usize, ModelParams, VariationalPosterior)> = None;

    for epoch in 1..=config.epochs {
        let e = epoch as u64;
        let view = graph.drop_edges(config.dropedge, &mut substream(config.seed, &[tag::DROPEDGE, e]))?;
        let step = elbo_step(
            &view.adjacency,
            graph,
            &params,
            &posterior,
            &prior,
            config,
            derive_seed(config.seed, &[tag::EPOCH, e]),
        )?;
        if !step.loss.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                breakdown: step.breakdown(),
            });
        }

        let ElboStep {
            weight_grads,
            posterior_grads,
            ..
        } = &step;
        let mut grads: Vec<Option<&Matrix>> = weight_grads.iter().map(Option::as_ref).collect();
        if let Some((ga, gb)) = posterior_grads {
            grads.extend([Some(ga), Some(gb)]);
        }
        let mut log_a = Matrix::row_vector(&posterior.log_a);
        let mut log_b = Matrix::row_vector(&posterior.log_b);
        {
            let mut slots = params.matrices_mut();
            if bna {
                slots.push(&mut log_a);
                slots.push(&mut log_b);
            }
            adam.step(&mut slots, &grads)?;
        }
        posterior.log_a = log_a.into_vec();
        posterior.log_b = log_b.into_vec();
        observer(epoch, &params, &posterior);

        let probs = predict_probs(graph, &params, &posterior, config, derive_seed(config.seed, &[tag::VALIDATION, e]))?;
        let val_acc = metrics::accuracy(&probs, val, &val_labels)?;
        let val_loss = metrics::log_loss(&probs, val, &val_labels)?;
        history.push(EpochRecord {
            epoch,
            train_loss: step.loss,
            nll: step.nll,
            kl_nu: step.kl_nu,
            kl_z: step.kl_z,
            val_acc,
            val_loss,
            mean_pi: if bna { step.mean_pi.clone() } else { vec![] },
            lns_mode: if bna { mode(&step.scopes) } else { params.depth() },
        });
        log::debug!("epoch {epoch}: {} val_acc={val_acc:.4} val_loss={val_loss:.4}", step.breakdown());

        let improved = match &best {
            None => true,
            Some((acc, loss, ..)) => val_acc > *acc || (val_acc == *acc && val_loss < *loss),
        };
        if improved {
            best = Some((val_acc, val_loss, epoch, params.clone(), posterior.clone()));
        } else if let Some((.., best_epoch, _, _)) = &best {
            if epoch - best_epoch >= config.patience {
                log::info!("early stop at epoch {epoch}; best epoch {best_epoch}");
                break;
            }
        }
    }
    let (best_val_acc, best_val_loss, best_epoch, params, posterior) =
        best.ok_or_else(|| Error::Config("epochs must be at least 1".into()))?;
    Ok(TrainOutcome {
        params,
        posterior,
        history,
        best_epoch,
        best_val_acc,
        best_val_loss,
    })
}
