//! Federated round engine: local training, weighted aggregation, evaluation
//! and the baseline weighting rules.

use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Partition};
use crate::defects::{ground_truth_mark, DefectHooks, DefectPlan, QualityMark};
use crate::error::{Error, Result};
use crate::nn::{self, FlatParams, LayerSpec, LossKind};
use crate::seed::{self, Rng};
use crate::simplex::SimplexAction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for LocalTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 32,
            lr: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub indices: Vec<usize>,
    pub params: FlatParams,
    pub last_local_loss: f64,
}

/// Mean cross-entropy of `params` over `idx` rows of `data`.
pub fn dataset_loss(params: &FlatParams, data: &Dataset, idx: &[usize]) -> Result<f64> {
    let batch = data.batch(idx)?;
    Ok(nn::loss_and_grad(params, &batch, LossKind::CrossEntropy)?.0)
}

/// SGD on one client's shard starting from `global`.
///
/// Returns the trained parameters and the mean training loss of the final
/// epoch, measured on the (possibly corrupted) batches the client saw.
pub fn local_train(
    data: &Dataset,
    indices: &[usize],
    global: &FlatParams,
    cfg: &LocalTrainConfig,
    hooks: &DefectHooks,
    train_rng: &mut Rng,
    defect_rng: &mut Rng,
) -> Result<(FlatParams, f64)> {
    if indices.is_empty() {
        return Err(Error::Empty("client data"));
    }
    if cfg.epochs == 0 {
        return Ok((global.clone(), dataset_loss(global, data, indices)?));
    }
    let bs = cfg.batch_size.max(1);
    let mut params = global.clone();
    let mut order = indices.to_vec();
    let mut last_loss = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(train_rng);
        let mut sum = 0.0;
        for chunk in order.chunks(bs) {
            let batch = hooks.apply(data.batch(chunk)?, defect_rng);
            let (loss, grads) = nn::loss_and_grad(&params, &batch, LossKind::CrossEntropy)?;
            params = nn::sgd_step(&params, &grads, cfg.lr)?;
            sum += loss * chunk.len() as f64;
        }
        last_loss = sum / order.len() as f64;
    }
    Ok((params, last_loss))
}

/// `Σ_i a_i · w_i`, elementwise.
pub fn aggregate(params: &[FlatParams], weights: &SimplexAction) -> Result<FlatParams> {
    let first = params.first().ok_or(Error::Empty("aggregation inputs"))?;
    if params.len() != weights.len() {
        return Err(Error::Shape {
            context: "aggregation weights",
            expected: params.len(),
            actual: weights.len(),
        });
    }
    SimplexAction::check(weights.weights())?;
    let mut out = vec![0.0; first.d()];
    for (p, &a) in params.iter().zip(weights.weights()) {
        first.ensure_same_layout(p)?;
        for (o, v) in out.iter_mut().zip(p.values()) {
            *o += a * v;
        }
    }
    FlatParams::new(first.manifest().to_vec(), out)
}

pub fn fedavg_weights(k: usize) -> SimplexAction {
    SimplexAction::uniform(k)
}

/// `1/(K−M)` on clean models, zero on defective ones. Falls back to uniform
/// (with a warning) when every model is flagged.
pub fn rule_based_weights(defect_flags: &[bool]) -> SimplexAction {
    let k = defect_flags.len();
    let clean = defect_flags.iter().filter(|d| !**d).count();
    if clean == 0 {
        log::warn!("rule-based weighting: all {k} models defective, using uniform weights");
        return SimplexAction::uniform(k);
    }
    let w = defect_flags
        .iter()
        .map(|&d| if d { 0.0 } else { 1.0 / clean as f64 })
        .collect();
    SimplexAction::new(w).expect("clean weights form a simplex")
}

/// Fraction of argmax-correct predictions.
pub fn evaluate(params: &FlatParams, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut correct = 0usize;
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(1024) {
        let out = nn::forward(params, &data.inputs.select_rows(chunk))?;
        for (row, &i) in out.iter_rows().zip(chunk) {
            if argmax(row) == data.labels[i] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// K of N without replacement.
pub fn select_clients(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    index::sample(rng, n, k).into_vec()
}

/// Read-only data shared by every client and the server.
#[derive(Debug, Clone)]
pub struct FlData {
    pub train: Dataset,
    pub partition: Partition,
    /// Held-out set the server uses for δ.
    pub validation: Dataset,
    pub test: Dataset,
    pub manifest: Vec<LayerSpec>,
}

/// What the K selected clients send to the server in one round.
#[derive(Debug, Clone)]
pub struct Uploads {
    pub round: u64,
    pub ids: Vec<usize>,
    pub params: Vec<FlatParams>,
    pub losses: Vec<f64>,
    /// Ground truth, visible only to oracle strategies and metrics.
    pub defect_flags: Vec<bool>,
    pub marks: Vec<QualityMark>,
}

pub struct RoundContext<'a> {
    pub round: u64,
    pub global: &'a FlatParams,
    pub uploads: &'a Uploads,
}

/// Chooses aggregation weights for one round.
pub trait WeightStrategy {
    fn name(&self) -> &str;
    fn weights(&mut self, ctx: &RoundContext<'_>) -> Result<SimplexAction>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FedAvg;

impl WeightStrategy for FedAvg {
    fn name(&self) -> &str {
        "fedavg"
    }
    fn weights(&mut self, ctx: &RoundContext<'_>) -> Result<SimplexAction> {
        Ok(fedavg_weights(ctx.uploads.ids.len()))
    }
}

/// Oracle that knows which uploads are defective.
#[derive(Debug, Default, Clone, Copy)]
pub struct RuleBased;

impl WeightStrategy for RuleBased {
    fn name(&self) -> &str {
        "rule_based"
    }
    fn weights(&mut self, ctx: &RoundContext<'_>) -> Result<SimplexAction> {
        Ok(rule_based_weights(&ctx.uploads.defect_flags))
    }
}

#[derive(Debug, Clone)]
pub struct RoundResult {
    pub round: u64,
    pub previous_global: FlatParams,
    pub global_params: FlatParams,
    pub selected_ids: Vec<usize>,
    pub weights: SimplexAction,
    /// δ: validation accuracy of the aggregated model.
    pub global_accuracy: f64,
    /// δ̄: validation accuracy of the uniform average of the same uploads.
    pub fedavg_shadow_accuracy: f64,
    pub test_accuracy: f64,
    pub defect_flags: Vec<bool>,
    pub local_losses: Vec<f64>,
}

/// One simulated federation: N clients, a server model, a round counter.
#[derive(Debug, Clone)]
pub struct Federation {
    data: Arc<FlData>,
    clients: Vec<ClientState>,
    global: FlatParams,
    pub k: usize,
    pub local: LocalTrainConfig,
    seed: u64,
    run: u64,
    round: u64,
}

impl Federation {
    /// Fresh federation with a newly initialised global model for run `run`.
    pub fn new(
        data: Arc<FlData>,
        k: usize,
        local: LocalTrainConfig,
        seed: u64,
        run: u64,
    ) -> Result<Self> {
        let n = data.partition.num_clients();
        if k == 0 || k > n {
            return Err(Error::config(
                "federation.k",
                format!("K = {k} must be in 1..={n}"),
            ));
        }
        let global = FlatParams::init(
            data.manifest.clone(),
            seed::derive(seed, "fed/init", &[run]),
        )?;
        if global.in_dim() != data.train.feature_dim() {
            return Err(Error::Shape {
                context: "client model input width",
                expected: data.train.feature_dim(),
                actual: global.in_dim(),
            });
        }
        let clients = data
            .partition
            .client_indices
            .iter()
            .enumerate()
            .map(|(id, idx)| ClientState {
                id,
                indices: idx.clone(),
                params: global.clone(),
                last_local_loss: 0.0,
            })
            .collect();
        Ok(Self {
            data,
            clients,
            global,
            k,
            local,
            seed,
            run,
            round: 0,
        })
    }

    pub fn data(&self) -> &Arc<FlData> {
        &self.data
    }

    pub fn global(&self) -> &FlatParams {
        &self.global
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    /// Clients selected in `round` (a pure function of seed, run and round).
    pub fn selection(&self, round: u64) -> Vec<usize> {
        let mut rng = seed::stream(self.seed, "fed/select", &[self.run, round]);
        select_clients(self.clients.len(), self.k, &mut rng)
    }

    /// Trains one client from the current global model and returns its upload.
    pub fn train_client(&self, id: usize, plan: &DefectPlan) -> Result<(FlatParams, f64)> {
        let client = &self.clients[id];
        let mut train_rng =
            seed::stream(self.seed, "fed/local", &[self.run, self.round, id as u64]);
        let mut defect_rng = plan.rng(self.round, id);
        let (params, loss) = local_train(
            &self.data.train,
            &client.indices,
            &self.global,
            &self.local,
            &plan.hooks_for(id),
            &mut train_rng,
            &mut defect_rng,
        )?;
        Ok((plan.corrupt_upload(self.round, id, params)?, loss))
    }

    /// Selects K clients, trains them, and collects their uploads.
    pub fn collect_uploads(&self, plan: &DefectPlan) -> Result<Uploads> {
        let ids = self.selection(self.round);
        let mut params = Vec::with_capacity(ids.len());
        let mut losses = Vec::with_capacity(ids.len());
        for &id in &ids {
            let (p, l) = self.train_client(id, plan)?;
            params.push(p);
            losses.push(l);
        }
        Ok(Uploads {
            round: self.round,
            defect_flags: ids.iter().map(|&i| plan.is_defective(i)).collect(),
            marks: ids.iter().map(|&i| ground_truth_mark(i, plan)).collect(),
            ids,
            params,
            losses,
        })
    }

    /// Aggregates with `weights`, evaluates, and broadcasts the new model.
    pub fn apply(&mut self, uploads: &Uploads, weights: SimplexAction) -> Result<RoundResult> {
        let new_global = aggregate(&uploads.params, &weights)?;
        let global_accuracy = evaluate(&new_global, &self.data.validation)?;
        let uniform = fedavg_weights(uploads.params.len());
        let fedavg_shadow_accuracy = if weights == uniform {
            global_accuracy
        } else {
            evaluate(
                &aggregate(&uploads.params, &uniform)?,
                &self.data.validation,
            )?
        };
        let test_accuracy = evaluate(&new_global, &self.data.test)?;

        for (&id, &loss) in uploads.ids.iter().zip(&uploads.losses) {
            self.clients[id].last_local_loss = loss;
        }
        for c in &mut self.clients {
            c.params.clone_from(&new_global);
        }
        let previous_global = std::mem::replace(&mut self.global, new_global);
        let result = RoundResult {
            round: self.round,
            previous_global,
            global_params: self.global.clone(),
            selected_ids: uploads.ids.clone(),
            weights,
            global_accuracy,
            fedavg_shadow_accuracy,
            test_accuracy,
            defect_flags: uploads.defect_flags.clone(),
            local_losses: uploads.losses.clone(),
        };
        self.round += 1;
        Ok(result)
    }

    pub fn run_round(
        &mut self,
        strategy: &mut dyn WeightStrategy,
        plan: &DefectPlan,
    ) -> Result<RoundResult> {
        let uploads = self.collect_uploads(plan)?;
        let weights = strategy.weights(&RoundContext {
            round: self.round,
            global: &self.global,
            uploads: &uploads,
        })?;
        self.apply(&uploads, weights)
    }
}
