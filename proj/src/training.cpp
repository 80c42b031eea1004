#include "dexfm/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dexfm/metrics.hpp"
#include "dexfm/rng.hpp"
#include "dexfm/tape.hpp"

namespace dexfm {

namespace {

LossBreakdown read_breakdown(const Tape& tape, const BatchGraph& g) {
  LossBreakdown b;
  b.l1 = tape.value(g.l1).scalar_value();
  b.ld = g.has_diversity ? tape.value(g.ld).scalar_value() : 0.0;
  b.reg = g.has_reg ? tape.value(g.reg).scalar_value() : 0.0;
  b.total = tape.value(g.total).scalar_value();
  return b;
}

}  // namespace

double diversity_loss(std::span<const ForwardTrace> traces) {
  if (traces.empty()) throw TrainingError("diversity_loss: empty batch");
  double acc = 0.0;
  for (const ForwardTrace& t : traces) acc += t.diversity.total;
  return acc / static_cast<double>(traces.size());
}

LossBreakdown composite_loss(const DexDeepFM& model, std::span<const EncodedInstance> batch,
                             const TrainConfig& cfg) {
  Tape tape;
  TrainOpts opts{cfg.effective_lambda_d(), cfg.lambda_n, cfg.clip};
  BatchGraph g = model.record_batch(tape, batch, opts);
  LossBreakdown b = read_breakdown(tape, g);
  if (!std::isfinite(b.total)) throw TrainingError("composite loss is not finite");
  return b;
}

TrainResult train(DexDeepFM& model, std::span<const EncodedInstance> train_set,
                  std::span<const EncodedInstance> validation_set, const TrainConfig& cfg,
                  AdamState* resume_state, std::size_t start_epoch,
                  const EpochCallback& on_epoch) {
  if (train_set.empty()) throw TrainingError("empty training split");
  if (cfg.batch_size < 1) throw TrainingError("batch size must be >= 1");

  const TrainOpts opts{cfg.effective_lambda_d(), cfg.lambda_n, cfg.clip};
  auto param_ptrs = model.params().tensors();
  std::vector<const Tensor*> param_view(param_ptrs.begin(), param_ptrs.end());

  AdamState local_state = AdamState::like(param_view);
  AdamState& state = resume_state != nullptr ? *resume_state : local_state;
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;

  std::vector<int> val_labels;
  for (const EncodedInstance& inst : validation_set) val_labels.push_back(inst.label);

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  std::vector<std::uint32_t> order(train_set.size());

  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    // batch sequence is a pure function of (seed, epoch)
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
    Rng shuffle_rng(Rng::mix(cfg.seed, epoch));
    shuffle_rng.shuffle(order);

    double acc_l1 = 0.0, acc_ld = 0.0, acc_reg = 0.0, acc_total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      std::vector<EncodedInstance> batch;
      batch.reserve(len);
      for (std::size_t i = 0; i < len; ++i) batch.push_back(train_set[order[start + i]]);

      Tape tape;
      BatchGraph g = model.record_batch(tape, batch, opts);
      LossBreakdown b = read_breakdown(tape, g);
      if (!std::isfinite(b.total))
        throw TrainingError("training diverged (non-finite loss) at epoch " +
                            std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      const double w = static_cast<double>(len);
      acc_l1 += w * b.l1;
      acc_ld += w * b.ld;
      acc_reg += w * b.reg;
      acc_total += w * b.total;

      std::vector<Tensor> grads = tape.backward(g.total);
      std::vector<const Tensor*> grad_ptrs;
      grad_ptrs.reserve(g.leaves.size());
      for (ValueId leaf : g.leaves) grad_ptrs.push_back(&grads[leaf.v]);
      adam_step(param_ptrs, grad_ptrs, state, adam_cfg);
    }

    EpochStats stats;
    stats.epoch = epoch;
    const double n = static_cast<double>(train_set.size());
    stats.loss = {acc_l1 / n, acc_ld / n, acc_reg / n, acc_total / n};
    if (!validation_set.empty()) {
      const std::vector<double> scores = model.predict(validation_set);
      stats.val_logloss = log_loss(scores, val_labels, cfg.clip);
      const bool has_pos = std::count(val_labels.begin(), val_labels.end(), 1) > 0;
      const bool has_neg = std::count(val_labels.begin(), val_labels.end(), 0) > 0;
      stats.val_auc = has_pos && has_neg ? auc(scores, val_labels)
                                         : std::numeric_limits<double>::quiet_NaN();
    } else {
      stats.val_logloss = std::numeric_limits<double>::quiet_NaN();
      stats.val_auc = std::numeric_limits<double>::quiet_NaN();
    }
    result.history.push_back(stats);
    result.epochs_run = epoch + 1;
    if (on_epoch) on_epoch(stats);

    if (cfg.patience > 0 && !validation_set.empty()) {
      if (stats.val_logloss < best_val) {
        best_val = stats.val_logloss;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
  }
  return result;
}

}  // namespace dexfm
