#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dexfm/adam.hpp"
#include "dexfm/model.hpp"

namespace dexfm {

struct TrainConfig {
  double lambda_d = 0.7;
  double lambda_n = 1e-5;
  double lr = 0.001;
  std::size_t epochs = 10;
  std::size_t batch_size = 4096;
  Variant variant = Variant::Full;
  std::uint64_t seed = 42;
  double clip = 1e-7;
  std::size_t patience = 0;  // 0: fixed epoch count, no early stopping

  double effective_lambda_d() const {
    return variant == Variant::NoDiversity ? 0.0 : lambda_d;
  }
};

struct LossBreakdown {
  double l1 = 0.0;
  double ld = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

struct EpochStats {
  std::size_t epoch = 0;
  LossBreakdown loss;          // instance-weighted mean over the epoch's batches
  double val_logloss = 0.0;    // NaN when there is no validation split
  double val_auc = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t epochs_run = 0;
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shuffled mini-batch epochs with Adam; the batch sequence is a pure
// function of (seed, epoch). Divergence (non-finite loss) aborts with the
// offending epoch and batch. Optionally resumes from an existing optimizer
// state (checkpoint restarts).
using EpochCallback = std::function<void(const EpochStats&)>;

TrainResult train(DexDeepFM& model, std::span<const EncodedInstance> train_set,
                  std::span<const EncodedInstance> validation_set, const TrainConfig& cfg,
                  AdamState* resume_state = nullptr, std::size_t start_epoch = 0,
                  const EpochCallback& on_epoch = nullptr);

// One recorded batch evaluated without an update; used by tests and
// diagnostics.
LossBreakdown composite_loss(const DexDeepFM& model, std::span<const EncodedInstance> batch,
                             const TrainConfig& cfg);

// Batch mean of the per-instance weighted diversity totals.
double diversity_loss(std::span<const ForwardTrace> traces);

}  // namespace dexfm
