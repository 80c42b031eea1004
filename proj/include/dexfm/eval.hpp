#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dexfm/data.hpp"
#include "dexfm/metrics.hpp"
#include "dexfm/model.hpp"
#include "dexfm/training.hpp"

namespace dexfm {

struct CvConfig {
  ModelConfig model;  // field_count/vocab_total are filled in per fold
  TrainConfig train;
  std::uint32_t min_freq = 0;
  std::size_t jobs = 1;
};

struct FoldMetrics {
  double logloss = 0.0;
  double auc = 0.0;
};

struct MetricsReport {
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<FoldMetrics> folds;
  double logloss_mean = 0.0, logloss_sd = 0.0;
  double auc_mean = 0.0, auc_sd = 0.0;

  std::string to_text() const;
};

// One model per fold: the vocabulary is rebuilt from that fold's training
// portion only, the model trains on train+validation splits, and the fold's
// held-out test group is scored. Folds are independent; jobs > 1 runs them
// on a small thread pool with identical results.
MetricsReport cross_validate(const std::vector<LabeledRecord>& records, const FieldSchema& schema,
                             const FoldPlan& plan, const CvConfig& cfg);

struct VariantComparison {
  MetricsReport a, b;
  TTestResult logloss_test;
  TTestResult auc_test;

  std::string to_text() const;
};

VariantComparison compare_reports(MetricsReport a, MetricsReport b, double alpha = 0.05);

// One line per feature map per instance:
// instance_id<TAB>layer<TAB>map_index<TAB>comma-separated values.
// Layers are 1-based hidden-layer indices.
void export_feature_maps(const DexDeepFM& model, std::span<const EncodedInstance> instances,
                         const std::vector<std::size_t>& layers, std::ostream& out);

}  // namespace dexfm
