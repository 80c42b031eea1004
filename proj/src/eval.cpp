#include "dexfm/eval.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace dexfm {

namespace {

std::pair<double, double> mean_sd(const std::vector<FoldMetrics>& folds,
                                  double FoldMetrics::* member) {
  double mean = 0.0;
  for (const FoldMetrics& f : folds) mean += f.*member;
  mean /= static_cast<double>(folds.size());
  double ss = 0.0;
  for (const FoldMetrics& f : folds) {
    const double d = f.*member - mean;
    ss += d * d;
  }
  const double sd =
      folds.size() > 1 ? std::sqrt(ss / static_cast<double>(folds.size() - 1)) : 0.0;
  return {mean, sd};
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

FoldMetrics run_fold(const std::vector<LabeledRecord>& records, const FieldSchema& schema,
                     const FoldPlan::Fold& fold, const CvConfig& cfg, std::uint64_t fold_seed) {
  std::vector<LabeledRecord> train_records;
  train_records.reserve(fold.train.size());
  for (std::uint32_t i : fold.train) train_records.push_back(records[i]);

  // leakage guard: tokens seen only in validation/test land in the unknown bucket
  const Vocabulary vocab = Vocabulary::build(train_records, schema, cfg.min_freq);

  auto encode_split = [&](const std::vector<std::uint32_t>& idx) {
    std::vector<EncodedInstance> out;
    out.reserve(idx.size());
    for (std::uint32_t i : idx) out.push_back(encode_record(records[i], schema, vocab));
    return out;
  };
  const std::vector<EncodedInstance> train_set = encode_split(fold.train);
  const std::vector<EncodedInstance> val_set = encode_split(fold.validation);
  const std::vector<EncodedInstance> test_set = encode_split(fold.test);

  ModelConfig mc = cfg.model;
  mc.field_count = schema.field_count();
  mc.vocab_total = vocab.total_size();
  mc.variant = cfg.train.variant;

  Rng init_rng(Rng::mix(fold_seed, 0x1417));
  DexDeepFM model(mc, init_rng);

  TrainConfig tc = cfg.train;
  tc.seed = fold_seed;
  train(model, train_set, val_set, tc);

  std::vector<int> labels;
  labels.reserve(test_set.size());
  for (const EncodedInstance& inst : test_set) labels.push_back(inst.label);
  const std::vector<double> scores = model.predict(test_set);

  FoldMetrics out;
  out.logloss = log_loss(scores, labels, tc.clip);
  out.auc = auc(scores, labels);
  return out;
}

}  // namespace

MetricsReport cross_validate(const std::vector<LabeledRecord>& records, const FieldSchema& schema,
                             const FoldPlan& plan, const CvConfig& cfg) {
  if (plan.folds.empty()) throw std::invalid_argument("cross_validate: empty fold plan");

  MetricsReport report;
  report.variant = variant_name(cfg.train.variant);
  report.seed = cfg.train.seed;
  report.folds.resize(plan.folds.size());

  std::vector<std::exception_ptr> errors(plan.folds.size());
  const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, plan.folds.size()));

  auto worker = [&](std::size_t f) {
    try {
      report.folds[f] = run_fold(records, schema, plan.folds[f], cfg,
                                 Rng::mix(cfg.train.seed, 0xF01D + f));
    } catch (...) {
      errors[f] = std::current_exception();
    }
  };

  if (jobs == 1) {
    for (std::size_t f = 0; f < plan.folds.size(); ++f) worker(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j)
      pool.emplace_back([&] {
        for (std::size_t f = next.fetch_add(1); f < plan.folds.size(); f = next.fetch_add(1))
          worker(f);
      });
    for (std::thread& t : pool) t.join();
  }

  for (std::size_t f = 0; f < errors.size(); ++f)
    if (errors[f]) {
      try {
        std::rethrow_exception(errors[f]);
      } catch (const std::exception& e) {
        throw std::runtime_error("fold " + std::to_string(f) + ": " + e.what());
      }
    }

  std::tie(report.logloss_mean, report.logloss_sd) = mean_sd(report.folds, &FoldMetrics::logloss);
  std::tie(report.auc_mean, report.auc_sd) = mean_sd(report.folds, &FoldMetrics::auc);
  return report;
}

std::string MetricsReport::to_text() const {
  std::ostringstream os;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    os << "[fold " << f << "]\n";
    os << "logloss=" << fmt(folds[f].logloss) << '\n';
    os << "auc=" << fmt(folds[f].auc) << '\n';
  }
  os << "[summary]\n";
  os << "variant=" << variant << '\n';
  os << "seed=" << seed << '\n';
  os << "folds=" << folds.size() << '\n';
  os << "logloss_mean=" << fmt(logloss_mean) << '\n';
  os << "logloss_sd=" << fmt(logloss_sd) << '\n';
  os << "auc_mean=" << fmt(auc_mean) << '\n';
  os << "auc_sd=" << fmt(auc_sd) << '\n';
  return os.str();
}

VariantComparison compare_reports(MetricsReport a, MetricsReport b, double alpha) {
  if (a.folds.size() != b.folds.size())
    throw std::invalid_argument("compare: fold counts differ");
  VariantComparison cmp;
  std::vector<double> la, lb, aa, ab;
  for (const FoldMetrics& f : a.folds) {
    la.push_back(f.logloss);
    aa.push_back(f.auc);
  }
  for (const FoldMetrics& f : b.folds) {
    lb.push_back(f.logloss);
    ab.push_back(f.auc);
  }
  cmp.logloss_test = paired_t_test(la, lb, alpha);
  cmp.auc_test = paired_t_test(aa, ab, alpha);
  cmp.a = std::move(a);
  cmp.b = std::move(b);
  return cmp;
}

std::string VariantComparison::to_text() const {
  std::ostringstream os;
  os << "[compare " << a.variant << " vs " << b.variant << "]\n";
  os << "logloss_mean_a=" << fmt(a.logloss_mean) << '\n';
  os << "logloss_mean_b=" << fmt(b.logloss_mean) << '\n';
  os << "logloss_t=" << fmt(logloss_test.t) << '\n';
  os << "logloss_p=" << fmt(logloss_test.p) << '\n';
  os << "logloss_significant=" << (logloss_test.significant ? "true" : "false") << '\n';
  if (logloss_test.degenerate) os << "logloss_note=degenerate: all differences equal\n";
  os << "auc_mean_a=" << fmt(a.auc_mean) << '\n';
  os << "auc_mean_b=" << fmt(b.auc_mean) << '\n';
  os << "auc_t=" << fmt(auc_test.t) << '\n';
  os << "auc_p=" << fmt(auc_test.p) << '\n';
  os << "auc_significant=" << (auc_test.significant ? "true" : "false") << '\n';
  if (auc_test.degenerate) os << "auc_note=degenerate: all differences equal\n";
  return os.str();
}

void export_feature_maps(const DexDeepFM& model, std::span<const EncodedInstance> instances,
                         const std::vector<std::size_t>& layers, std::ostream& out) {
  const std::size_t depth = model.config().dein.depth;
  for (std::size_t k : layers)
    if (k < 1 || k > depth)
      throw std::invalid_argument("export: layer " + std::to_string(k) + " out of range 1.." +
                                  std::to_string(depth));
  out << "instance_id\tlayer\tmap_index\tvalues\n";
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const ForwardTrace t = model.trace(instances[i]);
    for (std::size_t k : layers) {
      const Tensor& x = t.dein_state.layers[k - 1];
      for (std::size_t l = 0; l < x.rows(); ++l) {
        out << i << '\t' << k << '\t' << l << '\t';
        for (std::size_t j = 0; j < x.cols(); ++j) out << (j ? "," : "") << fmt(x.at(l, j));
        out << '\n';
      }
    }
  }
}

}  // namespace dexfm
