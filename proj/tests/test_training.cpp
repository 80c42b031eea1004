#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dexfm/checkpoint.hpp"
#include "dexfm/metrics.hpp"
#include "dexfm/model.hpp"
#include "dexfm/tape.hpp"
#include "dexfm/training.hpp"

using namespace dexfm;

namespace {

struct Fixture {
  FieldSchema schema;
  Vocabulary vocab;
  std::vector<EncodedInstance> instances;
  ModelConfig model;
};

Fixture make_fixture(std::size_t n = 64, std::uint64_t seed = 5) {
  SyntheticSpec spec;
  spec.field_count = 3;
  spec.cardinalities = {5, 5, 3};
  spec.noise_rate = 0.05;
  spec.n = n;
  spec.seed = seed;
  const SyntheticData data = generate_synthetic(spec);

  Fixture f;
  f.schema = data.schema;
  f.vocab = Vocabulary::build(data.records, f.schema, 0);
  f.instances = encode_dataset(data.records, f.schema, f.vocab);
  f.model.field_count = 3;
  f.model.vocab_total = f.vocab.total_size();
  f.model.embed_dim = 4;
  f.model.dein = DeinConfig::uniform(2, 3, true, 4);
  f.model.mlp = {2, 5};
  f.model.variant = Variant::Full;
  return f;
}

TrainConfig quick_config(Variant v = Variant::Full) {
  TrainConfig tc;
  tc.variant = v;
  tc.epochs = 3;
  tc.batch_size = 16;
  tc.lr = 0.01;
  tc.seed = 11;
  return tc;
}

std::vector<Tensor> snapshot(DexDeepFM& model) {
  std::vector<Tensor> out;
  for (Tensor* t : model.params().tensors()) out.push_back(*t);
  return out;
}

}  // namespace

TEST_CASE("loss breakdown identity holds exactly") {
  Fixture f = make_fixture();
  Rng rng(3);
  DexDeepFM model(f.model, rng);
  TrainConfig tc = quick_config();
  tc.lambda_d = 0.7;
  tc.lambda_n = 1e-5;
  const std::span<const EncodedInstance> batch(f.instances.data(), 16);
  const LossBreakdown b = composite_loss(model, batch, tc);
  CHECK(b.total == b.l1 - tc.lambda_d * b.ld + b.reg);
  CHECK(b.ld > 0.0);
  CHECK(b.reg > 0.0);
}

TEST_CASE("degenerate weights reduce the loss to its parts") {
  Fixture f = make_fixture();
  Rng rng(4);
  DexDeepFM model(f.model, rng);
  const std::span<const EncodedInstance> batch(f.instances.data(), 16);

  TrainConfig plain = quick_config();
  plain.lambda_d = 0.0;
  plain.lambda_n = 0.0;
  const LossBreakdown b = composite_loss(model, batch, plain);
  CHECK(b.total == b.l1);
  CHECK(b.ld == 0.0);
  CHECK(b.reg == 0.0);

  // the arithmetic of the combination rule
  const double total = 0.5 - 0.7 * 0.2 + 0.01;
  CHECK(total == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("regularizer equals the squared weight norm, biases excluded") {
  Fixture f = make_fixture();
  Rng rng(5);
  DexDeepFM model(f.model, rng);
  TrainConfig tc = quick_config();
  tc.lambda_d = 0.0;
  tc.lambda_n = 0.5;
  const std::span<const EncodedInstance> batch(f.instances.data(), 8);
  const LossBreakdown b = composite_loss(model, batch, tc);

  double expected = 0.0;
  for (const auto& e : model.params().entries()) {
    if (!e.weight) continue;
    for (double v : e.tensor->data) expected += v * v;
  }
  CHECK(b.reg == doctest::Approx(0.5 * expected).epsilon(1e-14));
}

TEST_CASE("diversity_loss is the mean of per-trace totals") {
  Fixture f = make_fixture();
  Rng rng(8);
  DexDeepFM model(f.model, rng);

  std::vector<ForwardTrace> traces;
  for (std::size_t i = 0; i < 4; ++i) traces.push_back(model.trace(f.instances[i]));
  double expected = 0.0;
  for (const ForwardTrace& t : traces) expected += t.diversity.total;
  expected /= 4.0;
  CHECK(diversity_loss(traces) == doctest::Approx(expected).epsilon(1e-15));

  // identical instances: the mean equals the single-instance total
  std::vector<ForwardTrace> same(3, model.trace(f.instances[0]));
  CHECK(diversity_loss(same) ==
        doctest::Approx(model.trace(f.instances[0]).diversity.total).epsilon(1e-15));

  // crafted totals 1 and 3 average to 2
  std::vector<ForwardTrace> pair(2);
  pair[0].diversity.total = 1.0;
  pair[1].diversity.total = 3.0;
  CHECK(diversity_loss(pair) == 2.0);

  CHECK_THROWS_AS((void)diversity_loss({}), TrainingError);
}

TEST_CASE("training loss on the tape agrees with the metrics log loss") {
  Fixture f = make_fixture();
  Rng rng(6);
  DexDeepFM model(f.model, rng);
  const std::span<const EncodedInstance> batch(f.instances.data(), 24);
  Tape tape;
  const BatchGraph g = model.record_batch(tape, batch, TrainOpts{0.0, 0.0, 1e-7});

  std::vector<double> scores;
  std::vector<int> labels;
  for (const EncodedInstance& inst : batch) {
    scores.push_back(model.predict(inst));
    labels.push_back(inst.label);
  }
  CHECK(std::abs(tape.value(g.l1).scalar_value() - log_loss(scores, labels)) <= 1e-15);
}

TEST_CASE("non-finite parameters abort with a training error") {
  Fixture f = make_fixture();
  Rng rng(7);
  DexDeepFM model(f.model, rng);
  for (double& v : model.params().embedding.data) v = std::numeric_limits<double>::infinity();
  const std::span<const EncodedInstance> batch(f.instances.data(), 8);
  CHECK_THROWS_AS((void)composite_loss(model, batch, quick_config()), TrainingError);
}

TEST_CASE("training is bit-deterministic under a fixed seed") {
  Fixture f = make_fixture(96);
  const std::span<const EncodedInstance> all(f.instances);
  const auto train_set = all.subspan(0, 80);
  const auto val_set = all.subspan(80);

  Rng ra(21), rb(21);
  DexDeepFM a(f.model, ra), b(f.model, rb);
  const TrainResult res_a = train(a, train_set, val_set, quick_config());
  const TrainResult res_b = train(b, train_set, val_set, quick_config());

  REQUIRE(res_a.history.size() == res_b.history.size());
  for (std::size_t e = 0; e < res_a.history.size(); ++e) {
    CHECK(res_a.history[e].loss.total == res_b.history[e].loss.total);
    CHECK(res_a.history[e].val_logloss == res_b.history[e].val_logloss);
    CHECK(res_a.history[e].val_auc == res_b.history[e].val_auc);
  }
  CHECK(snapshot(a) == snapshot(b));
}

TEST_CASE("diversity pressure raises Ld when lambda_d is positive") {
  Fixture f = make_fixture(128, 9);
  const std::span<const EncodedInstance> all(f.instances);
  Rng rng(23);
  DexDeepFM model(f.model, rng);
  TrainConfig tc = quick_config();
  tc.lambda_d = 0.7;
  tc.epochs = 4;
  const TrainResult res = train(model, all, {}, tc);
  CHECK(res.history.back().loss.ld > res.history.front().loss.ld);
}

TEST_CASE("lambda_d = 0 with attention removed matches the no_diversity variant exactly") {
  Fixture f = make_fixture(96, 13);
  const std::span<const EncodedInstance> all(f.instances);
  const auto train_set = all.subspan(0, 80);
  const auto val_set = all.subspan(80);

  ModelConfig cfg_a = f.model;
  cfg_a.variant = Variant::NoAttention;  // diversity path present, attention absent
  ModelConfig cfg_b = f.model;
  cfg_b.variant = Variant::NoDiversity;

  Rng ra(31), rb(31);
  DexDeepFM a(cfg_a, ra), b(cfg_b, rb);

  TrainConfig ta = quick_config(Variant::NoAttention);
  ta.lambda_d = 0.0;
  TrainConfig tb = quick_config(Variant::NoDiversity);

  const TrainResult res_a = train(a, train_set, val_set, ta);
  const TrainResult res_b = train(b, train_set, val_set, tb);

  REQUIRE(res_a.history.size() == res_b.history.size());
  for (std::size_t e = 0; e < res_a.history.size(); ++e) {
    CHECK(res_a.history[e].loss.l1 == res_b.history[e].loss.l1);
    CHECK(res_a.history[e].loss.ld == res_b.history[e].loss.ld);  // both zero
    CHECK(res_a.history[e].loss.total == res_b.history[e].loss.total);
    CHECK(res_a.history[e].val_logloss == res_b.history[e].val_logloss);
  }
  CHECK(snapshot(a) == snapshot(b));
}

TEST_CASE("early stopping on validation logloss") {
  Fixture f = make_fixture(80, 17);
  const std::span<const EncodedInstance> all(f.instances);
  const auto train_set = all.subspan(0, 64);
  const auto val_set = all.subspan(64);

  Rng rng(37);
  DexDeepFM model(f.model, rng);
  TrainConfig tc = quick_config();
  tc.epochs = 40;
  tc.lr = 0.05;  // noisy small-batch trajectory: validation loss fluctuates
  tc.patience = 1;
  const TrainResult res = train(model, train_set, val_set, tc);
  CHECK(res.epochs_run < 40);

  // patience without a validation split runs every epoch
  Rng rng2(38);
  DexDeepFM m2(f.model, rng2);
  TrainConfig t2 = quick_config();
  t2.epochs = 4;
  t2.patience = 2;
  CHECK(train(m2, train_set, {}, t2).epochs_run == 4);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  namespace fs = std::filesystem;
  Fixture f = make_fixture(96, 19);
  const std::span<const EncodedInstance> all(f.instances);

  Rng rng(41);
  DexDeepFM model(f.model, rng);
  auto ptrs = model.params().tensors();
  AdamState adam = AdamState::like(std::vector<const Tensor*>(ptrs.begin(), ptrs.end()));
  TrainConfig tc = quick_config();
  train(model, all.subspan(0, 80), all.subspan(80), tc, &adam);

  const std::string dir = "/tmp/dexfm_test_ckpt";
  fs::create_directories(dir);
  const std::string schema_path = dir + "/schema.tsv";
  const std::string vocab_path = dir + "/vocab.tsv";
  save_schema(schema_path, f.schema);
  f.vocab.save(vocab_path, f.schema);
  const SchemaDigest digest = compute_schema_digest(schema_path, vocab_path);

  const std::string path = dir + "/model.bin";
  save_checkpoint(path, Checkpoint{f.model, tc, model.params(), adam, 3, digest});

  Checkpoint back = load_checkpoint(path, digest);
  CHECK(back.epoch == 3);
  CHECK(back.train_config.lambda_d == tc.lambda_d);
  CHECK(back.adam.t == adam.t);
  DexDeepFM restored(back.model_config, std::move(back.params));

  Rng probe(99);
  std::size_t checked = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const EncodedInstance& inst = f.instances[probe.index(f.instances.size())];
    CHECK(restored.predict(inst) == model.predict(inst));
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("checkpoint guards: magic, digest, truncation") {
  namespace fs = std::filesystem;
  const std::string dir = "/tmp/dexfm_test_ckpt2";
  fs::create_directories(dir);
  Fixture f = make_fixture(32, 23);
  Rng rng(43);
  DexDeepFM model(f.model, rng);
  auto ptrs = model.params().tensors();
  AdamState adam = AdamState::like(std::vector<const Tensor*>(ptrs.begin(), ptrs.end()));

  SchemaDigest digest{};
  digest[0] = 0xAB;
  const std::string path = dir + "/model.bin";
  save_checkpoint(path, Checkpoint{f.model, quick_config(), model.params(), adam, 1, digest});

  // digest mismatch
  SchemaDigest other{};
  other[0] = 0xCD;
  CHECK_THROWS_WITH_AS((void)load_checkpoint(path, other), doctest::Contains("digest"),
                       std::runtime_error);
  CHECK_NOTHROW((void)load_checkpoint(path));  // no digest supplied: skip the check

  // corrupted magic
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    bytes = buf.str();
  }
  const std::string bad = dir + "/bad.bin";
  {
    std::string corrupted = bytes;
    corrupted[0] = 'X';
    std::ofstream out(bad, std::ios::binary);
    out << corrupted;
  }
  CHECK_THROWS_WITH_AS((void)load_checkpoint(bad), doctest::Contains("magic"),
                       std::runtime_error);

  // truncation
  const std::string cut = dir + "/cut.bin";
  {
    std::ofstream out(cut, std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS((void)load_checkpoint(cut));
}

TEST_CASE("training resumes from checkpointed optimizer state") {
  Fixture f = make_fixture(64, 29);
  const std::span<const EncodedInstance> all(f.instances);

  // one continuous 4-epoch run
  Rng ra(51);
  DexDeepFM cont(f.model, ra);
  auto cont_ptrs = cont.params().tensors();
  AdamState cont_state =
      AdamState::like(std::vector<const Tensor*>(cont_ptrs.begin(), cont_ptrs.end()));
  TrainConfig tc = quick_config();
  tc.epochs = 4;
  train(cont, all, {}, tc, &cont_state);

  // the same run split 2 + 2 through the optimizer-state handoff
  Rng rb(51);
  DexDeepFM split(f.model, rb);
  auto split_ptrs = split.params().tensors();
  AdamState split_state =
      AdamState::like(std::vector<const Tensor*>(split_ptrs.begin(), split_ptrs.end()));
  TrainConfig first = tc;
  first.epochs = 2;
  train(split, all, {}, first, &split_state);
  train(split, all, {}, tc, &split_state, 2);

  CHECK(snapshot(cont) == snapshot(split));
}
