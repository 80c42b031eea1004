#include "dexfm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dexfm/gradcheck.hpp"
#include "dexfm/tape.hpp"

namespace dexfm {

GradCheckSetup make_tiny_setup() {
  GradCheckSetup s;

  FieldSchema schema;
  schema.fields = {{"gender", FieldKind::Categorical, '|'},
                   {"age", FieldKind::Categorical, '|'},
                   {"genre", FieldKind::MultiCategorical, '|'}};

  std::vector<LabeledRecord> records = {
      {1, {"f", "young", "scifi|adventure"}}, {0, {"m", "young", "drama"}},
      {1, {"f", "old", "scifi"}},             {0, {"m", "mid", "drama|comedy"}},
      {1, {"m", "old", "adventure|comedy"}},  {0, {"f", "mid", "drama"}},
  };
  const Vocabulary vocab = Vocabulary::build(records, schema, 0);
  s.batch = encode_dataset(records, schema, vocab);

  s.model.field_count = schema.field_count();
  s.model.vocab_total = vocab.total_size();
  s.model.embed_dim = 4;
  s.model.dein = DeinConfig::uniform(2, 3, true, 4);
  s.model.mlp = {2, 5};
  s.model.variant = Variant::Full;

  s.train.lambda_d = 0.7;
  s.train.lambda_n = 1e-5;
  s.train.clip = 1e-7;
  return s;
}

double ModelGradCheck::worst() const {
  double w = 0.0;
  for (const Group& g : groups) w = std::max(w, g.max_rel_err);
  return w;
}

namespace {

double min_relu_input_magnitude(const Tape& tape) {
  double mn = std::numeric_limits<double>::infinity();
  for (const Node& n : tape.nodes())
    if (n.op == Op::Relu)
      for (double v : tape.value(n.inputs[0]).data) mn = std::min(mn, std::abs(v));
  return mn;
}

}  // namespace

ModelGradCheck model_gradient_check(const GradCheckSetup& setup, double h, std::uint64_t seed,
                                    const std::string& corrupt_group) {
  const TrainOpts opts{setup.train.effective_lambda_d(), setup.train.lambda_n, setup.train.clip};

  for (std::uint64_t attempt = 0; attempt < 16; ++attempt) {
    Rng rng(Rng::mix(seed, attempt));
    DexDeepFM model(setup.model, rng, InitProfile::GradCheck);

    Tape tape;
    const BatchGraph graph = model.record_batch(tape, setup.batch, opts);
    if (min_relu_input_magnitude(tape) < 1e-3) continue;  // too close to a kink for h

    const std::vector<Tensor> adjoints = tape.backward(graph.total);
    auto entries = model.params().entries();

    auto loss = [&]() {
      Tape t;
      const BatchGraph g = model.record_batch(t, setup.batch, opts);
      return t.value(g.total).scalar_value();
    };

    ModelGradCheck out;
    Rng coord_rng(Rng::mix(seed, 0xC0DE));
    for (std::size_t i = 0; i < entries.size(); ++i) {
      Tensor analytic = adjoints[graph.leaves[i].v];
      if (entries[i].group == corrupt_group)
        for (double& v : analytic.data) v *= 1.1;

      const double err =
          grad_check_tensor(loss, *entries[i].tensor, analytic, h, 200, &coord_rng);

      auto it = std::find_if(out.groups.begin(), out.groups.end(),
                             [&](const auto& g) { return g.name == entries[i].group; });
      if (it == out.groups.end()) {
        out.groups.push_back({entries[i].group, err, entries[i].tensor->numel()});
      } else {
        it->max_rel_err = std::max(it->max_rel_err, err);
        it->coords += entries[i].tensor->numel();
      }
    }
    return out;
  }
  throw std::runtime_error("gradient check: no ReLU-safe initialization found");
}

}  // namespace dexfm
