#include "dexfm/model.hpp"

#include <stdexcept>

#include "dexfm/embedding.hpp"
#include "dexfm/init.hpp"

namespace dexfm {

Variant parse_variant(const std::string& text) {
  if (text == "full") return Variant::Full;
  if (text == "no_diversity") return Variant::NoDiversity;
  if (text == "no_attention") return Variant::NoAttention;
  if (text == "no_deep") return Variant::NoDeep;
  throw std::invalid_argument("unknown variant '" + text +
                              "' (expected full|no_diversity|no_attention|no_deep)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoDiversity: return "no_diversity";
    case Variant::NoAttention: return "no_attention";
    case Variant::NoDeep: return "no_deep";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (field_count < 1) throw std::invalid_argument("model: field count must be >= 1");
  if (vocab_total < 1) throw std::invalid_argument("model: empty vocabulary");
  if (embed_dim < 1) throw std::invalid_argument("model: embedding dimension must be >= 1");
  DeinConfig d = dein;
  d.attention = attention_enabled();
  d.validate();
  if (deep_enabled() && (mlp.depth < 1 || mlp.width < 1))
    throw std::invalid_argument("model: deep component needs depth >= 1 and width >= 1");
}

std::vector<ParameterSet::Entry> ParameterSet::entries() {
  std::vector<Entry> out;
  auto push = [&out](const char* group, std::string name, Tensor& t, bool weight) {
    if (t.numel() > 0) out.push_back({group, std::move(name), &t, weight});
  };
  push("embedding", "embedding", embedding, true);
  push("linear", "linear", linear, true);
  for (std::size_t k = 0; k < cin.size(); ++k)
    push("cin", "cin" + std::to_string(k + 1), cin[k], true);
  push("attention", "attn_h", attn_h, true);
  push("attention", "attn_w", attn_w, true);
  push("attention", "attn_b", attn_b, false);
  for (std::size_t l = 0; l < mlp_w.size(); ++l) {
    push("mlp", "mlp_w" + std::to_string(l), mlp_w[l], true);
    push("mlp", "mlp_b" + std::to_string(l), mlp_b[l], false);
  }
  push("output", "out_dein", out_dein, true);
  push("output", "out_deep", out_deep, true);
  push("output", "out_bias", out_bias, false);
  return out;
}

std::vector<Tensor*> ParameterSet::tensors() {
  std::vector<Tensor*> out;
  for (const Entry& e : entries()) out.push_back(e.tensor);
  return out;
}

std::vector<const Tensor*> ParameterSet::tensors() const {
  std::vector<const Tensor*> out;
  for (const Entry& e : const_cast<ParameterSet*>(this)->entries()) out.push_back(e.tensor);
  return out;
}

std::size_t ParameterSet::total_parameters() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->numel();
  return n;
}

ParameterSet init_parameters(const ModelConfig& cfg, Rng& rng, InitProfile profile) {
  cfg.validate();
  const std::size_t m = cfg.field_count, d = cfg.embed_dim;
  ParameterSet p;

  auto wide = [&rng](std::vector<std::size_t> shape) {
    return uniform_init(std::move(shape), -0.5, 0.5, rng);
  };

  if (profile == InitProfile::GradCheck) {
    p.embedding = wide({cfg.vocab_total, d});
    p.linear = wide({cfg.vocab_total});
  } else {
    p.embedding = normal_init({cfg.vocab_total, d}, 0.01, rng);
    p.linear = Tensor({cfg.vocab_total}, 0.0);
  }

  std::size_t e_prev = m;
  for (std::size_t e : cfg.dein.feature_maps) {
    p.cin.push_back(profile == InitProfile::GradCheck
                        ? wide({e, e_prev, m})
                        : glorot_uniform({e, e_prev, m}, e_prev * m, 1, rng));
    e_prev = e;
  }

  if (cfg.attention_enabled()) {
    const std::size_t a = cfg.dein.attention_hidden;
    const std::size_t e = cfg.dein.feature_maps[0];
    if (profile == InitProfile::GradCheck) {
      p.attn_h = wide({a});
      p.attn_w = wide({a, e});
      p.attn_b = wide({a});
    } else {
      p.attn_h = glorot_uniform({a}, a, 1, rng);
      p.attn_w = glorot_uniform_matrix(a, e, rng);
      p.attn_b = Tensor({a}, 0.0);
    }
  }

  if (cfg.deep_enabled()) {
    std::size_t in = cfg.mlp_input_size();
    for (std::size_t l = 0; l < cfg.mlp.depth; ++l) {
      if (profile == InitProfile::GradCheck) {
        p.mlp_w.push_back(wide({cfg.mlp.width, in}));
        p.mlp_b.push_back(wide({cfg.mlp.width}));
      } else {
        p.mlp_w.push_back(glorot_uniform_matrix(cfg.mlp.width, in, rng));
        p.mlp_b.push_back(Tensor({cfg.mlp.width}, 0.0));
      }
      in = cfg.mlp.width;
    }
  }

  const std::size_t dein_out = cfg.dein.output_size();
  if (profile == InitProfile::GradCheck) {
    p.out_dein = wide({dein_out});
    if (cfg.deep_enabled()) p.out_deep = wide({cfg.mlp.width});
    p.out_bias = wide({1});
  } else {
    p.out_dein = glorot_uniform({dein_out}, dein_out, 1, rng);
    if (cfg.deep_enabled()) p.out_deep = glorot_uniform({cfg.mlp.width}, cfg.mlp.width, 1, rng);
    p.out_bias = Tensor({1}, 0.0);
  }
  return p;
}

std::size_t expected_parameter_count(const ModelConfig& cfg) {
  const std::size_t m = cfg.field_count, d = cfg.embed_dim;
  std::size_t n = cfg.vocab_total * d + cfg.vocab_total;
  std::size_t e_prev = m;
  for (std::size_t e : cfg.dein.feature_maps) {
    n += e * e_prev * m;
    e_prev = e;
  }
  if (cfg.attention_enabled()) {
    const std::size_t a = cfg.dein.attention_hidden;
    n += a + a * cfg.dein.feature_maps[0] + a;
  }
  if (cfg.deep_enabled()) {
    std::size_t in = m * d;
    for (std::size_t l = 0; l < cfg.mlp.depth; ++l) {
      n += cfg.mlp.width * in + cfg.mlp.width;
      in = cfg.mlp.width;
    }
    n += cfg.mlp.width;  // w_deep
  }
  n += cfg.dein.output_size() + 1;  // w_dein, bias
  return n;
}

DexDeepFM::DexDeepFM(ModelConfig cfg, Rng& rng, InitProfile profile) : cfg_(std::move(cfg)) {
  cfg_.dein.attention = cfg_.attention_enabled();
  params_ = init_parameters(cfg_, rng, profile);
}

DexDeepFM::DexDeepFM(ModelConfig cfg, ParameterSet params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.dein.attention = cfg_.attention_enabled();
  cfg_.validate();
}

double DexDeepFM::predict(const EncodedInstance& instance) const {
  const EmbeddingTable table{params_.embedding};
  const Tensor x0m = embed_instance(instance, table);
  auto [x_dein, state] = dein_forward(x0m, params_.cin, cfg_.dein);

  OutputParams out{params_.out_dein, params_.out_deep, params_.out_bias[0]};
  const double linear_term = linear_forward(instance, params_.linear);
  if (!cfg_.deep_enabled()) return combine(x_dein, nullptr, linear_term, out);

  Tensor x0v;
  x0v.shape = {x0m.numel()};
  x0v.data = x0m.data;
  const Tensor x_deep = mlp_forward(x0v, params_.mlp_w, params_.mlp_b);
  return combine(x_dein, &x_deep, linear_term, out);
}

std::vector<double> DexDeepFM::predict(std::span<const EncodedInstance> instances) const {
  std::vector<double> out;
  out.reserve(instances.size());
  for (const EncodedInstance& inst : instances) out.push_back(predict(inst));
  return out;
}

ForwardTrace DexDeepFM::trace(const EncodedInstance& instance) const {
  ForwardTrace t;
  const EmbeddingTable table{params_.embedding};
  t.x0 = embed_instance(instance, table);
  auto [x_dein, state] = dein_forward(t.x0, params_.cin, cfg_.dein);
  t.x_dein = std::move(x_dein);
  t.dein_state = std::move(state);

  std::optional<std::vector<double>> attention;
  if (cfg_.attention_enabled()) {
    attention = attention_weights(t.dein_state.pooled, params_.attn_h, params_.attn_w,
                                  params_.attn_b);
    t.attention = *attention;
  }
  if (cfg_.diversity_enabled()) t.diversity = weighted_diversity(t.dein_state, attention);

  t.linear_term = linear_forward(instance, params_.linear);
  OutputParams out{params_.out_dein, params_.out_deep, params_.out_bias[0]};
  if (cfg_.deep_enabled()) {
    Tensor x0v;
    x0v.shape = {t.x0.numel()};
    x0v.data = t.x0.data;
    t.x_deep = mlp_forward(x0v, params_.mlp_w, params_.mlp_b);
    t.prediction = combine(t.x_dein, &t.x_deep, t.linear_term, out);
  } else {
    t.prediction = combine(t.x_dein, nullptr, t.linear_term, out);
  }
  return t;
}

BatchGraph DexDeepFM::record_batch(Tape& tape, std::span<const EncodedInstance> batch,
                                   const TrainOpts& opts) const {
  if (batch.empty()) throw std::invalid_argument("record_batch: empty batch");
  if (opts.lambda_d < 0.0 || opts.lambda_n < 0.0)
    throw std::invalid_argument("record_batch: negative trade-off weight");

  BatchGraph g;
  ParameterSet& p = const_cast<ParameterSet&>(params_);
  auto entries = p.entries();

  // leaves in the fixed parameter order
  ValueId emb{0}, lin{0}, atth{0}, attw{0}, attb{0}, wdein{0}, wdeep{0}, bias{0};
  std::vector<ValueId> cin_leaves, mlpw_leaves, mlpb_leaves;
  for (const auto& e : entries) {
    ValueId id = tape.leaf(*e.tensor);
    g.leaves.push_back(id);
    std::string_view name = e.name;
    if (name == "embedding") emb = id;
    else if (name == "linear") lin = id;
    else if (name.starts_with("cin")) cin_leaves.push_back(id);
    else if (name == "attn_h") atth = id;
    else if (name == "attn_w") attw = id;
    else if (name == "attn_b") attb = id;
    else if (name.starts_with("mlp_w")) mlpw_leaves.push_back(id);
    else if (name.starts_with("mlp_b")) mlpb_leaves.push_back(id);
    else if (name == "out_dein") wdein = id;
    else if (name == "out_deep") wdeep = id;
    else if (name == "out_bias") bias = id;
  }

  const bool diversity_active = cfg_.diversity_enabled() && opts.lambda_d > 0.0;
  const ValueId ones_d = tape.constant(Tensor({cfg_.embed_dim}, 1.0));

  std::vector<ValueId> preds, inst_lds;
  std::vector<double> labels;
  preds.reserve(batch.size());
  labels.reserve(batch.size());

  for (const EncodedInstance& inst : batch) {
    const ValueId x0m = tape.embed_gather(emb, inst.field_ids);

    std::vector<ValueId> layers, pooled;
    ValueId prev = x0m;
    for (std::size_t k = 0; k < cfg_.dein.depth; ++k) {
      const ValueId xk = tape.cin_contract(prev, x0m, cin_leaves[k]);
      layers.push_back(xk);
      pooled.push_back(tape.matvec(xk, ones_d));
      prev = xk;
    }
    const ValueId x_dein = tape.concat(pooled);

    ValueId z = tape.sum_reduce(tape.hadamard(wdein, x_dein));
    if (cfg_.deep_enabled()) {
      ValueId h = tape.reshape(x0m, {cfg_.mlp_input_size()});
      for (std::size_t l = 0; l < cfg_.mlp.depth; ++l)
        h = tape.relu(tape.add(tape.matvec(mlpw_leaves[l], h), mlpb_leaves[l]));
      z = tape.add(z, tape.sum_reduce(tape.hadamard(wdeep, h)));
    }
    std::vector<std::uint32_t> flat_ids;
    for (const auto& ids : inst.field_ids) flat_ids.insert(flat_ids.end(), ids.begin(), ids.end());
    z = tape.add(z, tape.select_sum(lin, flat_ids));
    z = tape.add(z, bias);
    preds.push_back(tape.sigmoid(z));
    labels.push_back(static_cast<double>(inst.label));

    if (diversity_active) {
      std::vector<ValueId> layer_divs;
      for (std::size_t k = 0; k < cfg_.dein.depth; ++k) {
        const ValueId centroid = tape.mean_rows(layers[k]);
        const std::size_t e = cfg_.dein.feature_maps[k];
        std::vector<ValueId> dists;
        dists.reserve(e);
        for (std::size_t l = 0; l < e; ++l)
          dists.push_back(tape.euclidean_dist(tape.row(layers[k], l), centroid));
        layer_divs.push_back(
            tape.scale(tape.sum_reduce(tape.concat(dists)), 1.0 / static_cast<double>(e)));
      }
      const ValueId divs_vec = tape.concat(layer_divs);
      if (cfg_.attention_enabled()) {
        std::vector<ValueId> scores;
        for (std::size_t k = 0; k < cfg_.dein.depth; ++k) {
          const ValueId pre = tape.relu(tape.add(tape.matvec(attw, pooled[k]), attb));
          scores.push_back(tape.sum_reduce(tape.hadamard(atth, pre)));
        }
        const ValueId att = tape.softmax(tape.concat(scores));
        inst_lds.push_back(tape.sum_reduce(tape.hadamard(att, divs_vec)));
      } else {
        inst_lds.push_back(tape.sum_reduce(divs_vec));
      }
    }
  }

  g.predictions = preds;
  const ValueId pred_vec = tape.concat(preds);
  g.l1 = tape.cross_entropy(pred_vec, labels, opts.clip);
  ValueId total = g.l1;

  g.has_diversity = diversity_active;
  if (diversity_active) {
    g.ld = tape.scale(tape.sum_reduce(tape.concat(inst_lds)),
                      1.0 / static_cast<double>(batch.size()));
    total = tape.add(total, tape.scale(g.ld, -opts.lambda_d));
  }

  g.has_reg = opts.lambda_n > 0.0;
  if (g.has_reg) {
    ValueId acc{0};
    bool first = true;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (!entries[i].weight) continue;
      const ValueId sq = tape.sum_reduce(tape.hadamard(g.leaves[i], g.leaves[i]));
      acc = first ? sq : tape.add(acc, sq);
      first = false;
    }
    g.reg = tape.scale(acc, opts.lambda_n);
    total = tape.add(total, g.reg);
  }

  g.total = total;
  return g;
}

}  // namespace dexfm
