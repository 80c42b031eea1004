#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dexfm/data.hpp"
#include "dexfm/deepnet.hpp"
#include "dexfm/dein.hpp"
#include "dexfm/rng.hpp"
#include "dexfm/tape.hpp"
#include "dexfm/tensor.hpp"

namespace dexfm {

// Structural ablations: no_diversity drops the diversity term and the
// attention network (reducing the model to the plain interaction-network
// hybrid), no_attention keeps diversity with unit per-layer weights, and
// no_deep removes the MLP branch from the output unit.
enum class Variant { Full, NoDiversity, NoAttention, NoDeep };

Variant parse_variant(const std::string& text);
std::string variant_name(Variant v);

struct ModelConfig {
  std::size_t field_count = 0;   // m
  std::uint32_t vocab_total = 0; // V
  std::size_t embed_dim = 10;    // d
  DeinConfig dein = DeinConfig::uniform(3, 200);
  MlpConfig mlp;
  Variant variant = Variant::Full;

  bool attention_enabled() const {
    return variant == Variant::Full || variant == Variant::NoDeep;
  }
  bool diversity_enabled() const { return variant != Variant::NoDiversity; }
  bool deep_enabled() const { return variant != Variant::NoDeep; }

  std::size_t mlp_input_size() const { return field_count * embed_dim; }
  void validate() const;
};

// Every trainable tensor, in the fixed order used for initialization,
// optimizer state, and checkpoints: embedding, linear, CIN blocks,
// attention (h, W, b), MLP (W_l, b_l alternating), output (w_dein, w_deep,
// bias). Absent branches simply have no entry.
struct ParameterSet {
  Tensor embedding;          // V x d
  Tensor linear;             // V
  std::vector<Tensor> cin;   // layer k: (e_k, e_{k-1}, m)
  Tensor attn_h, attn_w, attn_b;
  std::vector<Tensor> mlp_w, mlp_b;
  Tensor out_dein, out_deep, out_bias;

  struct Entry {
    const char* group;  // embedding | linear | cin | attention | mlp | output
    std::string name;
    Tensor* tensor;
    bool weight;  // participates in the L2 term (biases do not)
  };
  std::vector<Entry> entries();
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::size_t total_parameters() const;
};

enum class InitProfile {
  Training,   // embeddings N(0, 0.01^2), dense layers Glorot, biases zero
  GradCheck,  // everything U(-0.5, 0.5): well-scaled gradients for
              // finite-difference comparison
};

ParameterSet init_parameters(const ModelConfig& cfg, Rng& rng,
                             InitProfile profile = InitProfile::Training);

// Closed-form trainable-parameter count implied by the configuration.
std::size_t expected_parameter_count(const ModelConfig& cfg);

struct ForwardTrace {
  Tensor x0;                      // m x d
  HiddenState dein_state;         // X^1..X^K and s^1..s^K
  std::vector<double> attention;  // empty when the attention network is absent
  DiversityReport diversity;      // empty (total 0) for the no_diversity variant
  Tensor x_dein;
  Tensor x_deep;  // empty when the deep branch is absent
  double linear_term = 0.0;
  double prediction = 0.0;
};

struct TrainOpts {
  double lambda_d = 0.7;
  double lambda_n = 1e-5;
  double clip = 1e-7;
};

// Handles into a recorded training graph.
struct BatchGraph {
  std::vector<ValueId> leaves;  // parallel to ParameterSet::tensors()
  std::vector<ValueId> predictions;
  ValueId l1{0}, ld{0}, reg{0}, total{0};
  bool has_diversity = false;
  bool has_reg = false;
};

class DexDeepFM {
 public:
  DexDeepFM(ModelConfig cfg, Rng& rng, InitProfile profile = InitProfile::Training);
  DexDeepFM(ModelConfig cfg, ParameterSet params);

  const ModelConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  double predict(const EncodedInstance& instance) const;
  std::vector<double> predict(std::span<const EncodedInstance> instances) const;
  ForwardTrace trace(const EncodedInstance& instance) const;

  // Records the composite objective for one mini-batch:
  //   total = L1 - lambda_d * Ld + lambda_n * sum of squared weights.
  // The diversity subgraph is recorded only when the variant carries it and
  // lambda_d > 0; with lambda_d = 0 the optimization trajectory is then
  // exactly the no_diversity one.
  BatchGraph record_batch(Tape& tape, std::span<const EncodedInstance> batch,
                          const TrainOpts& opts) const;

 private:
  ModelConfig cfg_;
  ParameterSet params_;
};

}  // namespace dexfm
