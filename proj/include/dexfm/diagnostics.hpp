#pragma once

#include <string>
#include <vector>

#include "dexfm/model.hpp"
#include "dexfm/training.hpp"

namespace dexfm {

// Small fixture for full-model gradient checking: 3 fields (one of them
// multi-hot), embedding width 4, two interaction layers of 3 feature maps,
// attention hidden size 4, and a 2x5 MLP.
struct GradCheckSetup {
  ModelConfig model;
  TrainConfig train;
  std::vector<EncodedInstance> batch;
};

GradCheckSetup make_tiny_setup();

struct ModelGradCheck {
  struct Group {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t coords = 0;
  };
  std::vector<Group> groups;  // embedding, linear, cin, attention, mlp, output
  double worst() const;
};

// Compares tape gradients of the composite objective against central finite
// differences, per parameter group, at a well-conditioned random point
// (re-drawn until every ReLU pre-activation is at least 1e-3 away from its
// kink). corrupt_group, when non-empty, multiplies that group's analytic
// gradient by 1.1 before the comparison — the checker must flag it.
ModelGradCheck model_gradient_check(const GradCheckSetup& setup, double h = 1e-5,
                                    std::uint64_t seed = 7,
                                    const std::string& corrupt_group = "");

}  // namespace dexfm
