#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "dexfm/adam.hpp"
#include "dexfm/model.hpp"
#include "dexfm/training.hpp"

namespace dexfm {

using SchemaDigest = std::array<std::uint8_t, 32>;

// SHA-256 over the schema file bytes followed by the vocabulary file bytes.
SchemaDigest compute_schema_digest(const std::string& schema_path, const std::string& vocab_path);
std::string digest_hex(const SchemaDigest& d);

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  ParameterSet params;
  AdamState adam;
  std::size_t epoch = 0;
  SchemaDigest digest{};
};

// File layout: magic "DEXFM01", one version byte, the 32-byte schema
// digest, a length-prefixed UTF-8 key=value block for both configs and the
// counters, then every parameter tensor followed by the Adam moment tensors
// in the fixed parameter order.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// Verifies magic and version always, and the digest when one is supplied.
Checkpoint load_checkpoint(const std::string& path,
                           const std::optional<SchemaDigest>& expected_digest = std::nullopt);

}  // namespace dexfm
