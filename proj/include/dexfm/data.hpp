#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dexfm/rng.hpp"

namespace dexfm {

enum class FieldKind { Categorical, MultiCategorical, Integer };

struct Field {
  std::string name;
  FieldKind kind = FieldKind::Categorical;
  char multi_delimiter = '|';
};

struct FieldSchema {
  std::vector<Field> fields;
  std::size_t field_count() const { return fields.size(); }
};

// Schema file: one line per field, `name<TAB>kind`, kind in {cat, multi, int}.
FieldSchema load_schema(const std::string& path);
FieldSchema parse_schema(const std::string& text, const std::string& origin);
void save_schema(const std::string& path, const FieldSchema& schema);

struct LabeledRecord {
  int label = 0;  // {0, 1}
  std::vector<std::string> values;
};

enum class LabelMode {
  Binary,  // first column already {0, 1}
  Rating,  // first column is a 1..5 rating; 3s dropped, <3 -> 0, >3 -> 1
};

// rating 3 -> nullopt (sample dropped); <3 -> 0; >3 -> 1
std::optional<int> binarize_rating(int rating);

// Data file: one record per line, tab-separated, first column the label (or
// rating), remaining columns in schema order.
std::vector<LabeledRecord> load_dataset(const std::string& path, const FieldSchema& schema,
                                        LabelMode mode);
void save_dataset(const std::string& path, const std::vector<LabeledRecord>& records);

// Missing -> "NA"; z <= 2 -> the number itself; z > 2 -> floor((ln z)^2).
std::string discretize_integer(std::optional<long long> z);

// Per-field token -> dense local id. Id 0 is the reserved unknown/OOV
// bucket of every field; retained tokens get ids 1..size-1 in first
// appearance order. Global ids are field-offset local ids, disjoint and
// contiguous across fields.
class Vocabulary {
 public:
  static Vocabulary build(const std::vector<LabeledRecord>& records, const FieldSchema& schema,
                          std::uint32_t min_freq = 0);

  std::uint32_t local_id(std::size_t field, const std::string& token) const;
  std::uint32_t global_id(std::size_t field, std::uint32_t local) const {
    return offsets_[field] + local;
  }
  std::uint32_t field_size(std::size_t field) const { return sizes_[field]; }
  std::uint32_t total_size() const { return total_; }
  std::size_t field_count() const { return sizes_.size(); }
  std::uint32_t min_freq() const { return min_freq_; }

  // Lines `field<TAB>token<TAB>local_id`; the unknown bucket is implicit.
  void save(const std::string& path, const FieldSchema& schema) const;
  static Vocabulary load(const std::string& path, const FieldSchema& schema);

 private:
  std::vector<std::unordered_map<std::string, std::uint32_t>> token_to_id_;
  std::vector<std::uint32_t> sizes_;    // including the unknown bucket
  std::vector<std::uint32_t> offsets_;  // global id of each field's bucket 0
  std::uint32_t total_ = 0;
  std::uint32_t min_freq_ = 0;

  void finalize_offsets();
};

// Sparse encoded instance: per-field sorted unique global feature ids.
struct EncodedInstance {
  std::vector<std::vector<std::uint32_t>> field_ids;
  int label = 0;
};

EncodedInstance encode_record(const LabeledRecord& record, const FieldSchema& schema,
                              const Vocabulary& vocab);
std::vector<EncodedInstance> encode_dataset(const std::vector<LabeledRecord>& records,
                                            const FieldSchema& schema, const Vocabulary& vocab);

struct FoldPlan {
  struct Fold {
    std::vector<std::uint32_t> train;
    std::vector<std::uint32_t> validation;
    std::vector<std::uint32_t> test;
  };
  std::size_t fold_count = 0;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
};

// k disjoint near-equal test groups covering 0..n-1; per fold the remaining
// indices split into validation = floor(0.1 * rest) and train = the rest.
FoldPlan make_folds(std::size_t n, std::size_t k, std::uint64_t seed);

struct SyntheticSpec {
  std::size_t field_count = 2;
  std::vector<std::uint32_t> cardinalities;  // one per field
  enum class Rule { EqualIndices } rule = Rule::EqualIndices;
  double noise_rate = 0.0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  FieldSchema schema;
  std::vector<LabeledRecord> records;
};

// Planted-interaction generator: tokens are "v<index>" drawn uniformly per
// field; the default rule labels an instance positive iff the field-0 and
// field-1 token indices are equal; each label then flips with probability
// noise_rate.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace dexfm
