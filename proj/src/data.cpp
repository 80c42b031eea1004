#include "dexfm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace dexfm {

namespace {

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

FieldKind parse_kind(const std::string& text, const std::string& where) {
  if (text == "cat") return FieldKind::Categorical;
  if (text == "multi") return FieldKind::MultiCategorical;
  if (text == "int") return FieldKind::Integer;
  throw std::runtime_error(where + ": unknown field kind '" + text + "' (expected cat|multi|int)");
}

const char* kind_text(FieldKind kind) {
  switch (kind) {
    case FieldKind::Categorical: return "cat";
    case FieldKind::MultiCategorical: return "multi";
    case FieldKind::Integer: return "int";
  }
  return "?";
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

FieldSchema parse_schema(const std::string& text, const std::string& origin) {
  FieldSchema schema;
  std::unordered_set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    auto parts = split(line, '\t');
    if (parts.size() != 2) throw std::runtime_error(where + ": expected `name<TAB>kind`");
    if (parts[0].empty()) throw std::runtime_error(where + ": empty field name");
    if (!seen.insert(parts[0]).second)
      throw std::runtime_error(where + ": duplicate field name '" + parts[0] + "'");
    schema.fields.push_back({parts[0], parse_kind(parts[1], where), '|'});
  }
  if (schema.fields.empty()) throw std::runtime_error(origin + ": no fields");
  return schema;
}

FieldSchema load_schema(const std::string& path) {
  std::ifstream in = open_input(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_schema(buf.str(), path);
}

void save_schema(const std::string& path, const FieldSchema& schema) {
  std::ofstream out = open_output(path);
  for (const Field& f : schema.fields) out << f.name << '\t' << kind_text(f.kind) << '\n';
}

std::optional<int> binarize_rating(int rating) {
  if (rating < 1 || rating > 5)
    throw std::runtime_error("rating out of range 1..5: " + std::to_string(rating));
  if (rating == 3) return std::nullopt;
  return rating < 3 ? 0 : 1;
}

std::vector<LabeledRecord> load_dataset(const std::string& path, const FieldSchema& schema,
                                        LabelMode mode) {
  std::ifstream in = open_input(path);
  std::vector<LabeledRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    auto parts = split(line, '\t');
    if (parts.size() != schema.field_count() + 1)
      throw std::runtime_error(where + ": expected " + std::to_string(schema.field_count() + 1) +
                               " columns, got " + std::to_string(parts.size()));
    int raw;
    try {
      raw = std::stoi(parts[0]);
    } catch (const std::exception&) {
      throw std::runtime_error(where + ": bad label '" + parts[0] + "'");
    }
    int label;
    if (mode == LabelMode::Rating) {
      std::optional<int> bin;
      try {
        bin = binarize_rating(raw);
      } catch (const std::exception& e) {
        throw std::runtime_error(where + ": " + e.what());
      }
      if (!bin) continue;  // rating of three: sample dropped
      label = *bin;
    } else {
      if (raw != 0 && raw != 1) throw std::runtime_error(where + ": label must be 0 or 1");
      label = raw;
    }
    LabeledRecord rec;
    rec.label = label;
    rec.values.assign(parts.begin() + 1, parts.end());
    out.push_back(std::move(rec));
  }
  return out;
}

void save_dataset(const std::string& path, const std::vector<LabeledRecord>& records) {
  std::ofstream out = open_output(path);
  for (const LabeledRecord& r : records) {
    out << r.label;
    for (const std::string& v : r.values) out << '\t' << v;
    out << '\n';
  }
}

std::string discretize_integer(std::optional<long long> z) {
  if (!z) return "NA";
  if (*z <= 2) return std::to_string(*z);
  const double l = std::log(static_cast<double>(*z));
  return std::to_string(static_cast<long long>(std::floor(l * l)));
}

namespace {

std::optional<long long> parse_integer_token(const std::string& token, const std::string& where) {
  if (token.empty() || token == "NA") return std::nullopt;
  try {
    std::size_t used = 0;
    long long v = std::stoll(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": bad integer token '" + token + "'");
  }
}

// Applies the per-kind tokenization and feeds every resulting token to fn.
template <typename Fn>
void for_each_token(const std::string& raw, const Field& field, const std::string& where, Fn&& fn) {
  switch (field.kind) {
    case FieldKind::Categorical:
      fn(raw);
      break;
    case FieldKind::MultiCategorical:
      for (const std::string& tok : split(raw, field.multi_delimiter)) fn(tok);
      break;
    case FieldKind::Integer:
      fn(discretize_integer(parse_integer_token(raw, where)));
      break;
  }
}

}  // namespace

Vocabulary Vocabulary::build(const std::vector<LabeledRecord>& records, const FieldSchema& schema,
                             std::uint32_t min_freq) {
  const std::size_t m = schema.field_count();
  std::vector<std::unordered_map<std::string, std::uint32_t>> counts(m);
  std::vector<std::vector<std::string>> order(m);  // first-appearance order

  std::size_t recno = 0;
  for (const LabeledRecord& rec : records) {
    ++recno;
    if (rec.values.size() != m)
      throw std::runtime_error("record " + std::to_string(recno) + ": arity " +
                               std::to_string(rec.values.size()) + " != " + std::to_string(m));
    for (std::size_t f = 0; f < m; ++f) {
      const std::string where = "record " + std::to_string(recno);
      for_each_token(rec.values[f], schema.fields[f], where, [&](const std::string& tok) {
        auto [it, inserted] = counts[f].try_emplace(tok, 0u);
        it->second += 1;
        if (inserted) order[f].push_back(tok);
      });
    }
  }

  Vocabulary v;
  v.min_freq_ = min_freq;
  v.token_to_id_.resize(m);
  v.sizes_.resize(m);
  for (std::size_t f = 0; f < m; ++f) {
    std::uint32_t next = 1;  // 0 is the unknown bucket
    for (const std::string& tok : order[f])
      if (counts[f][tok] >= min_freq) v.token_to_id_[f][tok] = next++;
    v.sizes_[f] = next;
  }
  v.finalize_offsets();
  return v;
}

void Vocabulary::finalize_offsets() {
  offsets_.resize(sizes_.size());
  std::uint32_t off = 0;
  for (std::size_t f = 0; f < sizes_.size(); ++f) {
    offsets_[f] = off;
    off += sizes_[f];
  }
  total_ = off;
}

std::uint32_t Vocabulary::local_id(std::size_t field, const std::string& token) const {
  const auto& map = token_to_id_[field];
  auto it = map.find(token);
  return it == map.end() ? 0u : it->second;
}

void Vocabulary::save(const std::string& path, const FieldSchema& schema) const {
  std::ofstream out = open_output(path);
  for (std::size_t f = 0; f < token_to_id_.size(); ++f) {
    // deterministic file: order by id
    std::vector<const std::pair<const std::string, std::uint32_t>*> entries;
    entries.reserve(token_to_id_[f].size());
    for (const auto& kv : token_to_id_[f]) entries.push_back(&kv);
    std::sort(entries.begin(), entries.end(),
              [](auto* a, auto* b) { return a->second < b->second; });
    for (auto* kv : entries)
      out << schema.fields[f].name << '\t' << kv->first << '\t' << kv->second << '\n';
  }
}

Vocabulary Vocabulary::load(const std::string& path, const FieldSchema& schema) {
  std::ifstream in = open_input(path);
  std::unordered_map<std::string, std::size_t> field_index;
  for (std::size_t f = 0; f < schema.field_count(); ++f) field_index[schema.fields[f].name] = f;

  Vocabulary v;
  v.token_to_id_.resize(schema.field_count());
  v.sizes_.assign(schema.field_count(), 1);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    auto parts = split(line, '\t');
    if (parts.size() != 3) throw std::runtime_error(where + ": expected `field<TAB>token<TAB>id`");
    auto it = field_index.find(parts[0]);
    if (it == field_index.end())
      throw std::runtime_error(where + ": unknown field '" + parts[0] + "'");
    std::uint32_t id;
    try {
      id = static_cast<std::uint32_t>(std::stoul(parts[2]));
    } catch (const std::exception&) {
      throw std::runtime_error(where + ": bad id '" + parts[2] + "'");
    }
    if (id == 0) throw std::runtime_error(where + ": id 0 is reserved for the unknown bucket");
    std::size_t f = it->second;
    if (!v.token_to_id_[f].emplace(parts[1], id).second)
      throw std::runtime_error(where + ": duplicate token '" + parts[1] + "'");
    v.sizes_[f] = std::max(v.sizes_[f], id + 1);
  }
  for (std::size_t f = 0; f < schema.field_count(); ++f)
    if (v.token_to_id_[f].size() + 1 != v.sizes_[f])
      throw std::runtime_error(path + ": ids for field '" + schema.fields[f].name +
                               "' are not dense");
  v.finalize_offsets();
  return v;
}

EncodedInstance encode_record(const LabeledRecord& record, const FieldSchema& schema,
                              const Vocabulary& vocab) {
  const std::size_t m = schema.field_count();
  if (record.values.size() != m)
    throw std::runtime_error("encode: arity " + std::to_string(record.values.size()) +
                             " != " + std::to_string(m));
  EncodedInstance inst;
  inst.label = record.label;
  inst.field_ids.resize(m);
  for (std::size_t f = 0; f < m; ++f) {
    std::set<std::uint32_t> ids;  // de-duplicated, order-independent
    for_each_token(record.values[f], schema.fields[f], "encode", [&](const std::string& tok) {
      ids.insert(vocab.global_id(f, vocab.local_id(f, tok)));
    });
    inst.field_ids[f].assign(ids.begin(), ids.end());
  }
  return inst;
}

std::vector<EncodedInstance> encode_dataset(const std::vector<LabeledRecord>& records,
                                            const FieldSchema& schema, const Vocabulary& vocab) {
  std::vector<EncodedInstance> out;
  out.reserve(records.size());
  for (const LabeledRecord& r : records) out.push_back(encode_record(r, schema, vocab));
  return out;
}

FoldPlan make_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("make_folds: fold count must be >= 2");
  if (n < k)
    throw std::invalid_argument("make_folds: dataset size " + std::to_string(n) +
                                " < fold count " + std::to_string(k));
  std::vector<std::uint32_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
  Rng rng(seed);
  rng.shuffle(perm);

  FoldPlan plan;
  plan.fold_count = k;
  plan.seed = seed;
  plan.folds.resize(k);

  // test groups: contiguous chunks of the permutation, sizes differing by <= 1
  std::vector<std::pair<std::size_t, std::size_t>> chunks(k);
  std::size_t base = n / k, extra = n % k, pos = 0;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t len = base + (i < extra ? 1 : 0);
    chunks[i] = {pos, len};
    pos += len;
  }
  for (std::size_t i = 0; i < k; ++i) {
    FoldPlan::Fold& fold = plan.folds[i];
    auto [start, len] = chunks[i];
    fold.test.assign(perm.begin() + start, perm.begin() + start + len);
    std::vector<std::uint32_t> rest;
    rest.reserve(n - len);
    rest.insert(rest.end(), perm.begin(), perm.begin() + start);
    rest.insert(rest.end(), perm.begin() + start + len, perm.end());
    const std::size_t val = static_cast<std::size_t>(0.1 * static_cast<double>(rest.size()));
    fold.validation.assign(rest.begin(), rest.begin() + val);
    fold.train.assign(rest.begin() + val, rest.end());
  }
  return plan;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.field_count < 2) throw std::invalid_argument("synthetic: need at least 2 fields");
  if (spec.cardinalities.size() != spec.field_count)
    throw std::invalid_argument("synthetic: one cardinality per field required");
  for (std::uint32_t c : spec.cardinalities)
    if (c == 0) throw std::invalid_argument("synthetic: zero cardinality");
  if (spec.noise_rate < 0.0 || spec.noise_rate >= 1.0)
    throw std::invalid_argument("synthetic: noise rate must be in [0, 1)");
  if (spec.n == 0) throw std::invalid_argument("synthetic: empty dataset requested");

  SyntheticData out;
  for (std::size_t f = 0; f < spec.field_count; ++f)
    out.schema.fields.push_back({"f" + std::to_string(f), FieldKind::Categorical, '|'});

  Rng rng(spec.seed);
  out.records.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    LabeledRecord rec;
    std::vector<std::uint32_t> idx(spec.field_count);
    for (std::size_t f = 0; f < spec.field_count; ++f) {
      idx[f] = static_cast<std::uint32_t>(rng.index(spec.cardinalities[f]));
      rec.values.push_back("v" + std::to_string(idx[f]));
    }
    int label = (idx[0] == idx[1]) ? 1 : 0;
    // the flip draw happens unconditionally so that runs differing only in
    // noise_rate see identical token streams
    if (rng.uniform01() < spec.noise_rate) label = 1 - label;
    rec.label = label;
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace dexfm
