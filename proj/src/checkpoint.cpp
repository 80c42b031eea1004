#include "dexfm/checkpoint.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace dexfm {

namespace {

constexpr char kMagic[] = {'D', 'E', 'X', 'F', 'M', '0', '1'};
constexpr std::uint8_t kVersion = 1;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string config_text(const Checkpoint& c) {
  std::ostringstream os;
  os.precision(17);
  const ModelConfig& m = c.model_config;
  os << "field_count=" << m.field_count << '\n'
     << "vocab_total=" << m.vocab_total << '\n'
     << "embed_dim=" << m.embed_dim << '\n'
     << "dein_depth=" << m.dein.depth << '\n';
  os << "dein_maps=";
  for (std::size_t i = 0; i < m.dein.feature_maps.size(); ++i)
    os << (i ? "," : "") << m.dein.feature_maps[i];
  os << '\n';
  os << "attention_hidden=" << m.dein.attention_hidden << '\n'
     << "mlp_depth=" << m.mlp.depth << '\n'
     << "mlp_width=" << m.mlp.width << '\n'
     << "variant=" << variant_name(m.variant) << '\n';
  const TrainConfig& t = c.train_config;
  os << "lambda_d=" << t.lambda_d << '\n'
     << "lambda_n=" << t.lambda_n << '\n'
     << "lr=" << t.lr << '\n'
     << "epochs=" << t.epochs << '\n'
     << "batch_size=" << t.batch_size << '\n'
     << "seed=" << t.seed << '\n'
     << "clip=" << t.clip << '\n'
     << "patience=" << t.patience << '\n'
     << "epoch=" << c.epoch << '\n'
     << "adam_t=" << c.adam.t << '\n';
  return os.str();
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("checkpoint: bad config line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw std::runtime_error("checkpoint: missing config key " + key);
  return it->second;
}

}  // namespace

SchemaDigest compute_schema_digest(const std::string& schema_path, const std::string& vocab_path) {
  const std::string schema = slurp(schema_path);
  const std::string vocab = slurp(vocab_path);
  SchemaDigest out{};
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("digest: EVP context allocation failed");
  unsigned int len = 0;
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, schema.data(), schema.size()) == 1 &&
                  EVP_DigestUpdate(ctx, vocab.data(), vocab.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, out.data(), &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok || len != out.size()) throw std::runtime_error("digest: SHA-256 failed");
  return out;
}

std::string digest_hex(const SchemaDigest& d) {
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (std::uint8_t b : d) {
    out.push_back(hex[b >> 4]);
    out.push_back(hex[b & 0xf]);
  }
  return out;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  out.put(static_cast<char>(kVersion));
  out.write(reinterpret_cast<const char*>(ckpt.digest.data()),
            static_cast<std::streamsize>(ckpt.digest.size()));

  const std::string cfg = config_text(ckpt);
  write_u64(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  ParameterSet& params = const_cast<ParameterSet&>(ckpt.params);
  const auto tensors = params.tensors();
  write_u64(out, tensors.size());
  for (const Tensor* t : tensors) write_tensor(out, *t);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    write_tensor(out, ckpt.adam.m[i]);
    write_tensor(out, ckpt.adam.v[i]);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path,
                           const std::optional<SchemaDigest>& expected_digest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);

  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + sizeof(magic), kMagic))
    throw std::runtime_error("checkpoint: bad magic tag in " + path);
  const int version = in.get();
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  in.read(reinterpret_cast<char*>(ckpt.digest.data()),
          static_cast<std::streamsize>(ckpt.digest.size()));
  if (!in) throw std::runtime_error("checkpoint: truncated file " + path);
  if (expected_digest && *expected_digest != ckpt.digest)
    throw std::runtime_error("checkpoint: schema digest mismatch (checkpoint " +
                             digest_hex(ckpt.digest) + ", provided " +
                             digest_hex(*expected_digest) + ")");

  const std::uint64_t cfg_len = read_u64(in);
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  if (!in) throw std::runtime_error("checkpoint: truncated config block");
  const auto kv = parse_config_text(cfg_text);

  ModelConfig& m = ckpt.model_config;
  m.field_count = std::stoul(require(kv, "field_count"));
  m.vocab_total = static_cast<std::uint32_t>(std::stoul(require(kv, "vocab_total")));
  m.embed_dim = std::stoul(require(kv, "embed_dim"));
  m.dein.depth = std::stoul(require(kv, "dein_depth"));
  m.dein.feature_maps.clear();
  {
    std::istringstream maps(require(kv, "dein_maps"));
    std::string tok;
    while (std::getline(maps, tok, ',')) m.dein.feature_maps.push_back(std::stoul(tok));
  }
  m.dein.attention_hidden = std::stoul(require(kv, "attention_hidden"));
  m.mlp.depth = std::stoul(require(kv, "mlp_depth"));
  m.mlp.width = std::stoul(require(kv, "mlp_width"));
  m.variant = parse_variant(require(kv, "variant"));
  m.dein.attention = m.attention_enabled();

  TrainConfig& t = ckpt.train_config;
  t.lambda_d = std::stod(require(kv, "lambda_d"));
  t.lambda_n = std::stod(require(kv, "lambda_n"));
  t.lr = std::stod(require(kv, "lr"));
  t.epochs = std::stoul(require(kv, "epochs"));
  t.batch_size = std::stoul(require(kv, "batch_size"));
  t.seed = std::stoull(require(kv, "seed"));
  t.clip = std::stod(require(kv, "clip"));
  t.patience = std::stoul(require(kv, "patience"));
  t.variant = m.variant;
  ckpt.epoch = std::stoul(require(kv, "epoch"));

  const std::uint64_t tensor_count = read_u64(in);
  std::vector<Tensor> flat(tensor_count);
  for (auto& tns : flat) tns = read_tensor(in);

  // rebuild the parameter layout, then overwrite in the fixed order
  Rng dummy(0);
  ckpt.params = init_parameters(m, dummy);
  auto slots = ckpt.params.tensors();
  if (slots.size() != tensor_count)
    throw std::runtime_error("checkpoint: tensor count mismatch (" + std::to_string(tensor_count) +
                             " stored, " + std::to_string(slots.size()) + " expected)");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]->shape != flat[i].shape)
      throw std::runtime_error("checkpoint: tensor shape mismatch at index " + std::to_string(i));
    *slots[i] = std::move(flat[i]);
  }

  ckpt.adam.t = std::stoull(require(kv, "adam_t"));
  ckpt.adam.m.resize(tensor_count);
  ckpt.adam.v.resize(tensor_count);
  for (std::size_t i = 0; i < tensor_count; ++i) {
    ckpt.adam.m[i] = read_tensor(in);
    ckpt.adam.v[i] = read_tensor(in);
    if (ckpt.adam.m[i].shape != slots[i]->shape || ckpt.adam.v[i].shape != slots[i]->shape)
      throw std::runtime_error("checkpoint: optimizer state shape mismatch at index " +
                               std::to_string(i));
  }
  return ckpt;
}

}  // namespace dexfm
