// dexfm: training, cross-validation, sweeps, and diagnostics for the
// diversity-regularized interaction-network CTR model.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "dexfm/checkpoint.hpp"
#include "dexfm/data.hpp"
#include "dexfm/diagnostics.hpp"
#include "dexfm/eval.hpp"
#include "dexfm/model.hpp"
#include "dexfm/training.hpp"

namespace fs = std::filesystem;
using namespace dexfm;

namespace {

struct Options {
  std::string schema_path;
  std::string data_path;
  std::string config_path;
  std::string out = "out";
  std::string variant = "full";
  double lambda_d = 0.7;
  double lambda_n = 1e-5;
  double lr = 0.001;
  double clip = 1e-7;
  std::size_t depth_dein = 3;
  std::size_t maps = 200;
  std::size_t embed_dim = 10;
  std::size_t attn_hidden = 32;
  std::size_t mlp_depth = 2;
  std::size_t mlp_width = 300;
  std::size_t epochs = 10;
  std::size_t batch = 4096;
  std::size_t folds = 5;
  std::size_t jobs = 1;
  std::size_t patience = 0;
  std::uint64_t seed = 42;
  std::uint32_t min_freq = 0;
  bool rating_labels = false;

  // per-command extras
  std::string compare;      // cv: "variantA,variantB"
  std::string sweep_param;  // sweep
  std::string sweep_grid;
  std::size_t gen_n = 10000;  // gen-data
  std::size_t gen_m = 4;
  std::string gen_cards;
  double gen_noise = 0.0;
  std::string gen_rule = "equal_indices";
  std::string checkpoint_path;  // export-maps
  std::string vocab_path;
  std::string layers = "1";
  std::string corrupt;  // gradcheck test hook
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void add_model_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--variant", o.variant, "Model variant: full|no_diversity|no_attention|no_deep")
      ->capture_default_str();
  cmd->add_option("--lambda-d", o.lambda_d, "Diversity trade-off weight")->capture_default_str();
  cmd->add_option("--lambda-n", o.lambda_n, "L2 regularization weight")->capture_default_str();
  cmd->add_option("--depth-dein", o.depth_dein, "Interaction network depth K")
      ->capture_default_str();
  cmd->add_option("--maps", o.maps, "Feature maps per interaction layer")->capture_default_str();
  cmd->add_option("--embed-dim", o.embed_dim, "Embedding dimension d")->capture_default_str();
  cmd->add_option("--attn-hidden", o.attn_hidden, "Attention hidden size")->capture_default_str();
  cmd->add_option("--mlp-depth", o.mlp_depth, "Deep component depth")->capture_default_str();
  cmd->add_option("--mlp-width", o.mlp_width, "Deep component width")->capture_default_str();
}

void add_train_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch", o.batch, "Mini-batch size")->capture_default_str();
  cmd->add_option("--lr", o.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--clip", o.clip, "Prediction clip inside the log loss")->capture_default_str();
  cmd->add_option("--patience", o.patience,
                  "Early-stop patience on validation logloss (0 = fixed epochs)")
      ->capture_default_str();
  cmd->add_option("--min-freq", o.min_freq, "Vocabulary frequency threshold")
      ->capture_default_str();
  cmd->add_flag("--rating-labels", o.rating_labels,
                "First column is a 1..5 rating: drop 3s, binarize at 3");
}

void add_common(CLI::App* cmd, Options& o, bool needs_data) {
  auto* schema = cmd->add_option("--schema", o.schema_path, "Schema file path");
  auto* data = cmd->add_option("--data", o.data_path, "Data file path");
  if (needs_data) {
    schema->required();
    data->required();
  }
  cmd->add_option("--out", o.out, "Output directory (or file for export-maps)")
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "Deterministic seed")->capture_default_str();
  cmd->add_option("--config", o.config_path,
                  "Flat key=value config file with # comments; flags take precedence");
}

// Merge precedence is defaults < config file < command-line flags: a file
// entry applies only when its flag was not given. Keys are the flag names
// without the leading dashes; keys for other subcommands are ignored.
void apply_config_file(const CLI::App* cmd, Options& o) {
  if (o.config_path.empty()) return;
  std::ifstream in(o.config_path);
  if (!in) throw std::runtime_error("cannot open config file " + o.config_path);

  const auto flag_given = [cmd](const std::string& flag) {
    const CLI::Option* opt = cmd->get_option_no_throw(flag);
    return opt != nullptr && opt->count() > 0;
  };

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    line = line.substr(start);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(o.config_path + ":" + std::to_string(lineno) +
                               ": expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (flag_given("--" + key)) continue;

    try {
      if (key == "schema") o.schema_path = value;
      else if (key == "data") o.data_path = value;
      else if (key == "out") o.out = value;
      else if (key == "variant") o.variant = value;
      else if (key == "lambda-d") o.lambda_d = std::stod(value);
      else if (key == "lambda-n") o.lambda_n = std::stod(value);
      else if (key == "lr") o.lr = std::stod(value);
      else if (key == "clip") o.clip = std::stod(value);
      else if (key == "depth-dein") o.depth_dein = std::stoul(value);
      else if (key == "maps") o.maps = std::stoul(value);
      else if (key == "embed-dim") o.embed_dim = std::stoul(value);
      else if (key == "attn-hidden") o.attn_hidden = std::stoul(value);
      else if (key == "mlp-depth") o.mlp_depth = std::stoul(value);
      else if (key == "mlp-width") o.mlp_width = std::stoul(value);
      else if (key == "epochs") o.epochs = std::stoul(value);
      else if (key == "batch") o.batch = std::stoul(value);
      else if (key == "folds") o.folds = std::stoul(value);
      else if (key == "jobs") o.jobs = std::stoul(value);
      else if (key == "patience") o.patience = std::stoul(value);
      else if (key == "seed") o.seed = std::stoull(value);
      else if (key == "min-freq") o.min_freq = static_cast<std::uint32_t>(std::stoul(value));
      else if (key == "rating-labels") o.rating_labels = value == "true" || value == "1";
      else std::cerr << "note: ignoring config key '" << key << "'\n";
    } catch (const std::invalid_argument&) {
      throw std::runtime_error(o.config_path + ":" + std::to_string(lineno) + ": bad value for " +
                               key);
    }
  }
}

LabelMode label_mode(const Options& o) {
  return o.rating_labels ? LabelMode::Rating : LabelMode::Binary;
}

ModelConfig make_model_config(const Options& o) {
  ModelConfig mc;
  mc.embed_dim = o.embed_dim;
  mc.dein = DeinConfig::uniform(o.depth_dein, o.maps, true, o.attn_hidden);
  mc.mlp = {o.mlp_depth, o.mlp_width};
  mc.variant = parse_variant(o.variant);
  mc.dein.attention = mc.attention_enabled();
  return mc;
}

TrainConfig make_train_config(const Options& o) {
  TrainConfig tc;
  tc.lambda_d = o.lambda_d;
  tc.lambda_n = o.lambda_n;
  tc.lr = o.lr;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch;
  tc.variant = parse_variant(o.variant);
  tc.seed = o.seed;
  tc.clip = o.clip;
  tc.patience = o.patience;
  return tc;
}

void echo_config(const Options& o, std::size_t n_records) {
  std::cout << "config: variant=" << o.variant << " lambda_d=" << o.lambda_d
            << " lambda_n=" << o.lambda_n << " lr=" << o.lr << " epochs=" << o.epochs
            << " batch=" << o.batch << " embed_dim=" << o.embed_dim
            << " depth_dein=" << o.depth_dein << " maps=" << o.maps << " seed=" << o.seed
            << " records=" << n_records << "\n";
}

std::vector<std::size_t> parse_index_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoul(tok));
  }
  if (out.empty()) throw std::runtime_error("empty index list '" + text + "'");
  return out;
}

// "a:b:step" or "v1,v2,..."
std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    auto first = text.find(':'), second = text.find(':', first + 1);
    if (second == std::string::npos) throw std::runtime_error("grid must be start:end:step");
    const double a = std::stod(text.substr(0, first));
    const double b = std::stod(text.substr(first + 1, second - first - 1));
    const double s = std::stod(text.substr(second + 1));
    if (s <= 0.0 || b < a) throw std::runtime_error("grid must satisfy start <= end, step > 0");
    for (std::size_t i = 0;; ++i) {
      const double v = a + static_cast<double>(i) * s;
      if (v > b + 1e-9) break;
      out.push_back(v);
    }
  } else {
    std::istringstream in(text);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      if (tok.empty()) continue;
      out.push_back(std::stod(tok));
    }
  }
  if (out.empty()) throw std::runtime_error("empty grid '" + text + "'");
  return out;
}

void write_history(const std::string& path, const TrainResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "epoch\tl1\tld\treg\ttotal\tval_logloss\tval_auc\n";
  for (const EpochStats& e : result.history)
    out << e.epoch << '\t' << fmt(e.loss.l1) << '\t' << fmt(e.loss.ld) << '\t' << fmt(e.loss.reg)
        << '\t' << fmt(e.loss.total) << '\t' << fmt(e.val_logloss) << '\t' << fmt(e.val_auc)
        << '\n';
}

int cmd_train(const Options& o) {
  const FieldSchema schema = load_schema(o.schema_path);
  const auto records = load_dataset(o.data_path, schema, label_mode(o));
  if (records.empty()) throw std::runtime_error(o.data_path + ": no usable records");
  echo_config(o, records.size());

  // deterministic 90/10 train/validation split
  std::vector<std::uint32_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), 0u);
  Rng split_rng(Rng::mix(o.seed, 0x5eed));
  split_rng.shuffle(idx);
  const std::size_t val_n = records.size() / 10;

  std::vector<LabeledRecord> train_records, val_records;
  for (std::size_t i = 0; i < idx.size(); ++i)
    (i < val_n ? val_records : train_records).push_back(records[idx[i]]);

  const Vocabulary vocab = Vocabulary::build(train_records, schema, o.min_freq);
  const auto train_set = encode_dataset(train_records, schema, vocab);
  const auto val_set = encode_dataset(val_records, schema, vocab);

  ModelConfig mc = make_model_config(o);
  mc.field_count = schema.field_count();
  mc.vocab_total = vocab.total_size();
  const TrainConfig tc = make_train_config(o);

  Rng init_rng(Rng::mix(o.seed, 0x1417));
  DexDeepFM model(mc, init_rng);
  std::cout << "parameters: " << model.params().total_parameters() << "\n";

  auto tensor_ptrs = model.params().tensors();
  AdamState adam =
      AdamState::like(std::vector<const Tensor*>(tensor_ptrs.begin(), tensor_ptrs.end()));
  const TrainResult result =
      train(model, train_set, val_set, tc, &adam, 0, [](const EpochStats& e) {
        std::cout << "epoch " << e.epoch << " l1 " << e.loss.l1 << " ld " << e.loss.ld << " total "
                  << e.loss.total << " val_logloss " << e.val_logloss << " val_auc " << e.val_auc
                  << "\n";
      });

  fs::create_directories(o.out);
  const std::string vocab_path = o.out + "/vocab.tsv";
  const std::string history_path = o.out + "/history.tsv";
  const std::string ckpt_path = o.out + "/checkpoint.bin";
  vocab.save(vocab_path, schema);
  write_history(history_path, result);

  Checkpoint ckpt{mc, tc, model.params(), adam, result.epochs_run,
                  compute_schema_digest(o.schema_path, vocab_path)};
  save_checkpoint(ckpt_path, ckpt);
  std::cout << "wrote " << ckpt_path << ", " << history_path << ", " << vocab_path << "\n";
  return 0;
}

int cmd_cv(const Options& o) {
  const FieldSchema schema = load_schema(o.schema_path);
  const auto records = load_dataset(o.data_path, schema, label_mode(o));
  if (records.empty()) throw std::runtime_error(o.data_path + ": no usable records");
  echo_config(o, records.size());

  const FoldPlan plan = make_folds(records.size(), o.folds, o.seed);
  CvConfig cfg;
  cfg.model = make_model_config(o);
  cfg.model.field_count = schema.field_count();
  cfg.model.vocab_total = 1;  // placeholder; per-fold vocabularies set the real value
  cfg.model.validate();
  cfg.train = make_train_config(o);
  cfg.min_freq = o.min_freq;
  cfg.jobs = o.jobs;

  std::ostringstream report;
  if (o.compare.empty()) {
    const MetricsReport rep = cross_validate(records, schema, plan, cfg);
    report << rep.to_text();
  } else {
    const auto comma = o.compare.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("--compare expects 'variantA,variantB'");
    CvConfig ca = cfg, cb = cfg;
    ca.train.variant = parse_variant(o.compare.substr(0, comma));
    cb.train.variant = parse_variant(o.compare.substr(comma + 1));
    MetricsReport ra = cross_validate(records, schema, plan, ca);
    MetricsReport rb = cross_validate(records, schema, plan, cb);
    const VariantComparison cmp = compare_reports(std::move(ra), std::move(rb));
    report << cmp.a.to_text() << cmp.b.to_text() << cmp.to_text();
  }

  fs::create_directories(o.out);
  const std::string path = o.out + "/cv_report.txt";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << report.str();
  std::cout << report.str() << "wrote " << path << "\n";
  return 0;
}

int cmd_sweep(const Options& o) {
  const FieldSchema schema = load_schema(o.schema_path);
  const auto records = load_dataset(o.data_path, schema, label_mode(o));
  if (records.empty()) throw std::runtime_error(o.data_path + ": no usable records");
  if (o.sweep_param != "lambda-d" && o.sweep_param != "maps" && o.sweep_param != "depth-dein")
    throw std::runtime_error("--param must be one of lambda-d|maps|depth-dein");
  const std::vector<double> grid = parse_grid(o.sweep_grid);
  echo_config(o, records.size());

  const FoldPlan plan = make_folds(records.size(), o.folds, o.seed);
  std::ostringstream table;
  table << "param\tvalue\tlogloss_mean\tauc_mean\n";
  for (const double v : grid) {
    Options point = o;
    if (o.sweep_param == "lambda-d") {
      point.lambda_d = v;
    } else {
      if (std::abs(v - std::round(v)) > 1e-9 || v < 1.0)
        throw std::runtime_error("grid value " + fmt(v) + " is not a positive integer");
      if (o.sweep_param == "maps")
        point.maps = static_cast<std::size_t>(std::llround(v));
      else
        point.depth_dein = static_cast<std::size_t>(std::llround(v));
    }
    CvConfig cfg;
    cfg.model = make_model_config(point);
    cfg.model.field_count = schema.field_count();
    cfg.model.vocab_total = 1;
    cfg.model.validate();
    cfg.train = make_train_config(point);
    cfg.min_freq = o.min_freq;
    cfg.jobs = o.jobs;
    const MetricsReport rep = cross_validate(records, schema, plan, cfg);
    table << o.sweep_param << '\t' << fmt(v) << '\t' << fmt(rep.logloss_mean) << '\t'
          << fmt(rep.auc_mean) << '\n';
    std::cout << o.sweep_param << "=" << v << " logloss_mean=" << rep.logloss_mean
              << " auc_mean=" << rep.auc_mean << "\n";
  }

  fs::create_directories(o.out);
  const std::string path = o.out + "/sweep.tsv";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << table.str();
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_gradcheck(const Options& o) {
  const GradCheckSetup setup = make_tiny_setup();
  // the interaction network's weights form the "cin" group
  const std::string corrupt = o.corrupt == "dein" ? "cin" : o.corrupt;
  const ModelGradCheck result = model_gradient_check(setup, 1e-5, o.seed, corrupt);
  for (const auto& g : result.groups)
    std::cout << "group=" << g.name << " max_rel_err=" << fmt(g.max_rel_err)
              << " coords=" << g.coords << "\n";
  const double worst = result.worst();
  std::cout << "worst=" << fmt(worst) << " threshold=0.0001\n";
  if (worst > 1e-4) {
    std::cerr << "gradient check FAILED: " << fmt(worst) << " > 1e-4\n";
    return 1;
  }
  std::cout << "gradient check passed\n";
  return 0;
}

int cmd_gen_data(const Options& o) {
  SyntheticSpec spec;
  spec.field_count = o.gen_m;
  spec.n = o.gen_n;
  spec.noise_rate = o.gen_noise;
  spec.seed = o.seed;
  if (o.gen_rule == "equal_indices")
    spec.rule = SyntheticSpec::Rule::EqualIndices;
  else
    throw std::runtime_error("unknown rule '" + o.gen_rule + "'");
  if (o.gen_cards.empty()) {
    spec.cardinalities.assign(o.gen_m, 10);
  } else {
    for (std::size_t v : parse_index_list(o.gen_cards))
      spec.cardinalities.push_back(static_cast<std::uint32_t>(v));
  }
  const SyntheticData data = generate_synthetic(spec);

  fs::create_directories(o.out);
  const std::string schema_path = o.out + "/schema.tsv";
  const std::string data_path = o.out + "/data.tsv";
  save_schema(schema_path, data.schema);
  save_dataset(data_path, data.records);
  std::cout << "wrote " << data_path << " (" << data.records.size() << " records) and "
            << schema_path << "\n";
  return 0;
}

int cmd_export_maps(const Options& o) {
  const FieldSchema schema = load_schema(o.schema_path);
  const Vocabulary vocab = Vocabulary::load(o.vocab_path, schema);
  const SchemaDigest digest = compute_schema_digest(o.schema_path, o.vocab_path);
  Checkpoint ckpt = load_checkpoint(o.checkpoint_path, digest);

  const auto records = load_dataset(o.data_path, schema, label_mode(o));
  const auto instances = encode_dataset(records, schema, vocab);
  const std::vector<std::size_t> layers = parse_index_list(o.layers);

  const DexDeepFM model(ckpt.model_config, std::move(ckpt.params));
  std::ofstream out(o.out);
  if (!out) throw std::runtime_error("cannot write " + o.out);
  export_feature_maps(model, instances, layers, out);
  std::cout << "wrote " << o.out << " (" << instances.size() << " instances, layers " << o.layers
            << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DexDeepFM-style CTR model: training, evaluation, and diagnostics"};
  app.require_subcommand(1);
  Options o;

  CLI::App* train_cmd =
      app.add_subcommand("train", "Train a model and write checkpoint + history");
  add_common(train_cmd, o, true);
  add_model_flags(train_cmd, o);
  add_train_flags(train_cmd, o);

  CLI::App* cv_cmd = app.add_subcommand("cv", "k-fold cross-validation");
  add_common(cv_cmd, o, true);
  add_model_flags(cv_cmd, o);
  add_train_flags(cv_cmd, o);
  cv_cmd->add_option("--folds", o.folds, "Fold count")->capture_default_str();
  cv_cmd->add_option("--jobs", o.jobs, "Concurrent folds")->capture_default_str();
  cv_cmd->add_option("--compare", o.compare, "Run two variants 'a,b' and report the paired t-test");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Grid sweep of one hyperparameter over CV");
  add_common(sweep_cmd, o, true);
  add_model_flags(sweep_cmd, o);
  add_train_flags(sweep_cmd, o);
  sweep_cmd->add_option("--folds", o.folds, "Fold count")->capture_default_str();
  sweep_cmd->add_option("--jobs", o.jobs, "Concurrent folds")->capture_default_str();
  sweep_cmd->add_option("--param", o.sweep_param, "Swept parameter: lambda-d|maps|depth-dein")
      ->required();
  sweep_cmd->add_option("--grid", o.sweep_grid, "Grid: 'start:end:step' or 'v1,v2,...'")
      ->required();

  CLI::App* gc_cmd = app.add_subcommand(
      "gradcheck", "Finite-difference check of the full-model gradients (tiny config)");
  add_common(gc_cmd, o, false);
  gc_cmd->add_option("--corrupt", o.corrupt,
                     "Test hook: corrupt one group's analytic gradient "
                     "(embedding|linear|cin|attention|mlp|output)");

  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a planted-interaction dataset");
  add_common(gen_cmd, o, false);
  gen_cmd->add_option("--n", o.gen_n, "Record count")->capture_default_str();
  gen_cmd->add_option("--m", o.gen_m, "Field count")->capture_default_str();
  gen_cmd->add_option("--cards", o.gen_cards,
                      "Per-field cardinalities 'c0,c1,...' (default 10 each)");
  gen_cmd->add_option("--noise", o.gen_noise, "Label flip probability in [0,1)")
      ->capture_default_str();
  gen_cmd->add_option("--rule", o.gen_rule, "Planted rule")->capture_default_str();

  CLI::App* exp_cmd = app.add_subcommand("export-maps", "Export hidden-layer feature maps");
  add_common(exp_cmd, o, true);
  exp_cmd->add_option("--checkpoint", o.checkpoint_path, "Checkpoint file")->required();
  exp_cmd->add_option("--vocab", o.vocab_path, "Vocabulary file")->required();
  exp_cmd->add_option("--layers", o.layers, "Comma-separated 1-based hidden layers")
      ->capture_default_str();
  exp_cmd->add_flag("--rating-labels", o.rating_labels,
                    "First column is a 1..5 rating: drop 3s, binarize at 3");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train_cmd->parsed()) {
      apply_config_file(train_cmd, o);
      return cmd_train(o);
    }
    if (cv_cmd->parsed()) {
      apply_config_file(cv_cmd, o);
      return cmd_cv(o);
    }
    if (sweep_cmd->parsed()) {
      apply_config_file(sweep_cmd, o);
      return cmd_sweep(o);
    }
    if (gc_cmd->parsed()) {
      apply_config_file(gc_cmd, o);
      return cmd_gradcheck(o);
    }
    if (gen_cmd->parsed()) {
      apply_config_file(gen_cmd, o);
      return cmd_gen_data(o);
    }
    if (exp_cmd->parsed()) {
      apply_config_file(exp_cmd, o);
      return cmd_export_maps(o);
    }
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
