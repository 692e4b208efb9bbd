#include "pdgsim/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "pdgsim/datagen.hpp"
#include "pdgsim/errors.hpp"
#include "pdgsim/gradcheck.hpp"

namespace pdgsim {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

int parse_positive(const std::string& key, const std::string& v) {
  const long long n = parse_int(key, v);
  if (n < 0 || n > 1'000'000) throw ConfigError(key + ": out of range: " + v);
  return static_cast<int>(n);
}

std::uint64_t parse_seed(const std::string& key, const std::string& v) {
  const long long n = parse_int(key, v);
  if (n < 0) throw ConfigError(key + ": seed must be non-negative");
  return static_cast<std::uint64_t>(n);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size() || !std::isfinite(out))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

struct Setting {
  std::function<void(CliConfig&, const std::string&)> set;
  std::function<std::string(const CliConfig&)> get;
};

#define INT_SETTING(key, field)                                                      \
  {key, Setting{[](CliConfig& c, const std::string& v) { c.field = parse_positive(key, v); }, \
                [](const CliConfig& c) { return std::to_string(c.field); }}}
#define DOUBLE_SETTING(key, field)                                                   \
  {key, Setting{[](CliConfig& c, const std::string& v) { c.field = parse_double(key, v); }, \
                [](const CliConfig& c) { return fmt(c.field); }}}
#define BOOL_SETTING(key, field)                                                     \
  {key, Setting{[](CliConfig& c, const std::string& v) { c.field = parse_bool(key, v); }, \
                [](const CliConfig& c) { return std::string(c.field ? "true" : "false"); }}}

const std::map<std::string, Setting>& settings() {
  static const std::map<std::string, Setting> table = {
      DOUBLE_SETTING("learning_rate", train.learning_rate),
      INT_SETTING("batch_size", train.batch_size),
      INT_SETTING("epochs", train.epochs),
      {"seed", Setting{[](CliConfig& c, const std::string& v) { c.train.seed = parse_seed("seed", v); },
                       [](const CliConfig& c) { return std::to_string(c.train.seed); }}},
      DOUBLE_SETTING("adam_beta1", train.beta1),
      DOUBLE_SETTING("adam_beta2", train.beta2),
      DOUBLE_SETTING("adam_eps", train.eps),
      {"threshold_grid",
       Setting{[](CliConfig& c, const std::string& v) {
                 std::vector<double> grid;
                 std::stringstream ss(v);
                 std::string item;
                 while (std::getline(ss, item, ',')) grid.push_back(parse_double("threshold_grid", trim(item)));
                 c.train.grid = grid;
               },
               [](const CliConfig& c) {
                 std::string s;
                 for (std::size_t i = 0; i < c.train.grid.size(); ++i)
                   s += (i ? "," : "") + fmt(c.train.grid[i]);
                 return s;
               }}},
      INT_SETTING("early_stop_patience", train.early_stop_patience),
      INT_SETTING("d_hidden", model.d_hidden),
      INT_SETTING("heads_block1", model.heads_block1),
      INT_SETTING("head_dim_block1", model.head_dim_block1),
      INT_SETTING("heads_block2", model.heads_block2),
      INT_SETTING("out_dim_block2", model.out_dim_block2),
      INT_SETTING("lstm_hidden", model.lstm_hidden),
      INT_SETTING("rounds", model.rounds),
      INT_SETTING("graph_dim", model.graph_dim),
      INT_SETTING("classifier_hidden", model.classifier_hidden),
      {"variant",
       Setting{[](CliConfig& c, const std::string& v) { c.model.variant = parse_variant(v); },
               [](const CliConfig& c) { return variant_name(c.model.variant); }}},
      BOOL_SETTING("no_lstm", model.no_lstm),
      BOOL_SETTING("no_jk", model.no_jk),
      {"pool", Setting{[](CliConfig& c, const std::string& v) { c.model.pool = parse_pool(v); },
                       [](const CliConfig& c) { return pool_name(c.model.pool); }}},
      DOUBLE_SETTING("leaky_slope", model.leaky_slope),
      BOOL_SETTING("symmetrize", model.symmetrize),
  };
  return table;
}

#undef INT_SETTING
#undef DOUBLE_SETTING
#undef BOOL_SETTING

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out || !(out << text)) throw IoError("cannot write " + p.string());
}

std::string metric(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void print_report(std::ostream& out, const std::string& split, const EvalReport& r, std::size_t n) {
  out << split << " n=" << n << " precision=" << metric(r.precision)
      << " recall=" << metric(r.recall) << " f1=" << metric(r.f1) << " auc=" << metric(r.auc)
      << " threshold=" << metric(r.threshold) << "\n";
}

void log_config(std::ostream& err, const std::string& text) {
  err << "# resolved config\n" << text;
}

// Flags that override the config file when given.
struct ModelFlags {
  std::string variant;
  bool no_lstm = false;
  bool no_jk = false;
  std::string pool;
  int heads1 = 0;
  int heads2 = 0;
};

std::uint64_t default_seed() { return env_seed().value_or(0); }

}  // namespace

void apply_config_entry(CliConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = settings();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown key '" + key + "'");
  try {
    it->second.set(cfg, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key + ": " + e.message());
  }
}

void apply_config_text(CliConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    try {
      apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.message());
    }
  }
}

std::string format_config(const CliConfig& cfg) {
  std::string out;
  for (const auto& [key, s] : settings()) out += key + "=" + s.get(cfg) + "\n";
  return out;
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("PDGSIM_SEED");
  if (!v || !*v) return std::nullopt;
  return parse_seed("PDGSIM_SEED", v);
}

DatasetSplit load_dataset(const fs::path& dir) {
  DatasetSplit data;
  for (const auto& e : read_corpus(dir)) {
    PairExample ex = make_example(e.id, e.pair.source_a, e.pair.source_b, e.pair.label);
    switch (e.split) {
      case Split::Train: data.train.push_back(std::move(ex)); break;
      case Split::Val: data.val.push_back(std::move(ex)); break;
      case Split::Test: data.test.push_back(std::move(ex)); break;
    }
  }
  return data;
}

std::string attention_json(const Pdg& pdg, const Model& model) {
  const GraphTensors g = make_graph_tensors(pdg);
  AttentionTrace trace;
  final_node_features(g, model, &trace);

  // Mean over rounds and heads of alpha(dst, src) for one branch.
  auto mean_of = [&](const std::vector<std::vector<Matrix>>& rounds, int src, int dst) {
    double sum = 0.0;
    int count = 0;
    for (const auto& heads : rounds)
      for (const auto& alpha : heads) {
        sum += alpha(dst, src);
        ++count;
      }
    return count ? sum / count : 0.0;
  };
  auto branch_index = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t b = 0; b < trace.branches.size(); ++b)
      if (trace.branches[b] == name) return b;
    return std::nullopt;
  };
  // Edges of a kind read the branch that carries them (EU has one branch for
  // everything); self-loops average over every branch.
  auto attn = [&](const std::string& kind, int src, int dst) {
    std::vector<std::size_t> branches;
    if (auto u = branch_index("unified")) {
      branches.push_back(*u);
    } else if (kind == "self") {
      for (std::size_t b = 0; b < trace.branches.size(); ++b) branches.push_back(b);
    } else {
      branches.push_back(*branch_index(kind));
    }
    double b1 = 0.0, b2 = 0.0;
    for (auto b : branches) {
      b1 += mean_of(trace.block1[b], src, dst);
      b2 += mean_of(trace.block2[b], src, dst);
    }
    const double n = static_cast<double>(branches.size());
    return std::pair{b1 / n, b2 / n};
  };

  std::set<std::tuple<int, int, std::string>> edges;
  for (const auto& [s, d] : pdg.control_edges) edges.insert({s, d, "control"});
  for (const auto& [s, d, var] : pdg.data_edges) edges.insert({s, d, "data"});
  for (int v = 0; v < pdg.size(); ++v) edges.insert({v, v, "self"});

  json list = json::array();
  for (const auto& [s, d, kind] : edges) {
    const auto [b1, b2] = attn(kind, s, d);
    list.push_back(json{{"src", s}, {"dst", d}, {"kind", kind}, {"attn_block1", b1},
                        {"attn_block2", b2}});
  }
  return json{{"edges", list}}.dump(2) + "\n";
}

namespace {

int cmd_pdg(const std::string& file, const std::string& out_path, const std::string& dot_path,
            std::ostream& out) {
  const Pdg pdg = build_pdg(lower_source(read_text(file)));
  const std::string text = serialize_pdg(pdg);
  if (out_path.empty()) out << text;
  else write_text(out_path, text);
  if (!dot_path.empty()) write_text(dot_path, pdg_to_dot(pdg, fs::path(file).stem().string()));
  return kExitOk;
}

int cmd_dataset_gen(const std::string& seeds_dir, const std::string& out_dir, int pairs,
                    std::uint64_t seed, std::ostream& out, std::ostream& err) {
  log_config(err, "out=" + out_dir + "\npairs=" + std::to_string(pairs) + "\nseed=" +
                      std::to_string(seed) + "\nseeds=" + (seeds_dir.empty() ? "builtin" : seeds_dir) +
                      "\n");
  const auto groups = seeds_dir.empty() ? builtin_seed_groups() : load_seed_groups(seeds_dir);
  const auto entries = make_corpus(generate_dataset(groups, pairs, seed), seed);
  fs::create_directories(out_dir);
  write_corpus(out_dir, entries, seed);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& e : entries) ++counts[static_cast<int>(e.split)];
  out << "wrote " << entries.size() << " pairs to " << out_dir << " (train=" << counts[0]
      << " val=" << counts[1] << " test=" << counts[2] << ")\n";
  return kExitOk;
}

int cmd_train(const CliConfig& cfg, const std::string& data_dir, const std::string& model_out,
              const std::string& history_out, std::ostream& out, std::ostream& err) {
  log_config(err, "data=" + data_dir + "\nout=" + model_out + "\n" + format_config(cfg));
  cfg.model.validate();
  cfg.train.validate();
  const DatasetSplit data = load_dataset(data_dir);
  err << "train=" << data.train.size() << " val=" << data.val.size()
      << " test=" << data.test.size() << "\n";
  TrainResult result = train(data, cfg.train, cfg.model, [&](const EpochRecord& r) {
    err << "epoch " << r.epoch << " loss=" << metric(r.loss) << " val_f1=" << metric(r.val_f1)
        << "\n";
  });
  write_text(model_out, serialize_model(result.model, result.threshold));
  if (!history_out.empty()) write_text(history_out, history_csv(result.history));

  print_report(out, "val", evaluate(predict(result.model, data.val), labels_of(data.val), result.threshold),
               data.val.size());
  if (!data.test.empty())
    print_report(out, "test",
                 evaluate(predict(result.model, data.test), labels_of(data.test), result.threshold),
                 data.test.size());
  return kExitOk;
}

bool is_training_key(const std::string& key) {
  return key == "learning_rate" || key == "batch_size" || key == "epochs" || key == "seed" ||
         key.rfind("adam_", 0) == 0 || key == "threshold_grid" || key == "early_stop_patience";
}

std::pair<Model, double> load_model(const std::string& path, std::ostream& err) {
  auto loaded = deserialize_model(read_text(path));
  CliConfig view;
  view.model = loaded.first.config();
  std::string text = "model=" + path + "\nthreshold=" + fmt(loaded.second) + "\n";
  for (const auto& [key, s] : settings())
    if (!is_training_key(key)) text += key + "=" + s.get(view) + "\n";
  log_config(err, text);
  return loaded;
}

int cmd_eval(const std::string& model_path, const std::string& data_dir, const std::string& split,
             const std::string& roc_out, std::ostream& out, std::ostream& err) {
  auto [model, threshold] = load_model(model_path, err);
  const DatasetSplit data = load_dataset(data_dir);
  std::vector<PairExample> chosen;
  auto take = [&](const std::vector<PairExample>& v) {
    for (const auto& e : v) chosen.push_back({e.id, e.a, e.b, e.label});
  };
  if (split == "all") {
    take(data.train);
    take(data.val);
    take(data.test);
  } else {
    switch (parse_split(split)) {
      case Split::Train: take(data.train); break;
      case Split::Val: take(data.val); break;
      case Split::Test: take(data.test); break;
    }
  }
  if (chosen.empty()) throw EmptyDataset("split '" + split + "' has no pairs");
  const auto scores = predict(model, chosen);
  const auto labels = labels_of(chosen);
  print_report(out, split, evaluate(scores, labels, threshold), chosen.size());
  if (!roc_out.empty()) write_text(roc_out, roc_csv(roc_curve(scores, labels)));
  return kExitOk;
}

int cmd_detect(const std::string& model_path, const std::string& a, const std::string& b,
               std::ostream& out, std::ostream& err) {
  auto [model, threshold] = load_model(model_path, err);
  const GraphTensors ga = make_graph_tensors(build_pdg(lower_source(read_text(a))));
  const GraphTensors gb = make_graph_tensors(build_pdg(lower_source(read_text(b))));
  const double score = pair_score(ga, gb, model).scalar();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", score);
  out << "score=" << buf << " threshold=" << metric(threshold)
      << " verdict=" << (score >= threshold ? "clone" : "non-clone") << "\n";
  return kExitOk;
}

int cmd_attn(const std::string& model_path, const std::string& file, const std::string& out_path,
             std::ostream& out, std::ostream& err) {
  auto [model, threshold] = load_model(model_path, err);
  const std::string text = attention_json(build_pdg(lower_source(read_text(file))), model);
  if (out_path.empty()) out << text;
  else write_text(out_path, text);
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, bool sabotage, std::ostream& out, std::ostream& err) {
  log_config(err, "seed=" + std::to_string(seed) + "\nstep=" + fmt(kGradcheckStep) +
                      "\ntolerance=" + fmt(kGradcheckTolerance) + "\n");
  const auto lines = run_gradchecks(seed, sabotage);
  for (const auto& l : lines) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-18s max_rel_err=%.3e entries=%zu skipped=%zu %s\n",
                  l.name.c_str(), l.max_relative_error, l.entries, l.skipped,
                  l.max_relative_error < kGradcheckTolerance ? "ok" : "FAIL");
    out << buf;
  }
  const bool pass = gradchecks_pass(lines);
  out << (pass ? "gradcheck passed" : "gradcheck FAILED") << "\n";
  return pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semantic code clone detection over program dependence graphs", "pdgsim"};
  app.require_subcommand(1);

  std::string pdg_file, pdg_out, pdg_dot;
  auto* pdg = app.add_subcommand("pdg", "Build the PDG of a source file");
  pdg->add_option("file", pdg_file, "Source file")->required();
  pdg->add_option("--out", pdg_out, "Write canonical JSON here instead of stdout");
  pdg->add_option("--dot", pdg_dot, "Also write a DOT rendering");

  std::string gen_seeds, gen_out;
  int gen_pairs = 200;
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("dataset-gen", "Generate a labeled clone corpus");
  gen->add_option("--seeds", gen_seeds, "Seed program directory (default: built-in groups)");
  gen->add_option("--out", gen_out, "Output corpus directory")->required();
  gen->add_option("--pairs", gen_pairs, "Number of pairs")->check(CLI::Range(2, 1000000));
  gen->add_option("--seed", gen_seed, "Generation seed (default: PDGSIM_SEED or 0)");

  std::string tr_data, tr_config, tr_out, tr_history;
  ModelFlags flags;
  std::optional<std::uint64_t> tr_seed;
  auto* tr = app.add_subcommand("train", "Train a model on a corpus");
  tr->add_option("--data", tr_data, "Corpus directory")->required();
  tr->add_option("--config", tr_config, "key=value config file");
  tr->add_option("--out", tr_out, "Model file to write")->required();
  tr->add_option("--history", tr_history, "Write per-epoch history CSV");
  tr->add_option("--variant", flags.variant, "eu or ea")->check(CLI::IsMember({"eu", "ea"}));
  tr->add_flag("--no-lstm", flags.no_lstm, "Replace the gated update with a linear map");
  tr->add_flag("--no-jk", flags.no_jk, "Use only the last round's node features");
  tr->add_option("--pool", flags.pool, "soft or gap")->check(CLI::IsMember({"soft", "gap"}));
  tr->add_option("--heads1", flags.heads1, "Heads in the first attention block")
      ->check(CLI::Range(1, 1024));
  tr->add_option("--heads2", flags.heads2, "Heads in the second attention block")
      ->check(CLI::Range(1, 1024));
  tr->add_option("--seed", tr_seed, "Training seed (default: PDGSIM_SEED or 0)");

  std::string ev_model, ev_data, ev_roc, ev_split = "test";
  auto* ev = app.add_subcommand("eval", "Evaluate a model on a corpus split");
  ev->add_option("--model", ev_model, "Model file")->required();
  ev->add_option("--data", ev_data, "Corpus directory")->required();
  ev->add_option("--split", ev_split, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}));
  ev->add_option("--roc", ev_roc, "Write ROC points as CSV");

  std::string det_model;
  std::vector<std::string> det_files;
  auto* det = app.add_subcommand("detect", "Score a pair of source files");
  det->add_option("--model", det_model, "Model file")->required();
  det->add_option("files", det_files, "Two source files")->required()->expected(2);

  std::string at_model, at_file, at_out;
  auto* at = app.add_subcommand("attn", "Export per-edge attention of a source file");
  at->add_option("--model", at_model, "Model file")->required();
  at->add_option("file", at_file, "Source file")->required();
  at->add_option("--out", at_out, "Write JSON here instead of stdout");

  std::optional<std::uint64_t> gc_seed;
  bool gc_sabotage = false;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every layer");
  gc->add_option("--seed", gc_seed, "Seed (default: PDGSIM_SEED or 0)");
  gc->add_flag("--sabotage", gc_sabotage, "Corrupt the reverse pass on purpose")
      ->group("");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    for (auto* sub : app.get_subcommands())
      if (sub->parsed()) {
        err << sub->help();
        return kExitUsage;
      }
    err << app.help();
    return kExitUsage;
  }

  try {
    if (pdg->parsed()) return cmd_pdg(pdg_file, pdg_out, pdg_dot, out);
    if (gen->parsed())
      return cmd_dataset_gen(gen_seeds, gen_out, gen_pairs, gen_seed.value_or(default_seed()), out,
                             err);
    if (tr->parsed()) {
      CliConfig cfg;
      cfg.train.seed = default_seed();
      if (!tr_config.empty()) apply_config_text(cfg, read_text(tr_config));
      if (!flags.variant.empty()) cfg.model.variant = parse_variant(flags.variant);
      if (flags.no_lstm) cfg.model.no_lstm = true;
      if (flags.no_jk) cfg.model.no_jk = true;
      if (!flags.pool.empty()) cfg.model.pool = parse_pool(flags.pool);
      if (flags.heads1 > 0) cfg.model.heads_block1 = flags.heads1;
      if (flags.heads2 > 0) cfg.model.heads_block2 = flags.heads2;
      if (tr_seed) cfg.train.seed = *tr_seed;
      return cmd_train(cfg, tr_data, tr_out, tr_history, out, err);
    }
    if (ev->parsed()) return cmd_eval(ev_model, ev_data, ev_split, ev_roc, out, err);
    if (det->parsed()) return cmd_detect(det_model, det_files[0], det_files[1], out, err);
    if (at->parsed()) return cmd_attn(at_model, at_file, at_out, out, err);
    if (gc->parsed())
      return cmd_gradcheck(gc_seed.value_or(default_seed()), gc_sabotage, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace pdgsim
