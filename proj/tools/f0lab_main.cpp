#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "CLI11.hpp"
#include "f0lab/cart.hpp"
#include "f0lab/contour.hpp"
#include "f0lab/corpus.hpp"
#include "f0lab/error.hpp"
#include "f0lab/eval.hpp"
#include "f0lab/neural.hpp"
#include "f0lab/text_io.hpp"

namespace {

using namespace f0lab;

constexpr const char* kExitCodes =
    "exit codes: 0 success, 2 invalid configuration, 3 file unavailable, "
    "4 malformed file, 5 schema or alignment mismatch, 6 numeric failure";

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config_path,
                  "config file with one key=value pair per line "
                  "('#' starts a comment)");
  cmd->add_option("--set", c.sets,
                  "override a config entry, key=value (repeatable; "
                  "explicit flags win over --set, --set wins over --config)");
  cmd->footer(kExitCodes);
}

// key=value map assembled from the config file plus --set overrides.
std::map<std::string, std::string> load_config(const CommonOpts& c) {
  std::map<std::string, std::string> kv;
  if (!c.config_path.empty()) {
    std::ifstream in = textio::open_input(c.config_path);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      std::string entry = trim(line);
      if (entry.empty()) continue;
      std::size_t eq = entry.find('=');
      require(eq != std::string::npos && eq > 0, ErrorCode::parse,
              c.config_path, ":", lineno, ": expected key=value, got '",
              entry, "'");
      kv[trim(entry.substr(0, eq))] = trim(entry.substr(eq + 1));
    }
  }
  for (const std::string& s : c.sets) {
    std::size_t eq = s.find('=');
    require(eq != std::string::npos && eq > 0, ErrorCode::invalid_config,
            "--set expects key=value, got '", s, "'");
    kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
  }
  return kv;
}

template <typename T>
void assign_from_string(const std::string& key, const std::string& s,
                        T& var) {
  if constexpr (std::is_same_v<T, std::string>) {
    var = s;
  } else {
    try {
      std::size_t pos = 0;
      if constexpr (std::is_same_v<T, double>) {
        var = std::stod(s, &pos);
      } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        var = std::stoull(s, &pos);
      } else {
        long long v = std::stoll(s, &pos);
        var = static_cast<T>(v);
      }
      if (pos != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      raise(ErrorCode::invalid_config, "config key '", key,
            "': cannot parse value '", s, "'");
    }
  }
}

// Ties each config key to a CLI flag of the same name. Values from the
// config map fill in whatever the command line left untouched; unknown
// keys are rejected.
class Bindings {
 public:
  explicit Bindings(CLI::App* cmd) : cmd_(cmd) {}

  template <typename T>
  void add(const std::string& key, T& var, const std::string& help) {
    CLI::Option* opt = cmd_->add_option("--" + key, var, help);
    items_.push_back(
        {key, opt, [&var, key](const std::string& s) {
           assign_from_string(key, s, var);
         }});
  }

  void apply(const std::map<std::string, std::string>& kv) const {
    std::set<std::string> known;
    for (const Item& item : items_) {
      known.insert(item.key);
      auto it = kv.find(item.key);
      if (it != kv.end() && item.opt->count() == 0) item.set(it->second);
    }
    for (const auto& [key, value] : kv)
      require(known.count(key) > 0, ErrorCode::invalid_config,
              "unknown config key '", key, "'");
  }

 private:
  struct Item {
    std::string key;
    CLI::Option* opt;
    std::function<void(const std::string&)> set;
  };
  CLI::App* cmd_;
  std::vector<Item> items_;
};

void require_path(const std::string& value, const char* cmd, const char* key) {
  require(!value.empty(), ErrorCode::invalid_config, cmd,
          ": missing required path '", key, "' (flag --", key,
          " or config key ", key, ")");
}

std::string model_magic(const std::string& path) {
  std::ifstream in = textio::open_input(path);
  std::string tok;
  require(static_cast<bool>(in >> tok), ErrorCode::parse, path,
          ": empty model file");
  return tok;
}

void write_contour_rows(std::ostream& out, const corpus::Corpus& corpus,
                        const std::vector<std::vector<corpus::Contour>>& rows) {
  for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
    const corpus::UtteranceRecord& utt = corpus.utterances[u];
    for (std::size_t s = 0; s < utt.syllables.size(); ++s) {
      out << utt.id << "," << s;
      for (double v : rows[u][s]) out << "," << textio::format_double(v);
      out << "\n";
    }
  }
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

// Prediction rows must follow the truth corpus: grouped by utterance in
// corpus order, syllable indices ascending from 0.
std::vector<std::vector<corpus::Contour>> read_contour_rows(
    const std::string& path, const corpus::Corpus& truth) {
  std::ifstream in = textio::open_input(path);
  std::string line;
  long lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!trim(line).empty()) return true;
    }
    return false;
  };
  auto parse_double = [&](const std::string& s) -> double {
    try {
      std::size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      raise(ErrorCode::parse, path, ":", lineno, ": bad f0 value '", s, "'");
    }
  };
  std::vector<std::vector<corpus::Contour>> rows;
  rows.reserve(truth.utterances.size());
  for (const corpus::UtteranceRecord& utt : truth.utterances) {
    std::vector<corpus::Contour> per_syl(utt.syllables.size());
    for (std::size_t s = 0; s < utt.syllables.size(); ++s) {
      require(next_line(), ErrorCode::mismatch, path,
              ": predictions end before utterance '", utt.id, "' syllable ",
              s);
      std::vector<std::string> fields = split_fields(trim(line));
      require(fields.size() == 2 + corpus::kContourPoints, ErrorCode::parse,
              path, ":", lineno, ": expected 12 comma-separated fields, got ",
              fields.size());
      require(fields[0] == utt.id &&
                  fields[1] == std::to_string(s),
              ErrorCode::mismatch, path, ":", lineno, ": row is for '",
              fields[0], "' syllable ", fields[1], ", expected '", utt.id,
              "' syllable ", s);
      for (int k = 0; k < corpus::kContourPoints; ++k)
        per_syl[s][k] = parse_double(fields[2 + k]);
    }
    rows.push_back(std::move(per_syl));
  }
  require(!next_line(), ErrorCode::mismatch, path, ":", lineno,
          ": trailing prediction rows after the last utterance");
  return rows;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void setup_gen_data(CLI::App& app) {
  struct Opts {
    CommonOpts common;
    corpus::SynthConfig cfg;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* cmd =
      app.add_subcommand("gen-data", "generate a synthetic tone corpus");
  add_common(cmd, o->common);
  auto b = std::make_shared<Bindings>(cmd);
  b->add("n_utterances", o->cfg.n_utterances, "number of utterances");
  b->add("tone_count", o->cfg.tone_count, "lexical tone count, 4 or 6");
  b->add("syl_min", o->cfg.syllables_per_utterance.lo,
         "minimum syllables per utterance");
  b->add("syl_max", o->cfg.syllables_per_utterance.hi,
         "maximum syllables per utterance");
  b->add("phrase_min", o->cfg.phrases_per_utterance.lo,
         "minimum phrases per utterance");
  b->add("phrase_max", o->cfg.phrases_per_utterance.hi,
         "maximum phrases per utterance");
  b->add("speaker_mean_hz", o->cfg.speaker_mean_hz, "speaker mean f0");
  b->add("speaker_range_hz", o->cfg.speaker_range_hz, "speaker f0 range");
  b->add("declination_slope", o->cfg.declination_slope,
         "Hz per syllable within a phrase");
  b->add("emphasis_probability", o->cfg.emphasis_probability,
         "chance a word is emphasized");
  b->add("noise_std_hz", o->cfg.noise_std_hz, "per-point noise sigma");
  b->add("seed", o->cfg.seed, "generator seed");
  b->add("out", o->out, "output corpus file");
  cmd->callback([o, b] {
    b->apply(load_config(o->common));
    require_path(o->out, "gen-data", "out");
    o->cfg.validate();
    corpus::save_corpus(corpus::generate_synthetic(o->cfg), o->out);
  });
}

void setup_split(CLI::App& app) {
  struct Opts {
    CommonOpts common;
    std::string in, out_train, out_val, out_test;
    corpus::SplitRatios ratios;
    std::uint64_t seed = 1;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* cmd = app.add_subcommand(
      "split", "partition a corpus into train/val/test by utterance");
  add_common(cmd, o->common);
  auto b = std::make_shared<Bindings>(cmd);
  b->add("in", o->in, "input corpus file");
  b->add("train_ratio", o->ratios.train, "train share");
  b->add("val_ratio", o->ratios.val, "validation share");
  b->add("test_ratio", o->ratios.test, "test share");
  b->add("seed", o->seed, "shuffle seed");
  b->add("out_train", o->out_train, "output train corpus");
  b->add("out_val", o->out_val, "output validation corpus");
  b->add("out_test", o->out_test, "output test corpus");
  cmd->callback([o, b] {
    b->apply(load_config(o->common));
    require_path(o->in, "split", "in");
    require_path(o->out_train, "split", "out_train");
    require_path(o->out_val, "split", "out_val");
    require_path(o->out_test, "split", "out_test");
    corpus::Corpus c = corpus::load_corpus(o->in);
    auto [tr, va, te] = corpus::split_corpus(c, o->ratios, o->seed);
    corpus::save_corpus(tr, o->out_train);
    corpus::save_corpus(va, o->out_val);
    corpus::save_corpus(te, o->out_test);
  });
}

struct TreeOpts {
  CommonOpts common;
  std::string train, out;
  std::string arch = "sindt";
  std::string base = "orif0";
  int dct_k = 5;
  std::string delta = "none";
  int min_leaf = 10;
  int max_depth = 0;
};

void add_tree_options(Bindings& b, TreeOpts& o) {
  b.add("train", o.train, "training corpus file");
  b.add("arch", o.arch,
        "tree architecture: sindt, tonedt, pslevel or scalardt");
  b.add("base", o.base, "target representation: orif0, dct or shapems");
  b.add("dct_k", o.dct_k, "coefficient count for the dct representation");
  b.add("delta", o.delta, "delta targets: none, in or cross");
  b.add("min_leaf", o.min_leaf, "minimum samples per leaf");
  b.add("max_depth", o.max_depth, "depth limit, 0 = unbounded");
  b.add("out", o.out, "output model file");
}

cart::ArchitectureSpec tree_spec(const TreeOpts& o) {
  cart::ArchitectureSpec spec;
  spec.kind = cart::arch_from_name(o.arch);
  spec.representation.base = contour::base_from_name(o.base);
  spec.representation.dct_k = o.dct_k;
  spec.representation.delta = contour::delta_from_name(o.delta);
  spec.validate();
  return spec;
}

cart::TreeConfig tree_config(const TreeOpts& o) {
  cart::TreeConfig tc;
  tc.min_leaf = o.min_leaf;
  tc.max_depth = o.max_depth;
  return tc;
}

void setup_train_dt(CLI::App& app) {
  auto o = std::make_shared<TreeOpts>();
  CLI::App* cmd =
      app.add_subcommand("train-dt", "train a single regression tree model");
  add_common(cmd, o->common);
  auto b = std::make_shared<Bindings>(cmd);
  add_tree_options(*b, *o);
  cmd->callback([o, b] {
    b->apply(load_config(o->common));
    require_path(o->train, "train-dt", "train");
    require_path(o->out, "train-dt", "out");
    cart::DTModel model = cart::train_dt_model(
        tree_spec(*o), corpus::load_corpus(o->train), tree_config(*o));
    cart::save_dt_model(model, o->out);
  });
}

void setup_train_forest(CLI::App& app) {
  struct Opts : TreeOpts {
    int n_trees = 20;
    double feature_ignore_fraction = 0.3;
    double output_ignore_fraction = 0.3;
    std::uint64_t seed = 1;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* cmd =
      app.add_subcommand("train-forest", "train a random forest of trees");
  add_common(cmd, o->common);
  auto b = std::make_shared<Bindings>(cmd);
  add_tree_options(*b, *o);
  b->add("n_trees", o->n_trees, "forest size");
  b->add("feature_ignore_fraction", o->feature_ignore_fraction,
         "share of features hidden from each member");
  b->add("output_ignore_fraction", o->output_ignore_fraction,
         "share of target dimensions hidden from each member");
  b->add("seed", o->seed, "mask-drawing seed");
  cmd->callback([o, b] {
    b->apply(load_config(o->common));
    require_path(o->train, "train-forest", "train");
    require_path(o->out, "train-forest", "out");
    cart::ForestConfig fc;
    fc.n_trees = o->n_trees;
    fc.feature_ignore_fraction = o->feature_ignore_fraction;
    fc.output_ignore_fraction = o->output_ignore_fraction;
    fc.seed = o->seed;
    fc.tree = tree_config(*o);
    cart::ForestModel forest = cart::train_forest(
        tree_spec(*o), corpus::load_corpus(o->train), fc);
    cart::save_forest(forest, o->out);
  });
}

void setup_train_nn(CLI::App& app) {
  struct Opts {
    CommonOpts common;
    std::string kind = "additive";
    std::string train, val, out;
    neural::TrainConfig cfg;
    std::string delta = "none";
  };
  auto o = std::make_shared<Opts>();
  CLI::App* cmd = app.add_subcommand(
      "train-nn", "train a neural contour model (mlp, lstm, blstm, additive)");
  add_common(cmd, o->common);
  auto b = std::make_shared<Bindings>(cmd);
  b->add("kind", o->kind, "network kind: mlp, lstm, blstm or additive");
  b->add("train", o->train, "training corpus file");
  b->add("val", o->val, "validation corpus file (optional)");
  b->add("learning_rate", o->cfg.learning_rate, "optimizer step size");
  b->add("epochs", o->cfg.epochs, "maximum training epochs");
  b->add("clip_norm", o->cfg.clip_norm, "global gradient norm cap, 0 = off");
  b->add("patience", o->cfg.patience,
         "epochs without validation improvement before stopping");
  b->add("delta", o->delta, "delta loss terms: none, in or cross");
  b->add("seed", o->cfg.seed, "initialization and shuffling seed");
  b->add("blstm_hidden", o->cfg.blstm_hidden, "recurrent units per direction");
  b->add("mlp_hidden1", o->cfg.mlp_hidden1, "first dense hidden width");
  b->add("mlp_hidden2", o->cfg.mlp_hidden2, "second dense hidden width");
  b->add("emb_dim", o->cfg.emb_dim, "embedding dimension");
  b->add("out", o->out, "output model file");
  cmd->callback([o, b] {
    b->apply(load_config(o->common));
    require_path(o->train, "train-nn", "train");
    require_path(o->out, "train-nn", "out");
    o->cfg.delta = contour::delta_from_name(o->delta);
    neural::NetKind kind = neural::net_from_name(o->kind);
    corpus::Corpus train = corpus::load_corpus(o->train);
    corpus::Corpus val;
    if (!o->val.empty()) val = corpus::load_corpus(o->val);
    neural::NeuralModel model =
        kind == neural::NetKind::additive
            ? neural::make_additive(train, o->cfg)
            : neural::make_baseline(kind, train, o->cfg);
    neural::train(model, train, val, o->cfg);
    neural::save_neural(model, o->out);
  });
}

std::vector<std::vector<corpus::Contour>> predict_with_model(
    const std::string& model_path, const corpus::Corpus& eval_corpus) {
  std::string magic = model_magic(model_path);
  std::vector<std::vector<corpus::Contour>> rows;
  rows.reserve(eval_corpus.utterances.size());
  if (magic == "F0LAB-NN") {
    neural::NeuralModel model = neural::load_neural(model_path);
    require(model.schema == eval_corpus.schema, ErrorCode::mismatch,
            model_path, ": model schema differs from the corpus schema");
    for (const corpus::UtteranceRecord& utt : eval_corpus.utterances)
      rows.push_back(neural::predict_neural(model, utt));
  } else if (magic == "F0LAB-DT") {
    if (cart::model_file_is_forest(model_path)) {
      cart::ForestModel forest = cart::load_forest(model_path);
      require(forest.schema == eval_corpus.schema, ErrorCode::mismatch,
              model_path, ": model schema differs from the corpus schema");
      for (const corpus::UtteranceRecord& utt : eval_corpus.utterances)
        rows.push_back(cart::predict_forest(forest, utt));
    } else {
      cart::DTModel model = cart::load_dt_model(model_path);
      require(model.schema == eval_corpus.schema, ErrorCode::mismatch,
              model_path, ": model schema differs from the corpus schema");
      for (const corpus::UtteranceRecord& utt : eval_corpus.utterances)
        rows.push_back(cart::predict_dt_model(model, utt));
    }
  } else {
    raise(ErrorCode::parse, model_path, ": not an f0lab model file");
  }
  return rows;
}

void setup_predict(CLI::App& app) {
  struct Opts {
    CommonOpts common;
    std::string model, in, out;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* cmd = app.add_subcommand(
      "predict", "predict contours for a corpus with a trained model");
  add_common(cmd, o->common);
  auto b = std::make_shared<Bindings>(cmd);
  b->add("model", o->model, "trained model file (tree, forest or neural)");
  b->add("in", o->in, "corpus file to predict");
  b->add("out", o->out,
         "output rows: utterance id, syllable index, 10 Hz values, "
         "comma separated");
  cmd->callback([o, b] {
    b->apply(load_config(o->common));
    require_path(o->model, "predict", "model");
    require_path(o->in, "predict", "in");
    require_path(o->out, "predict", "out");
    corpus::Corpus c = corpus::load_corpus(o->in);
    std::vector<std::vector<corpus::Contour>> rows =
        predict_with_model(o->model, c);
    std::ofstream out = textio::open_output(o->out);
    write_contour_rows(out, c, rows);
    require(out.good(), ErrorCode::io, "failed writing predictions to ",
            o->out);
  });
}

void setup_eval(CLI::App& app) {
  struct Opts {
    CommonOpts common;
    std::string pred, truth, out;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* cmd = app.add_subcommand(
      "eval", "score predicted contours against a truth corpus");
  add_common(cmd, o->common);
  auto b = std::make_shared<Bindings>(cmd);
  b->add("pred", o->pred, "prediction rows from the predict command");
  b->add("truth", o->truth, "truth corpus file");
  b->add("out", o->out, "output metrics file, one 'key value' per line");
  cmd->callback([o, b] {
    b->apply(load_config(o->common));
    require_path(o->pred, "eval", "pred");
    require_path(o->truth, "eval", "truth");
    require_path(o->out, "eval", "out");
    corpus::Corpus truth = corpus::load_corpus(o->truth);
    std::vector<std::vector<corpus::Contour>> pred =
        read_contour_rows(o->pred, truth);
    eval::EvalReport report = eval::evaluate(pred, truth);
    std::ofstream out = textio::open_output(o->out);
    eval::write_report(report, out);
    require(out.good(), ErrorCode::io, "failed writing metrics to ", o->out);
  });
}

void setup_plot_data(CLI::App& app) {
  struct Opts {
    CommonOpts common;
    std::string model, in, out;
  };
  auto o = std::make_shared<Opts>();
  CLI::App* cmd = app.add_subcommand(
      "plot-data",
      "export natural, base, residual and predicted contours of an "
      "additive model as a plottable table");
  add_common(cmd, o->common);
  auto b = std::make_shared<Bindings>(cmd);
  b->add("model", o->model, "trained additive neural model file");
  b->add("in", o->in, "corpus file");
  b->add("out", o->out, "output table");
  cmd->callback([o, b] {
    b->apply(load_config(o->common));
    require_path(o->model, "plot-data", "model");
    require_path(o->in, "plot-data", "in");
    require_path(o->out, "plot-data", "out");
    require(model_magic(o->model) == "F0LAB-NN", ErrorCode::invalid_config,
            "plot-data needs a neural model file");
    neural::NeuralModel model = neural::load_neural(o->model);
    require(model.kind == neural::NetKind::additive,
            ErrorCode::invalid_config,
            "plot-data needs an additive model, got ",
            neural::net_name(model.kind));
    corpus::Corpus c = corpus::load_corpus(o->in);
    require(model.schema == c.schema, ErrorCode::mismatch, o->model,
            ": model schema differs from the corpus schema");
    std::ofstream out = textio::open_output(o->out);
    out << "# utterance syllable point natural base residual predicted\n";
    for (const corpus::UtteranceRecord& utt : c.utterances) {
      neural::PredictionBundle bundle =
          neural::additive_forward(model, utt, contour::DeltaKind::none);
      for (std::size_t s = 0; s < utt.syllables.size(); ++s) {
        for (int k = 0; k < corpus::kContourPoints; ++k) {
          out << utt.id << " " << s << " " << k << " "
              << textio::format_double(utt.syllables[s].contour[k]) << " "
              << textio::format_double(bundle.base[s][k]) << " "
              << textio::format_double(bundle.residual[s][k]) << " "
              << textio::format_double(bundle.total[s][k]) << "\n";
        }
      }
    }
    require(out.good(), ErrorCode::io, "failed writing plot data to ",
            o->out);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"f0lab: syllable f0 contour modeling toolkit"};
  app.footer(kExitCodes);
  app.require_subcommand(1);
  setup_gen_data(app);
  setup_split(app);
  setup_train_dt(app);
  setup_train_forest(app);
  setup_train_nn(app);
  setup_predict(app);
  setup_eval(app);
  setup_plot_data(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(f0lab::ErrorCode::invalid_config);
  } catch (const f0lab::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
