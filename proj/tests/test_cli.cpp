// End-to-end tests of the f0lab command line tool. The test binary takes
// the tool's path as its first argument and drives it as a subprocess, so
// everything here exercises the real files-in, files-out surface: exit
// codes, config handling, and the gen/split/train/predict/eval pipeline.
#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "f0lab/corpus.hpp"
#include "f0lab/text_io.hpp"

namespace fs = std::filesystem;
using namespace f0lab;

namespace {

std::string g_binary;

struct RunResult {
  int code = -1;
  std::string output;  // stdout and stderr combined
};

RunResult run(const fs::path& dir, const std::string& args) {
  fs::path log = dir / "run.log";
  std::string cmd = g_binary + " " + args + " > " + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::ostringstream os;
  os << in.rdbuf();
  r.output = os.str();
  return r;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("f0lab_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "cannot read " << path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  REQUIRE(out.good());
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// Generates a corpus through the tool itself and returns the file path.
fs::path gen(const fs::path& dir, const std::string& name, int n_utts,
             int seed, const std::string& extra = "") {
  fs::path out = dir / name;
  RunResult r = run(dir, "gen-data --n_utterances " + std::to_string(n_utts) +
                             " --seed " + std::to_string(seed) + " --out " +
                             out.string() +
                             (extra.empty() ? "" : " " + extra));
  REQUIRE_MESSAGE(r.code == 0, r.output);
  return out;
}

std::size_t syllable_count(const corpus::Corpus& c) {
  std::size_t n = 0;
  for (const corpus::UtteranceRecord& u : c.utterances) n += u.syllables.size();
  return n;
}

std::vector<std::pair<std::string, double>> read_metrics(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE_MESSAGE(in.good(), "cannot read " << p.string());
  std::vector<std::pair<std::string, double>> kv;
  std::string key;
  double value;
  while (in >> key >> value) kv.emplace_back(key, value);
  return kv;
}

double metric(const std::vector<std::pair<std::string, double>>& kv,
              const std::string& key) {
  for (const auto& [k, v] : kv)
    if (k == key) return v;
  REQUIRE_MESSAGE(false, "metric missing: " << key);
  return 0.0;
}

// Prediction rows in the format `predict` emits, taken from the truth
// corpus itself, so scores must be exactly perfect.
std::vector<std::string> truth_rows(const corpus::Corpus& c) {
  std::vector<std::string> rows;
  for (const corpus::UtteranceRecord& u : c.utterances) {
    for (std::size_t s = 0; s < u.syllables.size(); ++s) {
      std::string line = u.id + "," + std::to_string(s);
      for (double v : u.syllables[s].contour)
        line += "," + textio::format_double(v);
      rows.push_back(line);
    }
  }
  return rows;
}

std::string join_lines(const std::vector<std::string>& rows) {
  std::string text;
  for (const std::string& row : rows) text += row + "\n";
  return text;
}

}  // namespace

TEST_CASE("gen-data: same seed gives identical bytes, seed changes them") {
  fs::path dir = fresh_dir("gen");
  gen(dir, "a.corpus", 12, 5);
  gen(dir, "b.corpus", 12, 5);
  gen(dir, "c.corpus", 12, 6);
  CHECK(slurp(dir / "a.corpus") == slurp(dir / "b.corpus"));
  CHECK(slurp(dir / "a.corpus") != slurp(dir / "c.corpus"));

  corpus::Corpus c = corpus::load_corpus((dir / "a.corpus").string());
  CHECK(c.utterances.size() == 12);
}

TEST_CASE("config file, --set and explicit flags layer in that order") {
  fs::path dir = fresh_dir("config");
  fs::path cfg = dir / "gen.cfg";
  spit(cfg,
       "# corpus settings\n"
       "n_utterances = 5\n"
       "seed = 3   # trailing comments are fine\n"
       "\n"
       "out = " + (dir / "cfg.corpus").string() + "\n");

  RunResult r = run(dir, "gen-data --config " + cfg.string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(corpus::load_corpus((dir / "cfg.corpus").string()).utterances.size() ==
        5);

  // Reference output produced with flags only.
  gen(dir, "ref7.corpus", 7, 3);

  // --set overrides the config file.
  r = run(dir, "gen-data --config " + cfg.string() +
                   " --set n_utterances=7 --set out=" +
                   (dir / "set7.corpus").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(slurp(dir / "set7.corpus") == slurp(dir / "ref7.corpus"));

  // An explicit flag overrides --set, which overrides the file.
  r = run(dir, "gen-data --config " + cfg.string() +
                   " --set n_utterances=9 --n_utterances 7 --out " +
                   (dir / "flag7.corpus").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(slurp(dir / "flag7.corpus") == slurp(dir / "ref7.corpus"));

  // Keys the command does not know are rejected.
  fs::path bad = dir / "bad.cfg";
  spit(bad, "n_utterances = 5\nwibble = 1\n");
  r = run(dir, "gen-data --config " + bad.string() + " --out " +
                   (dir / "x.corpus").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("unknown config key") != std::string::npos);

  // A line without '=' is a malformed config file.
  fs::path broken = dir / "broken.cfg";
  spit(broken, "n_utterances\n");
  r = run(dir, "gen-data --config " + broken.string() + " --out " +
                   (dir / "x.corpus").string());
  CHECK(r.code == 4);

  // --set itself must be key=value.
  r = run(dir, "gen-data --set oops --out " + (dir / "x.corpus").string());
  CHECK(r.code == 2);
}

TEST_CASE("split: clean partition by utterance, reproducible") {
  fs::path dir = fresh_dir("split");
  fs::path full = gen(dir, "full.corpus", 40, 11);

  auto do_split = [&](const std::string& tag) {
    return run(dir, "split --in " + full.string() +
                        " --train_ratio 0.5 --val_ratio 0.25 "
                        "--test_ratio 0.25 --seed 2 --out_train " +
                        (dir / (tag + ".train")).string() + " --out_val " +
                        (dir / (tag + ".val")).string() + " --out_test " +
                        (dir / (tag + ".test")).string());
  };
  RunResult r = do_split("a");
  REQUIRE_MESSAGE(r.code == 0, r.output);

  corpus::Corpus orig = corpus::load_corpus(full.string());
  corpus::Corpus tr = corpus::load_corpus((dir / "a.train").string());
  corpus::Corpus va = corpus::load_corpus((dir / "a.val").string());
  corpus::Corpus te = corpus::load_corpus((dir / "a.test").string());
  CHECK(tr.utterances.size() + va.utterances.size() + te.utterances.size() ==
        orig.utterances.size());
  CHECK(tr.schema == orig.schema);

  std::set<std::string> seen;
  for (const corpus::Corpus* part : {&tr, &va, &te})
    for (const corpus::UtteranceRecord& u : part->utterances)
      CHECK(seen.insert(u.id).second);  // no utterance lands in two parts
  std::set<std::string> expected;
  for (const corpus::UtteranceRecord& u : orig.utterances)
    expected.insert(u.id);
  CHECK(seen == expected);

  r = do_split("b");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(slurp(dir / "a.train") == slurp(dir / "b.train"));
  CHECK(slurp(dir / "a.val") == slurp(dir / "b.val"));
  CHECK(slurp(dir / "a.test") == slurp(dir / "b.test"));

  // Ratios must describe a full partition.
  r = run(dir, "split --in " + full.string() +
                   " --train_ratio 0.7 --val_ratio 0.7 --test_ratio 0.1 "
                   "--out_train x --out_val y --out_test z");
  CHECK(r.code == 2);

  r = run(dir, "split --in " + (dir / "no_such.corpus").string() +
                   " --out_train x --out_val y --out_test z");
  CHECK(r.code == 3);
}

TEST_CASE("tree pipeline: train-dt, predict, eval leave inputs untouched") {
  fs::path dir = fresh_dir("pipeline");
  fs::path full = gen(dir, "full.corpus", 60, 11);
  RunResult r = run(dir, "split --in " + full.string() +
                             " --train_ratio 0.7 --val_ratio 0.15 "
                             "--test_ratio 0.15 --seed 1 --out_train " +
                             (dir / "tr").string() + " --out_val " +
                             (dir / "va").string() + " --out_test " +
                             (dir / "te").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  std::string tr_before = slurp(dir / "tr");
  std::string te_before = slurp(dir / "te");

  std::string train_args = "train-dt --train " + (dir / "tr").string() +
                           " --arch tonedt --base dct --dct_k 5 --delta in "
                           "--min_leaf 8 --out ";
  r = run(dir, train_args + (dir / "dt.model").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  r = run(dir, train_args + (dir / "dt2.model").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(slurp(dir / "dt.model") == slurp(dir / "dt2.model"));

  r = run(dir, "predict --model " + (dir / "dt.model").string() + " --in " +
                   (dir / "te").string() + " --out " +
                   (dir / "pred.csv").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);

  corpus::Corpus te = corpus::load_corpus((dir / "te").string());
  std::vector<std::string> rows = lines_of(slurp(dir / "pred.csv"));
  REQUIRE(rows.size() == syllable_count(te));
  CHECK(rows[0].rfind(te.utterances[0].id + ",0,", 0) == 0);

  r = run(dir, "eval --pred " + (dir / "pred.csv").string() + " --truth " +
                   (dir / "te").string() + " --out " +
                   (dir / "metrics.txt").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);

  auto kv = read_metrics(dir / "metrics.txt");
  const std::vector<std::string> expected_keys = {
      "syl_rmse",  "syl_corr",  "utt_rmse",          "utt_corr",
      "syl_count", "utt_count", "syl_corr_excluded", "utt_corr_excluded"};
  REQUIRE(kv.size() == expected_keys.size());
  for (std::size_t i = 0; i < kv.size(); ++i) CHECK(kv[i].first == expected_keys[i]);
  CHECK(metric(kv, "syl_count") == double(syllable_count(te)));
  CHECK(metric(kv, "utt_count") == double(te.utterances.size()));
  CHECK(metric(kv, "syl_rmse") > 0.0);
  CHECK(metric(kv, "syl_rmse") < 1000.0);
  CHECK(metric(kv, "utt_corr") >= -1.0);
  CHECK(metric(kv, "utt_corr") <= 1.0);

  // No command mutated its inputs.
  CHECK(slurp(dir / "tr") == tr_before);
  CHECK(slurp(dir / "te") == te_before);

  // A corpus with a different schema cannot be scored with this model.
  fs::path other = gen(dir, "tone6.corpus", 5, 1, "--tone_count 6");
  r = run(dir, "predict --model " + (dir / "dt.model").string() + " --in " +
                   other.string() + " --out " + (dir / "p6.csv").string());
  CHECK(r.code == 5);
}

TEST_CASE("eval: predictions equal to the truth score zero error") {
  fs::path dir = fresh_dir("perfect");
  fs::path path = gen(dir, "c.corpus", 10, 4);
  corpus::Corpus c = corpus::load_corpus(path.string());
  spit(dir / "pred.csv", join_lines(truth_rows(c)));

  RunResult r = run(dir, "eval --pred " + (dir / "pred.csv").string() +
                             " --truth " + path.string() + " --out " +
                             (dir / "m.txt").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);

  std::string report = slurp(dir / "m.txt");
  CHECK(report.rfind("syl_rmse 0\n", 0) == 0);
  auto kv = read_metrics(dir / "m.txt");
  CHECK(metric(kv, "syl_rmse") == 0.0);
  CHECK(metric(kv, "utt_rmse") == 0.0);
  CHECK(metric(kv, "syl_corr") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(metric(kv, "utt_corr") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(metric(kv, "syl_corr_excluded") == 0.0);
  CHECK(metric(kv, "utt_corr_excluded") == 0.0);
}

TEST_CASE("eval: malformed or misaligned prediction files are rejected") {
  fs::path dir = fresh_dir("predcheck");
  fs::path path = gen(dir, "c.corpus", 6, 8);
  corpus::Corpus c = corpus::load_corpus(path.string());
  std::vector<std::string> rows = truth_rows(c);

  auto eval_rows = [&](const std::vector<std::string>& r2) {
    spit(dir / "pred.csv", join_lines(r2));
    return run(dir, "eval --pred " + (dir / "pred.csv").string() +
                        " --truth " + path.string() + " --out " +
                        (dir / "m.txt").string());
  };

  std::vector<std::string> truncated = rows;
  truncated.pop_back();
  RunResult r = eval_rows(truncated);
  CHECK(r.code == 5);
  CHECK(r.output.find("predictions end") != std::string::npos);

  std::vector<std::string> extra = rows;
  extra.push_back(rows.back());
  r = eval_rows(extra);
  CHECK(r.code == 5);
  CHECK(r.output.find("trailing") != std::string::npos);

  std::vector<std::string> bad_value = rows;
  bad_value[0] = c.utterances[0].id + ",0,abc,1,2,3,4,5,6,7,8,9";
  r = eval_rows(bad_value);
  CHECK(r.code == 4);

  std::vector<std::string> wrong_id = rows;
  wrong_id[0] = "zzz" + rows[0].substr(rows[0].find(','));
  r = eval_rows(wrong_id);
  CHECK(r.code == 5);

  std::vector<std::string> short_row = rows;
  short_row[0] = rows[0].substr(0, rows[0].find_last_of(','));
  r = eval_rows(short_row);
  CHECK(r.code == 4);
  CHECK(r.output.find("expected 12") != std::string::npos);

  r = run(dir, "eval --pred " + (dir / "missing.csv").string() + " --truth " +
                   path.string() + " --out " + (dir / "m.txt").string());
  CHECK(r.code == 3);
}

TEST_CASE("every model kind feeds predict; plot-data splits the additive") {
  fs::path dir = fresh_dir("models");
  fs::path train = gen(dir, "train.corpus", 15, 9);
  fs::path test = gen(dir, "test.corpus", 5, 10);
  corpus::Corpus te = corpus::load_corpus(test.string());
  std::size_t n_rows = syllable_count(te);

  auto predict_ok = [&](const std::string& model, const std::string& out) {
    RunResult r = run(dir, "predict --model " + (dir / model).string() +
                               " --in " + test.string() + " --out " +
                               (dir / out).string());
    REQUIRE_MESSAGE(r.code == 0, r.output);
    CHECK(lines_of(slurp(dir / out)).size() == n_rows);
  };

  RunResult r = run(dir, "train-dt --train " + train.string() +
                             " --arch sindt --base orif0 --min_leaf 10 "
                             "--out " + (dir / "dt.model").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  predict_ok("dt.model", "dt.csv");

  r = run(dir, "train-forest --train " + train.string() +
                   " --arch sindt --base shapems --n_trees 3 --min_leaf 10 "
                   "--seed 3 --out " + (dir / "forest.model").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  predict_ok("forest.model", "forest.csv");

  std::string nn_shape =
      " --blstm_hidden 3 --mlp_hidden1 8 --mlp_hidden2 6 --emb_dim 2";
  r = run(dir, "train-nn --kind mlp --train " + train.string() + " --val " +
                   test.string() + " --epochs 2" + nn_shape + " --out " +
                   (dir / "mlp.model").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  predict_ok("mlp.model", "mlp.csv");

  r = run(dir, "train-nn --kind additive --train " + train.string() +
                   " --epochs 1" + nn_shape + " --out " +
                   (dir / "add.model").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  predict_ok("add.model", "add.csv");

  r = run(dir, "plot-data --model " + (dir / "add.model").string() +
                   " --in " + test.string() + " --out " +
                   (dir / "plot.txt").string());
  REQUIRE_MESSAGE(r.code == 0, r.output);
  std::vector<std::string> plot = lines_of(slurp(dir / "plot.txt"));
  REQUIRE(plot.size() == 1 + n_rows * corpus::kContourPoints);
  CHECK(plot[0] ==
        "# utterance syllable point natural base residual predicted");
  {
    std::istringstream row(plot[1]);
    std::string id;
    int syl = -1, point = -1;
    double natural = 0, base = 0, residual = 0, predicted = 0;
    REQUIRE(static_cast<bool>(row >> id >> syl >> point >> natural >> base >>
                              residual >> predicted));
    CHECK(id == te.utterances[0].id);
    CHECK(syl == 0);
    CHECK(point == 0);
    CHECK(natural == te.utterances[0].syllables[0].contour[0]);
    CHECK(base + residual == doctest::Approx(predicted).epsilon(1e-5));
  }

  // plot-data is only defined for the additive network.
  r = run(dir, "plot-data --model " + (dir / "mlp.model").string() + " --in " +
                   test.string() + " --out " + (dir / "p.txt").string());
  CHECK(r.code == 2);
  CHECK(r.output.find("additive") != std::string::npos);
  r = run(dir, "plot-data --model " + (dir / "dt.model").string() + " --in " +
                   test.string() + " --out " + (dir / "p.txt").string());
  CHECK(r.code == 2);

  // predict refuses files that are not models at all.
  spit(dir / "junk.model", "BOGUS 1\n");
  r = run(dir, "predict --model " + (dir / "junk.model").string() + " --in " +
                   test.string() + " --out " + (dir / "p.csv").string());
  CHECK(r.code == 4);
  CHECK(r.output.find("not an f0lab model") != std::string::npos);
}

TEST_CASE("exit codes separate usage, config, io, parse and numeric errors") {
  fs::path dir = fresh_dir("codes");

  CHECK(run(dir, "").code == 2);             // a subcommand is required
  CHECK(run(dir, "frobnicate").code == 2);   // unknown subcommand
  CHECK(run(dir, "--help").code == 0);
  RunResult r = run(dir, "gen-data --help");
  CHECK(r.code == 0);
  CHECK(r.output.find("exit codes:") != std::string::npos);

  r = run(dir, "gen-data --n_utterances 3");
  CHECK(r.code == 2);
  CHECK(r.output.find("missing required path 'out'") != std::string::npos);

  CHECK(run(dir, "gen-data --bogus_flag 1 --out x").code == 2);
  CHECK(run(dir, "gen-data --tone_count 5 --out " + (dir / "x").string())
            .code == 2);
  CHECK(run(dir, "gen-data --n_utterances 2 --out /nonexistent_dir_zz/c")
            .code == 3);

  fs::path garbage = dir / "garbage.corpus";
  spit(garbage, "this is not a corpus\n");
  CHECK(run(dir, "train-dt --train " + garbage.string() + " --out " +
                     (dir / "m").string())
            .code == 4);

  fs::path tiny = gen(dir, "tiny.corpus", 4, 2, "--syl_min 3 --syl_max 5");
  CHECK(run(dir, "train-dt --train " + tiny.string() +
                     " --arch nosucharch --out " + (dir / "m").string())
            .code == 2);
  CHECK(run(dir, "train-nn --kind nosuchnet --train " + tiny.string() +
                     " --out " + (dir / "m").string())
            .code == 2);

  // A hopeless step size blows the loss up to non-finite values.
  r = run(dir, "train-nn --kind mlp --train " + tiny.string() +
                   " --learning_rate 1e60 --clip_norm 0 --epochs 2 "
                   "--patience 1 --mlp_hidden1 4 --mlp_hidden2 4 "
                   "--emb_dim 2 --blstm_hidden 2 --out " +
                   (dir / "m").string());
  CHECK(r.code == 6);
  CHECK(r.output.find("diverged") != std::string::npos);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s <f0lab-binary> [doctest options]\n",
                 argv[0]);
    return 1;
  }
  g_binary = argv[1];
  doctest::Context ctx(argc - 1, argv + 1);
  return ctx.run();
}
