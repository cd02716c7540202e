#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "json.hpp"

#include "goalrec/pipeline.hpp"
#include "goalrec/text_io.hpp"

using namespace goalrec;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("goalrec-pipeline-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

const char* kMinimal = R"([run]
seed = 7
out = run

[corpus]
sessions = 60
window = 4

[goals]
k = 2
iterations = 30
burn_in = 10

[models]
baselines = top50
)";

PipelineConfig parse(const std::string& text, const fs::path& base) {
  std::istringstream in(text);
  return PipelineConfig::parse(in, base);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool all_skipped(const PipelineResult& r) {
  for (const auto& s : r.stages)
    if (!s.skipped) return false;
  return true;
}

}  // namespace

TEST_CASE("minimal synthetic config produces a report with one model block") {
  TempDir dir("minimal");
  const auto c = parse(kMinimal, dir.path);
  CHECK(c.out_dir == dir.path / "run");
  const auto r = run_pipeline(c);
  REQUIRE(r.stages.size() == 5);
  CHECK(r.report == dir.path / "run" / "report.json");
  const auto report = nlohmann::json::parse(slurp(r.report));
  CHECK(report["schema"] == 1);
  REQUIRE(report["models"].size() == 1);
  CHECK(report["models"].contains("top50"));
  CHECK(report["metadata"]["goal_count"] == "2");
  CHECK(report["metadata"]["window"] == "4");
  const auto text = slurp(r.report);
  CHECK(text.find(dir.path.string()) == std::string::npos);

  RunLayout layout{c.out_dir};
  const auto run = load_run(layout);
  CHECK(run.goals.k() == 2);
  CHECK(run.train.size() + run.validation.size() + run.test.size() == 60);
  for (const auto& s : run.test) CHECK(s.goal.has_value());
  CHECK(fs::exists(layout.tables() / "table1.csv"));
}

TEST_CASE("a rerun skips every stage and leaves the report unchanged") {
  TempDir dir("rerun");
  const auto c = parse(kMinimal, dir.path);
  const auto first = run_pipeline(c);
  const auto report = slurp(first.report);
  for (const auto& s : first.stages) CHECK_FALSE(s.skipped);

  std::vector<std::string> lines;
  const auto second = run_pipeline(c, Stage::Eval, [&](const std::string& l) { lines.push_back(l); });
  CHECK(all_skipped(second));
  CHECK(lines.size() == 5);
  CHECK(slurp(second.report) == report);
  for (std::size_t i = 0; i < 5; ++i) CHECK(first.stages[i].digest == second.stages[i].digest);
}

TEST_CASE("changing the model list reruns training and later stages only") {
  TempDir dir("downstream");
  run_pipeline(parse(kMinimal, dir.path));
  auto text = std::string(kMinimal);
  text.replace(text.find("baselines = top50"), 17, "baselines = top50,markov1");
  const auto r = run_pipeline(parse(text, dir.path));
  CHECK(r.stages[0].skipped);
  CHECK(r.stages[1].skipped);
  CHECK_FALSE(r.stages[2].skipped);
  CHECK_FALSE(r.stages[3].skipped);
  CHECK_FALSE(r.stages[4].skipped);
  CHECK(nlohmann::json::parse(slurp(r.report))["models"].size() == 2);
}

TEST_CASE("a deleted artifact forces its stage to rerun") {
  TempDir dir("artifact");
  const auto c = parse(kMinimal, dir.path);
  run_pipeline(c);
  fs::remove(RunLayout{c.out_dir}.model("top50"));
  const auto r = run_pipeline(c);
  CHECK(r.stages[1].skipped);
  CHECK_FALSE(r.stages[2].skipped);
  CHECK(fs::exists(RunLayout{c.out_dir}.model("top50")));
}

TEST_CASE("a missing corpus file fails before any stage runs") {
  TempDir dir("missing");
  const auto c = parse(R"([run]
seed = 1
out = run
[corpus]
source = log
path = nowhere.jsonl
[models]
baselines = top50
)",
                       dir.path);
  CHECK_THROWS_WITH_AS(run_pipeline(c), doctest::Contains("nowhere.jsonl"), Error);
  CHECK_FALSE(fs::exists(dir.path / "run"));
}

TEST_CASE("seed override re-derives every stage seed") {
  TempDir dir("seed");
  auto a = parse(kMinimal, dir.path);
  auto b = a;
  b.set_seed(8);
  CHECK(b.seed == 8);
  CHECK(b.synthetic.seed != a.synthetic.seed);
  CHECK(b.btm.seed != a.btm.seed);
  CHECK(b.model.seed != a.model.seed);
  CHECK(b.train.seed != a.train.seed);
  CHECK(b.corpus_section() != a.corpus_section());
  b.set_seed(7);
  CHECK(b.corpus_section() == a.corpus_section());
  CHECK(b.train_section() == a.train_section());

  a.out_dir = dir.path / "a";
  b.out_dir = dir.path / "b";
  b.set_seed(9);
  const auto ra = run_pipeline(a), rb = run_pipeline(b);
  const auto ja = nlohmann::json::parse(slurp(ra.report)), jb = nlohmann::json::parse(slurp(rb.report));
  CHECK(ja["metadata"]["seed"] == "7");
  CHECK(jb["metadata"]["seed"] == "9");
  CHECK(ja["metadata"]["corpus_sha256"] != jb["metadata"]["corpus_sha256"]);
}

TEST_CASE("config errors name the offending key or section") {
  const fs::path base = "/tmp";
  CHECK_THROWS_WITH_AS(parse("[corpus]\nsessions = 5\n", base), doctest::Contains("seed is required"), Error);
  CHECK_THROWS_WITH_AS(parse("[run]\nseed = 1\n[bogus]\nx = 1\n", base), doctest::Contains("[bogus]"), Error);
  CHECK_THROWS_WITH_AS(parse("[run]\nseed = 1\n[corpus]\nsesions = 5\n", base), doctest::Contains("sesions"), Error);
  CHECK_THROWS_WITH_AS(parse("[run]\nseed = 1\n[corpus]\nwindow = -2\n", base), doctest::Contains("window"), Error);
  CHECK_THROWS_WITH_AS(parse("[run]\nseed = x\n", base), doctest::Contains("seed"), Error);
  CHECK_THROWS_WITH_AS(parse("[run]\nseed = 1\n[corpus]\nsource = s3\n", base), doctest::Contains("source"), Error);

  auto check_invalid = [&](const std::string& body, const std::string& needle) {
    const auto c = parse("[run]\nseed = 1\n" + body, base);
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains(needle.c_str()), Error);
  };
  check_invalid("", "no models");
  check_invalid("[models]\nbaselines = top60\n", "top60");
  check_invalid("[models]\nbaselines = top50,top50\n", "twice");
  check_invalid("[models]\nneural = gain\n[finetune]\nmodels = gcore\n", "gcore");
  check_invalid("[models]\nneural = vanilla\n[finetune]\nmodels = vanilla\n", "vanilla");
  check_invalid("[models]\nneural = gain-rnn\n", "gain-rnn");
  check_invalid("[corpus]\ntrain = 0.9\n[models]\nbaselines = top50\n", "ratios");
  check_invalid("[goals]\nk = 2\nlabels = a|b|c\n[models]\nbaselines = top50\n", "labels");
}

TEST_CASE("parsed sections feed the stage configs") {
  const auto c = parse(R"([run]
seed = 3
[corpus]
window = 6
dc_count = 12
preferred_mass = 0.8
[goals]
k = 4
alpha = 2.5
scan = 2-4,6
labels = a|b|c|d
[models]
neural = gain-cnn, gcore
filter_widths = 1,3
hidden_dim = 8
[train]
epochs = 3
learning_rate = 0.05
[finetune]
models = gain-cnn
alpha = 0.25
epochs = 2
)",
                       "/tmp");
  CHECK(c.window == 6);
  CHECK(c.synthetic.dc_count == 12);
  CHECK(c.synthetic.preferred_mass == 0.8);
  CHECK(c.btm.k == 4);
  CHECK_FALSE(c.alpha_from_k);
  CHECK(c.btm.alpha == 2.5);
  CHECK(c.scan == std::vector<std::size_t>{2, 3, 4, 6});
  CHECK(c.labels == std::vector<std::string>{"a", "b", "c", "d"});
  CHECK(c.neural == std::vector<std::string>{"gain-cnn", "gcore"});
  CHECK(c.model.filter_widths == std::vector<std::size_t>{1, 3});
  CHECK(c.model.hidden_dim == 8);
  CHECK(c.train.epochs == 3);
  CHECK(c.finetune.epochs == 2);
  CHECK(c.finetune.learning_rate == 0.05);
  CHECK(c.finetune.loss_alpha == 0.25);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("neural, fine-tuned and ensemble models run end to end") {
  TempDir dir("neural");
  const auto c = parse(R"([run]
seed = 11
out = run
[corpus]
sessions = 40
window = 3
[goals]
scan = 2-3
iterations = 20
burn_in = 5
labels =
[models]
baselines = ensemble-markov1, cpt
neural = gain, vanilla-cnn
embed_dim = 4
hidden_dim = 4
filter_widths = 1,2
filter_count = 3
[train]
epochs = 2
[finetune]
models = gain
epochs = 1
)",
                       dir.path);
  std::vector<std::string> log;
  const auto r = run_pipeline(c, Stage::Eval, [&](const std::string& l) { log.push_back(l); });
  RunLayout layout{c.out_dir};
  CHECK(fs::exists(layout.goal_scan()));
  CHECK(slurp(layout.goal_scan()).starts_with("k,uci,umass,combined\n"));
  CHECK(fs::exists(layout.model("gain-ft")));
  CHECK(fs::exists(layout.train_log("gain")));
  CHECK(slurp(layout.train_log("vanilla-cnn")).starts_with("epoch,train_loss"));
  const auto report = nlohmann::json::parse(slurp(r.report));
  CHECK(report["models"].size() == 5);
  REQUIRE(report["adversarial"].contains("gain-ft"));
  const auto k = std::stoul(report["metadata"]["goal_count"].get<std::string>());
  CHECK(report["adversarial"]["gain-ft"].size() == k);
  CHECK(!log.empty());
}

TEST_CASE("log and corpus sources are ingested") {
  TempDir dir("log");
  {
    std::ofstream out(dir.path / "clicks.jsonl");
    for (int u = 0; u < 12; ++u)
      for (int i = 0; i < 12; ++i) {
        const auto ts = 100 * i;
        if (i % 3 == 0)
          out << R"({"ts": )" << ts << R"(, "user": "u)" << u << R"(", "kind": "SC", "cmd": "open"})" << '\n';
        else if (i % 3 == 1)
          out << R"({"ts": )" << ts << R"(, "user": "u)" << u << R"(", "kind": "SC", "cmd": "hover"})" << '\n';
        else
          out << R"({"ts": )" << ts << R"(, "user": "u)" << u << R"(", "kind": "DC", "class": "sort", "variable": "v)"
              << (u + i) % 4 << R"("})" << '\n';
      }
  }
  const auto c = parse(R"([run]
seed = 2
out = run
[corpus]
source = log
path = clicks.jsonl
drop = hover
window = 2
[goals]
k = 2
iterations = 10
burn_in = 5
[models]
baselines = markov1
)",
                       dir.path);
  run_pipeline(c, Stage::Goals);
  const auto run = load_run(RunLayout{c.out_dir});
  CHECK(run.train.size() + run.validation.size() + run.test.size() == 12);
  CHECK_FALSE(run.vocab.find("hover").has_value());
  CHECK(run.vocab.find("open").has_value());
  for (const auto& s : run.train) CHECK(s.commands.size() == 8);

  // A corpus file written by one run feeds another.
  const auto c2 = parse("[run]\nseed = 2\nout = run2\n[corpus]\nsource = corpus\npath = run/goals/train.txt\n"
                        "window = 2\n[goals]\nk = 2\niterations = 10\nburn_in = 5\n[models]\nbaselines = top50\n",
                        dir.path);
  const auto r = run_pipeline(c2);
  CHECK(fs::exists(r.report));
}

TEST_CASE("a failing stage reports its name and keeps earlier checkpoints") {
  TempDir dir("fail");
  // Windows longer than every session leave nothing to train on.
  const auto c = parse(R"([run]
seed = 4
out = run
[corpus]
sessions = 20
session_len_min = 5
session_len_max = 6
window = 50
[goals]
k = 2
iterations = 10
burn_in = 5
[models]
baselines = top50
)",
                       dir.path);
  CHECK_THROWS_WITH_AS(run_pipeline(c), doctest::Contains("stage train:"), StageError);
  RunLayout layout{c.out_dir};
  CHECK(fs::exists(layout.digest(Stage::Goals)));
  CHECK_FALSE(fs::exists(layout.digest(Stage::Train)));
}
