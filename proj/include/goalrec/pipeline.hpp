#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "goalrec/corpus.hpp"
#include "goalrec/error.hpp"
#include "goalrec/goals.hpp"
#include "goalrec/neural.hpp"
#include "goalrec/synthetic.hpp"

namespace goalrec {

enum class CorpusSource { Synthetic, Log, Corpus };

// Everything a run needs, read from an INI file. All seeds derive from
// `seed` (salted per stage) unless a section sets its own.
struct PipelineConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "run";

  // [corpus]
  CorpusSource source = CorpusSource::Synthetic;
  std::filesystem::path input;  // log or corpus file for non-synthetic sources
  std::vector<std::string> drop;
  std::int64_t inactivity_gap = 21600;
  std::size_t window = 10;
  SplitRatios ratios;
  SyntheticConfig synthetic;

  // [goals]
  BtmConfig btm;
  bool alpha_from_k = true;             // alpha = 50 / k unless set explicitly
  std::vector<std::size_t> scan;        // candidate goal counts; empty = use btm.k
  std::size_t coherence_top_n = 10;
  std::vector<std::string> labels;

  // [models]
  std::vector<std::string> baselines;   // top50 markov1 markov2 cpt ensemble-<base>
  std::vector<std::string> neural;      // vanilla gcore gcomm gain, optional -cnn suffix
  ModelConfig model;                    // template; sizes and goal count filled in per run
  std::size_t cpt_suffix = 4;

  // [train] / [finetune]
  TrainConfig train;
  TrainConfig finetune;
  std::vector<std::string> finetune_models;

  // [eval]
  bool adversarial = true;
  bool tables = true;

  static PipelineConfig parse(std::istream& in, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  // Re-derives every stage seed from a new master seed.
  void set_seed(std::uint64_t s);
  // Throws Error on the first invalid field or missing input file.
  void validate() const;

  // Canonical text of the settings each stage depends on.
  std::string corpus_section() const;
  std::string goals_section() const;
  std::string train_section() const;
  std::string finetune_section() const;
  std::string eval_section() const;
};

enum class Stage { Corpus, Goals, Train, Finetune, Eval };
std::string_view to_string(Stage s);

struct StageRecord {
  Stage stage;
  bool skipped = false;
  std::string digest;
};

struct PipelineResult {
  std::vector<StageRecord> stages;
  std::filesystem::path report;  // empty unless the eval stage ran
};

using Logger = std::function<void(const std::string&)>;

// Runs every stage up to and including `last`. Stages whose recorded digest
// (config section plus upstream digests and input file hashes) matches are
// skipped. A failing stage throws StageError; earlier checkpoints remain.
PipelineResult run_pipeline(const PipelineConfig& config, Stage last = Stage::Eval, const Logger& log = {});

class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& what)
      : Error("stage " + std::string(to_string(stage)) + ": " + what), stage_(stage) {}
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

// Artifact layout of a run directory.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path vocabulary() const { return root / "corpus" / "vocab.txt"; }
  std::filesystem::path partition(std::string_view name) const;  // corpus/<name>.txt
  std::filesystem::path goal_model() const { return root / "goals" / "model.txt"; }
  std::filesystem::path goal_scan() const { return root / "goals" / "scan.csv"; }
  std::filesystem::path labeled(std::string_view name) const;    // goals/<name>.txt
  std::filesystem::path model(std::string_view name) const;      // models/<name>.model
  std::filesystem::path train_log(std::string_view name) const;  // models/<name>.log.csv
  std::filesystem::path report() const { return root / "report.json"; }
  std::filesystem::path tables() const { return root / "tables"; }
  std::filesystem::path digest(Stage s) const;
};

// Loaded artifacts of a finished run, shared by the eval stage and the service.
struct RunData {
  Vocabulary vocab;
  GoalModel goals;
  std::vector<Session> train, validation, test;  // goals assigned
};
RunData load_run(const RunLayout& layout);

}  // namespace goalrec
