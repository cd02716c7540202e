#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "goalrec/corpus.hpp"
#include "goalrec/recommender.hpp"

namespace goalrec {

// Harmonic-style blend 2ap / (a + p); 0 when a + p = 0.
double go1(double accuracy, double p_bar);

// Fraction of examples whose top-1 recommendation is the target. Each example
// is predicted with its own goal.
double accuracy(const Recommender& model, std::span<const SequenceExample> test, const Vocabulary& vocab);

struct GoalScore {
  GoalId goal = 0;
  std::size_t examples = 0;
  std::size_t hits = 0;
  double accuracy = 0.0;
  double p_bar = 0.0;  // mean goal_def[goal][top-1]
  double go1 = 0.0;
};

struct ModelScore {
  std::string name;
  std::size_t examples = 0;
  double accuracy = 0.0;   // micro
  double p_bar = 0.0;      // micro
  double go1 = 0.0;        // go1(micro accuracy, micro p_bar)
  double go1_macro = 0.0;  // mean of per-goal go1
  std::vector<GoalScore> goals;
  std::vector<GoalId> omitted_goals;  // goals without test examples
};

// Every example must carry an assigned goal below goal_defs.size().
ModelScore evaluate(const Recommender& model, std::span<const SequenceExample> test,
                    std::span<const Distribution> goal_defs, const Vocabulary& vocab, std::string name);

struct AdversarialScore {
  GoalId goal = 0;
  std::size_t examples = 0;
  GoalScore tuned;    // fine-tuned model told `goal`
  GoalScore control;  // non-fine-tuned goal-informed model told `goal`
};

// For each goal G, examples assigned to other goals are fed to both models
// with goal input G; P-bar is measured against G's definition.
std::vector<AdversarialScore> adversarial_eval(const Recommender& tuned, const Recommender& control,
                                               std::span<const SequenceExample> test,
                                               std::span<const Distribution> goal_defs, const Vocabulary& vocab);

// Scores of examples fed with a fixed goal (used by adversarial_eval).
GoalScore score_with_goal(const Recommender& model, std::span<const SequenceExample> examples, GoalId goal,
                          std::span<const double> goal_def, const Vocabulary& vocab);

struct EvalReport {
  std::map<std::string, std::string> metadata;
  std::vector<ModelScore> models;
  std::map<std::string, std::vector<AdversarialScore>> adversarial;

  // Versioned JSON with sorted keys and no timestamps.
  std::string to_json() const;
  // table1.csv (overall), table2.csv (per goal), table3.csv (adversarial).
  void write_tables(const std::filesystem::path& dir) const;
};

}  // namespace goalrec
