#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "goalrec/corpus.hpp"
#include "goalrec/random.hpp"

namespace goalrec {

// Unordered command pair, stored with first < second.
struct Biterm {
  CommandId first = 0;
  CommandId second = 0;

  Biterm() = default;
  Biterm(CommandId a, CommandId b) : first(a < b ? a : b), second(a < b ? b : a) {}
  friend auto operator<=>(const Biterm&, const Biterm&) = default;
};

// All pairs over the distinct command types of a session, in lexicographic
// order. Sessions with more than `cap` pairs are subsampled uniformly
// (seeded) down to `cap`.
std::vector<Biterm> extract_biterms(std::span<const Command> commands, std::size_t cap = 2000,
                                    std::uint64_t seed = 0);

struct BtmConfig {
  std::size_t k = 6;
  double alpha = 8.333;
  double beta = 0.005;
  std::size_t iterations = 300;
  std::size_t burn_in = 150;
  std::uint64_t seed = 1;
  // Estimate from post-burn-in averaged counts instead of the final sample.
  bool average_samples = false;
  std::size_t biterm_cap = 2000;

  void validate() const;
};

struct GoalModel {
  std::size_t vocab_size = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> phi;   // k x vocab_size
  std::vector<double> theta;              // k
  std::vector<Distribution> goal_defs;    // k x data_count, see goal_definition
  std::vector<std::string> labels;        // optional, k entries when present

  std::size_t k() const noexcept { return phi.size(); }

  void save(std::ostream& out) const;
  static GoalModel load(std::istream& in);
};

// Collapsed Gibbs sampler over biterm topic assignments. Exposed so tests can
// check count conservation between sweeps.
class BtmSampler {
 public:
  BtmSampler(std::vector<Biterm> biterms, std::size_t vocab_size, const BtmConfig& config);

  void sweep();

  std::span<const Biterm> biterms() const noexcept { return biterms_; }
  std::span<const std::uint32_t> assignments() const noexcept { return z_; }
  // Biterms per topic.
  std::span<const std::int64_t> topic_counts() const noexcept { return n_topic_; }
  // Command occurrences per (command, topic), row-major vocab_size x k.
  std::span<const std::int64_t> word_topic_counts() const noexcept { return n_word_topic_; }

  std::vector<std::vector<double>> estimate_phi() const;
  std::vector<double> estimate_theta() const;

 private:
  std::vector<Biterm> biterms_;
  std::size_t vocab_size_;
  BtmConfig config_;
  std::vector<std::uint32_t> z_;
  std::vector<std::int64_t> n_topic_;
  std::vector<std::int64_t> n_word_topic_;
  std::vector<double> weights_;
  Rng rng_;
};

// Biterms of every session (cap and per-session seeds from config).
std::vector<Biterm> corpus_biterms(std::span<const Session> sessions, const BtmConfig& config);

GoalModel btm_fit(std::span<const Session> sessions, const Vocabulary& vocab, const BtmConfig& config);

// Restricts a command distribution to data commands and renormalizes.
Distribution goal_definition(std::span<const double> phi_row, const Vocabulary& vocab);

// argmax_G sum_b P(z = G | b); argmax theta for sessions without biterms.
GoalId assign_goal(const GoalModel& model, std::span<const Command> commands,
                   std::size_t biterm_cap = 2000);
GoalId assign_goal(const GoalModel& model, const Session& session, std::size_t biterm_cap = 2000);

// Top-n data-command slots of each goal by goal definition (ties: lower slot).
std::vector<std::vector<std::size_t>> goal_clusters(const GoalModel& model, std::size_t top_n);

// Session-level document frequencies over data commands (by slot).
struct CoherenceCounts {
  std::size_t data_count = 0;
  std::size_t sessions = 0;                 // M
  std::vector<std::uint32_t> single;        // M(dc_i)
  std::vector<std::uint32_t> pair;          // M(dc_i, dc_j), data_count^2, symmetric

  std::uint32_t pair_count(std::size_t i, std::size_t j) const { return pair[i * data_count + j]; }
};

CoherenceCounts coherence_counts(std::span<const Session> sessions, const Vocabulary& vocab);

struct CoherenceScores {
  std::vector<double> uci;    // per goal
  std::vector<double> umass;  // per goal
  double uci_mean = 0.0;
  double umass_mean = 0.0;
};

inline constexpr double kUciEpsilon = 1e-12;

// Each cluster lists data-command slots in descending goal-definition rank.
CoherenceScores coherence_scores(std::span<const std::vector<std::size_t>> clusters,
                                 const CoherenceCounts& counts);

struct GoalCountScan {
  std::vector<std::size_t> candidates;
  std::vector<double> uci, umass, combined;
  std::size_t chosen = 0;
};

// Fits one model per candidate goal count (in parallel), ranks by the mean
// of min-max normalized UCI and UMass, ties to the smaller count. A
// non-positive base alpha means 50 / k for each candidate.
GoalCountScan select_goal_count(std::span<const Session> sessions, const Vocabulary& vocab,
                                std::span<const std::size_t> candidates, const BtmConfig& base,
                                std::size_t top_n = 10);

}  // namespace goalrec
