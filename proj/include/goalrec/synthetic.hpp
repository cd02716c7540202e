#pragma once

#include <cstdint>
#include <vector>

#include "goalrec/corpus.hpp"

namespace goalrec {

// Synthetic analytics log with planted goals.
//
// Data commands get Zipf weights by rank and are split into k_true
// goal-preferred subsets of equal total weight. A goal's data-command
// distribution puts `preferred_mass` on its own subset and the rest on the
// global Zipf law, so a uniform goal mixture reproduces the global law.
// Each position is a data command with probability `data_prob`; software
// commands come from a shared Zipf law. A data command is drawn from the
// global law with probability `noise`, otherwise it follows the previous data
// command's fixed successor (the next rank in the same subset) with
// probability `transition_prob`, otherwise it is drawn from the goal.
struct SyntheticConfig {
  std::size_t k_true = 3;
  std::size_t dc_count = 30;
  std::size_t sc_count = 10;
  double zipf_exponent = 1.0;
  std::size_t sessions = 300;
  std::size_t session_len_min = 20;
  std::size_t session_len_max = 40;
  double noise = 0.05;
  double data_prob = 0.5;
  double preferred_mass = 1.0;
  double transition_prob = 0.3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticCorpus {
  std::vector<Session> sessions;  // goal holds the planted label
  Vocabulary vocab;
  // Data-command ids of each goal's preferred subset.
  std::vector<std::vector<CommandId>> goal_support;
  // Planted data-command distribution per goal, indexed by slot.
  std::vector<Distribution> goal_distribution;
};

SyntheticCorpus generate_synthetic(const SyntheticConfig& config);

}  // namespace goalrec
