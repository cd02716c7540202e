#pragma once

#include <optional>
#include <span>
#include <vector>

#include "goalrec/corpus.hpp"
#include "goalrec/goals.hpp"
#include "goalrec/neural.hpp"
#include "goalrec/recommender.hpp"

// Data-parallel loops, each with a serial reference. The OpenMP versions
// produce bitwise-identical results for any thread count: per-item results
// are computed independently and reduced in item order.
namespace goalrec::kernels {

struct GradientItem {
  std::span<const Command> window;
  std::optional<GoalId> goal;
  LossSpec loss;
  std::uint64_t dropout_seed = 0;
};

// Overwrites `grad` with the summed per-item gradients and returns the summed
// loss. Per-item gradients are formed in zeroed buffers first.
double batch_gradient_serial(const Parameters& params, std::span<const GradientItem> items, bool train_mode,
                             std::span<double> grad);
double batch_gradient_parallel(const Parameters& params, std::span<const GradientItem> items, bool train_mode,
                               std::span<double> grad);

struct Query {
  std::span<const Command> window;
  std::optional<GoalId> goal;
};

std::vector<std::size_t> predict_top1_serial(const Recommender& model, std::span<const Query> queries);
std::vector<std::size_t> predict_top1_parallel(const Recommender& model, std::span<const Query> queries);

CoherenceCounts coherence_counts_serial(std::span<const Session> sessions, const Vocabulary& vocab);
CoherenceCounts coherence_counts_parallel(std::span<const Session> sessions, const Vocabulary& vocab);

}  // namespace goalrec::kernels
