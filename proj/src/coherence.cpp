#include <algorithm>
#include <cmath>
#include <exception>

#include "goalrec/error.hpp"
#include "goalrec/goals.hpp"
#include "goalrec/kernels.hpp"

namespace goalrec {

CoherenceCounts coherence_counts(std::span<const Session> sessions, const Vocabulary& vocab) {
  return kernels::coherence_counts_parallel(sessions, vocab);
}

CoherenceScores coherence_scores(std::span<const std::vector<std::size_t>> clusters, const CoherenceCounts& counts) {
  if (counts.sessions == 0) throw Error("coherence: no sessions");
  const double m = static_cast<double>(counts.sessions);
  CoherenceScores out;
  for (const auto& cluster : clusters) {
    for (auto s : cluster) {
      if (s >= counts.data_count) throw Error("coherence: slot out of range");
      if (counts.single[s] == 0)
        throw Error("coherence: data command slot " + std::to_string(s) + " never occurs in the corpus");
    }
    double uci = 0.0, umass = 0.0;
    std::size_t pairs = 0;
    // Clusters are rank-ordered, so a precedes b: a conditions the UMass term.
    for (std::size_t a = 0; a < cluster.size(); ++a) {
      for (std::size_t b = a + 1; b < cluster.size(); ++b) {
        const double mi = counts.single[cluster[a]];
        const double mj = counts.single[cluster[b]];
        const double mij = counts.pair_count(cluster[a], cluster[b]);
        uci += std::log((mij / m + kUciEpsilon) / ((mi / m) * (mj / m)));
        umass += std::log((mij + 1.0) / mi);
        ++pairs;
      }
    }
    out.uci.push_back(pairs ? uci / static_cast<double>(pairs) : 0.0);
    out.umass.push_back(pairs ? umass / static_cast<double>(pairs) : 0.0);
  }
  if (!clusters.empty()) {
    for (auto x : out.uci) out.uci_mean += x;
    for (auto x : out.umass) out.umass_mean += x;
    out.uci_mean /= static_cast<double>(clusters.size());
    out.umass_mean /= static_cast<double>(clusters.size());
  }
  return out;
}

namespace {

std::vector<double> min_max(const std::vector<double>& v) {
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.0);
  if (*hi > *lo)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / (*hi - *lo);
  return out;
}

}  // namespace

GoalCountScan select_goal_count(std::span<const Session> sessions, const Vocabulary& vocab,
                                std::span<const std::size_t> candidates, const BtmConfig& base, std::size_t top_n) {
  if (candidates.empty()) throw Error("select_goal_count: empty candidate range");
  const auto counts = coherence_counts(sessions, vocab);
  const auto n = candidates.size();
  GoalCountScan scan;
  scan.candidates.assign(candidates.begin(), candidates.end());
  scan.uci.assign(n, 0.0);
  scan.umass.assign(n, 0.0);
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i) {
    const auto c = static_cast<std::size_t>(i);
    try {
      auto config = base;
      config.k = candidates[c];
      if (config.alpha <= 0.0) config.alpha = 50.0 / static_cast<double>(config.k);
      const auto model = btm_fit(sessions, vocab, config);
      const auto clusters = goal_clusters(model, top_n);
      const auto scores = coherence_scores(clusters, counts);
      scan.uci[c] = scores.uci_mean;
      scan.umass[c] = scores.umass_mean;
    } catch (...) {
      errors[c] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const auto nu = min_max(scan.uci), nm = min_max(scan.umass);
  std::size_t best = 0;
  for (std::size_t i = 0; i < n; ++i) {
    scan.combined.push_back((nu[i] + nm[i]) / 2.0);
    if (i > 0 && (scan.combined[i] > scan.combined[best] ||
                  (scan.combined[i] == scan.combined[best] && candidates[i] < candidates[best])))
      best = i;
  }
  scan.chosen = candidates[best];
  return scan;
}

}  // namespace goalrec
