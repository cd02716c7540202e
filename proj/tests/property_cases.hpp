#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "goalrec/baselines.hpp"
#include "goalrec/goals.hpp"
#include "goalrec/neural.hpp"
#include "goalrec/random.hpp"

namespace testing {

// Randomized corpora and models; every distribution-valued output is checked
// for length, non-negativity and unit mass.
struct DistributionAudit {
  std::size_t cases = 0;
  std::size_t distributions = 0;
  double worst_mass_error = 0.0;
  std::vector<std::string> failures;

  void check(const std::string& what, std::span<const double> d, std::size_t expected_size) {
    ++distributions;
    if (d.size() != expected_size) {
      failures.push_back(what + ": size " + std::to_string(d.size()) + " != " + std::to_string(expected_size));
      return;
    }
    double sum = 0.0;
    for (double x : d) {
      if (!(x >= 0.0) || !std::isfinite(x)) {
        failures.push_back(what + ": invalid entry");
        return;
      }
      sum += x;
    }
    const double err = std::abs(sum - 1.0);
    worst_mass_error = std::max(worst_mass_error, err);
    if (err > 1e-9) failures.push_back(what + ": mass " + std::to_string(sum));
  }
};

inline void audit_case(DistributionAudit& audit, std::uint64_t seed) {
  using namespace goalrec;
  Rng rng(seed);
  const std::string tag = "case " + std::to_string(seed);
  Vocabulary vocab;
  const auto dcs = 2 + rng.below(7), scs = 1 + rng.below(6);
  for (std::uint64_t i = 0; i < dcs; ++i) vocab.add_data("c" + std::to_string(rng.below(3)), "v" + std::to_string(i));
  for (std::uint64_t i = 0; i < scs; ++i) vocab.add_software("s" + std::to_string(i));
  auto random_command = [&] { return vocab.command(static_cast<CommandId>(rng.below(vocab.size()))); };

  const auto k = 1 + rng.below(4);
  const auto n_sessions = k + rng.below(12);
  std::vector<Session> sessions;
  for (std::uint64_t s = 0; s < n_sessions; ++s) {
    Session sess;
    sess.user = "u";
    const auto len = 2 + rng.below(14);
    for (std::uint64_t i = 0; i < len; ++i) sess.commands.push_back(random_command());
    // Guarantee at least one data command as a target.
    sess.commands.push_back(vocab.command(vocab.data_id(rng.below(dcs))));
    sess.goal = static_cast<GoalId>(s % k);
    sessions.push_back(std::move(sess));
  }
  const auto w = 1 + rng.below(5);
  const auto examples = windows(sessions, w);

  std::vector<std::vector<Command>> queries;
  for (int i = 0; i < 4; ++i) {
    std::vector<Command> q(1 + rng.below(6));
    for (auto& c : q) c = random_command();
    queries.push_back(std::move(q));
  }
  for (std::size_t i = 0; i < std::min<std::size_t>(examples.size(), 3); ++i) queries.push_back(examples[i].window);

  const auto top = Top50Model::fit(windows(sessions, 1), vocab, 1 + rng.below(60));
  audit.check(tag + " top50", top.distribution(), dcs);
  const auto m1 = MarkovModel::fit(sessions, vocab, 1, top);
  const auto m2 = MarkovModel::fit(sessions, vocab, 2, top);
  const auto cpt = CptModel::fit(sessions, vocab, {1 + rng.below(5)}, top);
  const auto ens = EnsembleModel::fit(sessions, k, [&](std::span<const Session> part) -> std::unique_ptr<Recommender> {
    return std::make_unique<MarkovModel>(MarkovModel::fit(part, vocab, 1, top));
  });
  for (const auto& q : queries) {
    audit.check(tag + " markov1", m1.predict_dist(q, std::nullopt), dcs);
    audit.check(tag + " markov2", m2.predict_dist(q, std::nullopt), dcs);
    audit.check(tag + " cpt", cpt.predict_dist(q, std::nullopt), dcs);
    audit.check(tag + " ensemble", ens.predict_dist(q, static_cast<GoalId>(rng.below(k))), dcs);
  }

  BtmConfig bc;
  bc.k = k;
  bc.alpha = 50.0 / static_cast<double>(k);
  bc.beta = 0.005 + rng.uniform();
  bc.iterations = 10;
  bc.burn_in = 5;
  bc.average_samples = rng.bernoulli(0.5);
  bc.seed = seed;
  const auto gm = btm_fit(sessions, vocab, bc);
  audit.check(tag + " theta", gm.theta, k);
  for (const auto& row : gm.phi) audit.check(tag + " phi", row, vocab.size());
  for (const auto& d : gm.goal_defs) audit.check(tag + " goal_def", d, dcs);

  ModelConfig mc;
  mc.vocab_size = vocab.size();
  mc.data_count = dcs;
  mc.embed_dim = 2 + rng.below(4);
  mc.hidden_dim = 2 + rng.below(5);
  mc.encoder = rng.bernoulli(0.5) ? Encoder::Recurrent : Encoder::Convolutional;
  mc.variant = static_cast<Variant>(rng.below(4));
  mc.goal_count = k;
  const auto w0 = 1 + rng.below(3);
  mc.filter_widths = {w0, w0 + 1 + rng.below(2)};
  mc.filter_count = 1 + rng.below(4);
  mc.seed = seed;
  auto params = Parameters::initialize(mc);
  // Occasionally push logits to large magnitudes.
  const double scale = rng.bernoulli(0.2) ? 30.0 : 1.0;
  for (auto& x : params.values()) x *= scale;
  for (const auto& q : queries) {
    const auto g = static_cast<GoalId>(rng.below(k));
    const auto goal = mc.goal_informed() ? std::optional<GoalId>(g) : std::nullopt;
    audit.check(tag + " neural", forward(params, q, goal), dcs);
    audit.check(tag + " neural train-mode", forward(params, q, goal, true, rng.next()), dcs);
  }
  ++audit.cases;
}

inline DistributionAudit audit_distributions(std::size_t cases, std::uint64_t seed) {
  DistributionAudit audit;
  for (std::size_t i = 0; i < cases; ++i) audit_case(audit, goalrec::mix_seed(seed, i));
  return audit;
}

}  // namespace testing
