#include "goalrec/synthetic.hpp"

#include <cmath>
#include <string>

#include "goalrec/error.hpp"
#include "goalrec/random.hpp"

namespace goalrec {

namespace {

bool unit_interval(double p) { return p >= 0.0 && p <= 1.0; }

std::vector<double> zipf_weights(std::size_t n, double exponent) {
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) total += w[r] = std::pow(static_cast<double>(r + 1), -exponent);
  for (auto& x : w) x /= total;
  return w;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (k_true < 1) throw Error("synthetic: k_true must be >= 1");
  if (dc_count < k_true) throw Error("synthetic: dc_count must be >= k_true");
  if (sc_count < 1) throw Error("synthetic: sc_count must be >= 1");
  if (!(zipf_exponent > 0.0)) throw Error("synthetic: zipf_exponent must be > 0");
  if (sessions < 1) throw Error("synthetic: sessions must be >= 1");
  if (session_len_min < 1 || session_len_min > session_len_max)
    throw Error("synthetic: need 1 <= session_len_min <= session_len_max");
  if (!unit_interval(noise)) throw Error("synthetic: noise must lie in [0, 1]");
  if (!unit_interval(data_prob)) throw Error("synthetic: data_prob must lie in [0, 1]");
  if (!unit_interval(preferred_mass)) throw Error("synthetic: preferred_mass must lie in [0, 1]");
  if (!unit_interval(transition_prob)) throw Error("synthetic: transition_prob must lie in [0, 1]");
}

SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticCorpus out;
  auto& vocab = out.vocab;

  std::vector<CommandId> sc_ids, dc_ids;
  for (std::size_t j = 0; j < cfg.sc_count; ++j)
    sc_ids.push_back(vocab.add_software("sc" + std::to_string(j)).id);
  for (std::size_t r = 0; r < cfg.dc_count; ++r)
    dc_ids.push_back(vocab.add_data("cls" + std::to_string(r % 5), "var" + std::to_string(r)).id);

  const auto dc_weights = zipf_weights(cfg.dc_count, cfg.zipf_exponent);
  const auto sc_weights = zipf_weights(cfg.sc_count, cfg.zipf_exponent);

  // Balanced partition: walk ranks by decreasing weight, give each to the
  // goal with the least accumulated weight (lowest index on ties).
  const auto k = cfg.k_true;
  std::vector<std::vector<std::size_t>> members(k);
  std::vector<double> load(k, 0.0);
  std::vector<std::size_t> owner(cfg.dc_count), position(cfg.dc_count);
  for (std::size_t r = 0; r < cfg.dc_count; ++r) {
    std::size_t g = 0;
    for (std::size_t h = 1; h < k; ++h)
      if (load[h] < load[g]) g = h;
    owner[r] = g;
    position[r] = members[g].size();
    members[g].push_back(r);
    load[g] += dc_weights[r];
  }

  out.goal_support.resize(k);
  out.goal_distribution.assign(k, Distribution(cfg.dc_count, 0.0));
  for (std::size_t g = 0; g < k; ++g) {
    for (auto r : members[g]) out.goal_support[g].push_back(dc_ids[r]);
    auto& dist = out.goal_distribution[g];
    for (std::size_t r = 0; r < cfg.dc_count; ++r) {
      double preferred = owner[r] == g ? dc_weights[r] / load[g] : 0.0;
      dist[r] = cfg.preferred_mass * preferred + (1.0 - cfg.preferred_mass) * dc_weights[r];
    }
  }

  // Successor of a data command: the next rank in its own goal's subset.
  std::vector<std::size_t> successor(cfg.dc_count);
  for (std::size_t r = 0; r < cfg.dc_count; ++r) {
    const auto& own = members[owner[r]];
    successor[r] = own[(position[r] + 1) % own.size()];
  }

  Rng rng(cfg.seed);
  out.sessions.reserve(cfg.sessions);
  for (std::size_t s = 0; s < cfg.sessions; ++s) {
    Session session;
    session.user = "u" + std::to_string(s);
    const auto goal = static_cast<GoalId>(rng.below(k));
    session.goal = goal;
    const auto len = cfg.session_len_min + rng.below(cfg.session_len_max - cfg.session_len_min + 1);
    std::optional<std::size_t> prev;
    for (std::size_t i = 0; i < len; ++i) {
      if (rng.bernoulli(cfg.data_prob)) {
        std::size_t r;
        if (rng.bernoulli(cfg.noise))
          r = rng.categorical(dc_weights);
        else if (prev && rng.bernoulli(cfg.transition_prob))
          r = successor[*prev];
        else
          r = rng.categorical(out.goal_distribution[goal]);
        prev = r;
        session.commands.push_back(vocab.command(dc_ids[r]));
      } else {
        session.commands.push_back(vocab.command(sc_ids[rng.categorical(sc_weights)]));
      }
    }
    out.sessions.push_back(std::move(session));
  }
  return out;
}

}  // namespace goalrec
