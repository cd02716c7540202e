#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "goalrec/error.hpp"
#include "goalrec/goals.hpp"
#include "goalrec/text_io.hpp"

namespace goalrec {

std::vector<Biterm> extract_biterms(std::span<const Command> commands, std::size_t cap,
                                    std::uint64_t seed) {
  std::vector<CommandId> types;
  types.reserve(commands.size());
  for (auto c : commands) types.push_back(c.id);
  std::sort(types.begin(), types.end());
  types.erase(std::unique(types.begin(), types.end()), types.end());

  std::vector<Biterm> out;
  if (types.size() < 2) return out;
  out.reserve(types.size() * (types.size() - 1) / 2);
  for (std::size_t i = 0; i < types.size(); ++i)
    for (std::size_t j = i + 1; j < types.size(); ++j) out.emplace_back(types[i], types[j]);

  if (out.size() > cap) {
    // Partial Fisher-Yates picks a uniform subset; restore canonical order.
    Rng rng(seed);
    for (std::size_t i = 0; i < cap; ++i) {
      auto j = i + rng.below(out.size() - i);
      std::swap(out[i], out[j]);
    }
    out.resize(cap);
    std::sort(out.begin(), out.end());
  }
  return out;
}

void BtmConfig::validate() const {
  if (k < 1) throw Error("btm: k must be >= 1");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw Error("btm: alpha and beta must be > 0");
  if (iterations <= burn_in) throw Error("btm: iterations must exceed burn_in");
  if (biterm_cap < 1) throw Error("btm: biterm_cap must be >= 1");
}

BtmSampler::BtmSampler(std::vector<Biterm> biterms, std::size_t vocab_size, const BtmConfig& config)
    : biterms_(std::move(biterms)),
      vocab_size_(vocab_size),
      config_(config),
      z_(biterms_.size()),
      n_topic_(config.k, 0),
      n_word_topic_(vocab_size * config.k, 0),
      weights_(config.k),
      rng_(config.seed) {
  config_.validate();
  if (biterms_.empty()) throw Error("btm: corpus has no biterms");
  const auto k = config_.k;
  for (std::size_t b = 0; b < biterms_.size(); ++b) {
    const auto& bt = biterms_[b];
    if (bt.second >= vocab_size_) throw Error("btm: biterm command outside vocabulary");
    auto t = static_cast<std::uint32_t>(rng_.below(k));
    z_[b] = t;
    ++n_topic_[t];
    ++n_word_topic_[bt.first * k + t];
    ++n_word_topic_[bt.second * k + t];
  }
}

void BtmSampler::sweep() {
  const auto k = config_.k;
  const double vbeta = static_cast<double>(vocab_size_) * config_.beta;
  for (std::size_t b = 0; b < biterms_.size(); ++b) {
    const auto& bt = biterms_[b];
    auto* w1 = &n_word_topic_[bt.first * k];
    auto* w2 = &n_word_topic_[bt.second * k];
    const auto old = z_[b];
    --n_topic_[old];
    --w1[old];
    --w2[old];
    for (std::size_t t = 0; t < k; ++t) {
      const double nt = static_cast<double>(n_topic_[t]);
      weights_[t] = (nt + config_.alpha) * (static_cast<double>(w1[t]) + config_.beta) *
                    (static_cast<double>(w2[t]) + config_.beta) /
                    ((2.0 * nt + vbeta) * (2.0 * nt + 1.0 + vbeta));
    }
    const auto t = static_cast<std::uint32_t>(rng_.categorical(weights_));
    z_[b] = t;
    ++n_topic_[t];
    ++w1[t];
    ++w2[t];
  }
}

std::vector<std::vector<double>> BtmSampler::estimate_phi() const {
  const auto k = config_.k;
  const double vbeta = static_cast<double>(vocab_size_) * config_.beta;
  std::vector<std::vector<double>> phi(k, std::vector<double>(vocab_size_));
  for (std::size_t t = 0; t < k; ++t) {
    const double denom = 2.0 * static_cast<double>(n_topic_[t]) + vbeta;
    for (std::size_t w = 0; w < vocab_size_; ++w)
      phi[t][w] = (static_cast<double>(n_word_topic_[w * k + t]) + config_.beta) / denom;
  }
  return phi;
}

std::vector<double> BtmSampler::estimate_theta() const {
  const auto k = config_.k;
  const double denom = static_cast<double>(biterms_.size()) + static_cast<double>(k) * config_.alpha;
  std::vector<double> theta(k);
  for (std::size_t t = 0; t < k; ++t)
    theta[t] = (static_cast<double>(n_topic_[t]) + config_.alpha) / denom;
  return theta;
}

std::vector<Biterm> corpus_biterms(std::span<const Session> sessions, const BtmConfig& config) {
  std::vector<Biterm> all;
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    auto b = extract_biterms(sessions[s].commands, config.biterm_cap, mix_seed(config.seed, s));
    all.insert(all.end(), b.begin(), b.end());
  }
  return all;
}

Distribution goal_definition(std::span<const double> phi_row, const Vocabulary& vocab) {
  if (phi_row.size() != vocab.size()) throw Error("goal_definition: row does not match vocabulary");
  Distribution def(vocab.data_count());
  double mass = 0.0;
  for (std::size_t s = 0; s < def.size(); ++s) mass += def[s] = phi_row[vocab.data_id(s)];
  if (!(mass > 0.0)) throw Error("goal_definition: no probability mass on data commands");
  for (auto& p : def) p /= mass;
  return def;
}

GoalModel btm_fit(std::span<const Session> sessions, const Vocabulary& vocab, const BtmConfig& config) {
  config.validate();
  BtmSampler sampler(corpus_biterms(sessions, config), vocab.size(), config);

  GoalModel model;
  model.vocab_size = vocab.size();
  model.alpha = config.alpha;
  model.beta = config.beta;
  model.seed = config.seed;

  std::vector<std::vector<double>> phi_sum(config.k, std::vector<double>(vocab.size(), 0.0));
  std::vector<double> theta_sum(config.k, 0.0);
  std::size_t samples = 0;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    sampler.sweep();
    if (config.average_samples && it >= config.burn_in) {
      auto phi = sampler.estimate_phi();
      auto theta = sampler.estimate_theta();
      for (std::size_t t = 0; t < config.k; ++t) {
        theta_sum[t] += theta[t];
        for (std::size_t w = 0; w < vocab.size(); ++w) phi_sum[t][w] += phi[t][w];
      }
      ++samples;
    }
  }
  if (config.average_samples) {
    const double inv = 1.0 / static_cast<double>(samples);
    for (auto& row : phi_sum)
      for (auto& x : row) x *= inv;
    for (auto& x : theta_sum) x *= inv;
    model.phi = std::move(phi_sum);
    model.theta = std::move(theta_sum);
  } else {
    model.phi = sampler.estimate_phi();
    model.theta = sampler.estimate_theta();
  }
  for (const auto& row : model.phi) model.goal_defs.push_back(goal_definition(row, vocab));
  return model;
}

GoalId assign_goal(const GoalModel& model, std::span<const Command> commands, std::size_t biterm_cap) {
  const auto k = model.k();
  if (k == 0) throw Error("assign_goal: empty goal model");
  std::vector<double> score(k, 0.0);
  auto biterms = extract_biterms(commands, biterm_cap, model.seed);
  if (biterms.empty()) {
    score = model.theta;
  } else {
    std::vector<double> post(k);
    for (const auto& b : biterms) {
      if (b.second >= model.vocab_size) throw Error("assign_goal: command outside model vocabulary");
      double total = 0.0;
      for (std::size_t t = 0; t < k; ++t)
        total += post[t] = model.theta[t] * model.phi[t][b.first] * model.phi[t][b.second];
      if (!(total > 0.0)) continue;
      for (std::size_t t = 0; t < k; ++t) score[t] += post[t] / total;
    }
  }
  return static_cast<GoalId>(std::max_element(score.begin(), score.end()) - score.begin());
}

GoalId assign_goal(const GoalModel& model, const Session& session, std::size_t biterm_cap) {
  return assign_goal(model, std::span<const Command>(session.commands), biterm_cap);
}

std::vector<std::vector<std::size_t>> goal_clusters(const GoalModel& model, std::size_t top_n) {
  std::vector<std::vector<std::size_t>> clusters;
  for (const auto& def : model.goal_defs) {
    std::vector<std::size_t> order(def.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&def](std::size_t a, std::size_t b) { return def[a] > def[b]; });
    order.resize(std::min(top_n, order.size()));
    clusters.push_back(std::move(order));
  }
  return clusters;
}

void GoalModel::save(std::ostream& out) const {
  const auto dc = goal_defs.empty() ? 0 : goal_defs.front().size();
  out << "goalrec-goals 1\n";
  out << "V " << vocab_size << " K " << k() << " D " << dc << " alpha " << format_double(alpha)
      << " beta " << format_double(beta) << " seed " << seed << '\n';
  out << "phi\n";
  for (const auto& row : phi) write_row(out, row);
  out << "theta\n";
  write_row(out, theta);
  out << "goal_defs\n";
  for (const auto& row : goal_defs) write_row(out, row);
  out << "labels " << labels.size() << '\n';
  for (const auto& l : labels) out << l << '\n';
}

GoalModel GoalModel::load(std::istream& in) {
  expect_line(in, "goalrec-goals 1");
  std::istringstream header(read_line(in, "goal model header"));
  std::string tv, tk, td, ta, tb, ts, alpha_s, beta_s;
  std::size_t v = 0, k = 0, d = 0;
  GoalModel m;
  if (!(header >> tv >> v >> tk >> k >> td >> d >> ta >> alpha_s >> tb >> beta_s >> ts >> m.seed) ||
      tv != "V" || tk != "K" || td != "D" || ta != "alpha" || tb != "beta" || ts != "seed")
    throw Error("malformed goal model header");
  m.vocab_size = v;
  m.alpha = parse_double(alpha_s);
  m.beta = parse_double(beta_s);
  expect_line(in, "phi");
  for (std::size_t t = 0; t < k; ++t) m.phi.push_back(read_row(in, v, "phi"));
  expect_line(in, "theta");
  m.theta = read_row(in, k, "theta");
  expect_line(in, "goal_defs");
  for (std::size_t t = 0; t < k; ++t) m.goal_defs.push_back(read_row(in, d, "goal_defs"));
  std::istringstream lh(read_line(in, "labels"));
  std::string tag;
  std::size_t n = 0;
  if (!(lh >> tag >> n) || tag != "labels" || (n != 0 && n != k)) throw Error("malformed labels section");
  for (std::size_t i = 0; i < n; ++i) m.labels.push_back(read_line(in, "label"));
  return m;
}

}  // namespace goalrec
