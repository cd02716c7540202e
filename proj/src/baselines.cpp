#include "goalrec/baselines.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "goalrec/error.hpp"
#include "goalrec/text_io.hpp"

namespace goalrec {

namespace {

Distribution normalized(const MarkovModel::Counts& counts, std::size_t n) {
  Distribution d(n, 0.0);
  std::uint64_t total = 0;
  for (auto [slot, c] : counts) total += c;
  for (auto [slot, c] : counts) d[slot] = static_cast<double>(c) / static_cast<double>(total);
  return d;
}

void write_counts(std::ostream& out, const MarkovModel::Counts& counts) {
  out << counts.size();
  for (auto [slot, c] : counts) out << ' ' << slot << ':' << c;
  out << '\n';
}

MarkovModel::Counts read_counts(std::istream& fields, std::size_t data_count) {
  std::size_t n = 0;
  if (!(fields >> n)) throw Error("markov: malformed count list");
  MarkovModel::Counts counts;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t slot = 0;
    char colon = 0;
    std::uint64_t c = 0;
    if (!(fields >> slot >> colon >> c) || colon != ':' || slot >= data_count || c == 0)
      throw Error("markov: malformed count entry");
    counts[slot] = c;
  }
  return counts;
}

void read_model_header(std::istream& in, std::string_view kind) {
  auto line = read_line(in, "model header");
  std::string expected = "goalrec-model " + std::string(kind) + " 1";
  if (line != expected) throw Error("expected '" + expected + "', got '" + line + "'");
}

}  // namespace

// ---------------------------------------------------------------- Top-50

Top50Model::Top50Model(std::vector<std::uint64_t> target_counts, std::size_t top)
    : counts_(std::move(target_counts)), top_(top) {
  if (top_ == 0) throw Error("top50: top must be >= 1");
  const auto total = std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
  if (total == 0) throw Error("top50: no training targets");
  std::vector<std::size_t> order(counts_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [this](std::size_t a, std::size_t b) { return counts_[a] > counts_[b]; });
  order.resize(std::min(top_, order.size()));
  std::uint64_t kept = 0;
  for (auto s : order) kept += counts_[s];
  dist_.assign(counts_.size(), 0.0);
  for (auto s : order) dist_[s] = static_cast<double>(counts_[s]) / static_cast<double>(kept);
}

Top50Model Top50Model::fit(std::span<const SequenceExample> train, const Vocabulary& vocab,
                           std::size_t top) {
  std::vector<std::uint64_t> counts(vocab.data_count(), 0);
  for (const auto& ex : train) ++counts[vocab.slot(ex.target.id)];
  return Top50Model(std::move(counts), top);
}

void Top50Model::save(std::ostream& out) const {
  out << "goalrec-model top50 1\n";
  out << "top " << top_ << " D " << counts_.size() << '\n';
  for (std::size_t i = 0; i < counts_.size(); ++i) out << (i ? " " : "") << counts_[i];
  out << '\n';
}

Top50Model Top50Model::load_body(std::istream& in) {
  std::istringstream header(read_line(in, "top50 header"));
  std::string tt, td;
  std::size_t top = 0, d = 0;
  if (!(header >> tt >> top >> td >> d) || tt != "top" || td != "D") throw Error("malformed top50 header");
  std::istringstream row(read_line(in, "top50 counts"));
  std::vector<std::uint64_t> counts(d);
  for (auto& c : counts)
    if (!(row >> c)) throw Error("top50: expected " + std::to_string(d) + " counts");
  return Top50Model(std::move(counts), top);
}

// ---------------------------------------------------------------- Markov

std::vector<MarkovPair> markov_biterms(std::span<const Command> session) {
  std::vector<MarkovPair> out;
  std::optional<std::size_t> prev_data;
  std::size_t since = 0;  // first position after the previous data command
  for (std::size_t i = 0; i < session.size(); ++i) {
    if (!session[i].is_data()) continue;
    if (prev_data) out.push_back({i, session[*prev_data].id, *prev_data, session[i].id});
    for (std::size_t j = since; j < i; ++j) out.push_back({i, session[j].id, j, session[i].id});
    prev_data = i;
    since = i + 1;
  }
  return out;
}

MarkovModel MarkovModel::fit(std::span<const Session> sessions, const Vocabulary& vocab, int order,
                             Top50Model backoff) {
  if (order != 1 && order != 2) throw Error("markov: order must be 1 or 2");
  if (backoff.output_size() != vocab.data_count()) throw Error("markov: backoff size mismatch");
  MarkovModel m;
  m.order_ = order;
  m.data_count_ = vocab.data_count();
  m.backoff_ = std::move(backoff);
  for (const auto& s : sessions) {
    for (const auto& b : markov_biterms(s.commands)) {
      const auto slot = vocab.slot(b.consequent);
      ++m.pairs_[b.context][slot];
      if (order == 2 && b.context_position > 0)
        ++m.triples_[{s.commands[b.context_position - 1].id, b.context}][slot];
    }
  }
  return m;
}

Distribution MarkovModel::predict_dist(std::span<const Command> window, std::optional<GoalId>) const {
  if (window.empty()) return backoff_.distribution();
  if (order_ == 2 && window.size() >= 2) {
    auto it = triples_.find({window[window.size() - 2].id, window.back().id});
    if (it != triples_.end()) return normalized(it->second, data_count_);
  }
  auto it = pairs_.find(window.back().id);
  if (it != pairs_.end()) return normalized(it->second, data_count_);
  return backoff_.distribution();
}

void MarkovModel::save(std::ostream& out) const {
  out << "goalrec-model " << kind() << " 1\n";
  out << "D " << data_count_ << '\n';
  backoff_.save(out);
  out << "pairs " << pairs_.size() << '\n';
  for (const auto& [ctx, counts] : pairs_) {
    out << ctx << ' ';
    write_counts(out, counts);
  }
  out << "triples " << triples_.size() << '\n';
  for (const auto& [ctx, counts] : triples_) {
    out << ctx.first << ' ' << ctx.second << ' ';
    write_counts(out, counts);
  }
}

MarkovModel MarkovModel::load_body(std::istream& in, int order) {
  MarkovModel m;
  m.order_ = order;
  std::istringstream header(read_line(in, "markov header"));
  std::string td;
  if (!(header >> td >> m.data_count_) || td != "D") throw Error("malformed markov header");
  read_model_header(in, "top50");
  m.backoff_ = Top50Model::load_body(in);
  auto section = [&in](std::string_view name) {
    std::istringstream h(read_line(in, name));
    std::string tag;
    std::size_t n = 0;
    if (!(h >> tag >> n) || tag != name) throw Error("markov: expected section " + std::string(name));
    return n;
  };
  const auto n_pairs = section("pairs");
  for (std::size_t i = 0; i < n_pairs; ++i) {
    std::istringstream row(read_line(in, "pair counts"));
    CommandId ctx = 0;
    if (!(row >> ctx)) throw Error("markov: malformed pair row");
    m.pairs_[ctx] = read_counts(row, m.data_count_);
  }
  const auto n_triples = section("triples");
  for (std::size_t i = 0; i < n_triples; ++i) {
    std::istringstream row(read_line(in, "triple counts"));
    CommandId a = 0, b = 0;
    if (!(row >> a >> b)) throw Error("markov: malformed triple row");
    m.triples_[{a, b}] = read_counts(row, m.data_count_);
  }
  return m;
}

// ---------------------------------------------------------------- ensemble

EnsembleModel::EnsembleModel(std::vector<std::unique_ptr<Recommender>> members)
    : members_(std::move(members)) {
  if (members_.empty()) throw Error("ensemble: no members");
  for (const auto& m : members_)
    if (!m || m->output_size() != members_.front()->output_size())
      throw Error("ensemble: members disagree on output size");
}

EnsembleModel EnsembleModel::fit(std::span<const Session> sessions, std::size_t k, const Fitter& fitter) {
  if (k == 0) throw Error("ensemble: k must be >= 1");
  std::vector<std::vector<Session>> parts(k);
  for (const auto& s : sessions) {
    if (!s.goal) throw Error("ensemble: session without an assigned goal");
    if (*s.goal >= k) throw Error("ensemble: session goal out of range");
    parts[*s.goal].push_back(s);
  }
  std::vector<std::unique_ptr<Recommender>> members(k);
  for (std::size_t g = 0; g < k; ++g) {
    if (parts[g].empty()) throw Error("ensemble: goal " + std::to_string(g) + " has no sessions");
    members[g] = fitter(parts[g]);
  }
  return EnsembleModel(std::move(members));
}

std::size_t EnsembleModel::output_size() const {
  return members_.empty() ? 0 : members_.front()->output_size();
}

const Recommender& EnsembleModel::member(GoalId g) const {
  if (g >= members_.size())
    throw Error("ensemble: goal " + std::to_string(g) + " out of range (k = " +
                std::to_string(members_.size()) + ")");
  return *members_[g];
}

Distribution EnsembleModel::predict_dist(std::span<const Command> window, std::optional<GoalId> goal) const {
  if (!goal) throw Error("ensemble: prediction needs a goal");
  return member(*goal).predict_dist(window, goal);
}

void EnsembleModel::save(std::ostream& out) const {
  out << "goalrec-model ensemble 1\n";
  out << "members " << members_.size() << '\n';
  for (const auto& m : members_) m->save(out);
}

EnsembleModel EnsembleModel::load_body(std::istream& in) {
  std::istringstream h(read_line(in, "ensemble header"));
  std::string tag;
  std::size_t n = 0;
  if (!(h >> tag >> n) || tag != "members") throw Error("malformed ensemble header");
  std::vector<std::unique_ptr<Recommender>> members;
  for (std::size_t i = 0; i < n; ++i) members.push_back(load_recommender(in));
  return EnsembleModel(std::move(members));
}

}  // namespace goalrec
