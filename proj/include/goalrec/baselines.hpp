#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "goalrec/corpus.hpp"
#include "goalrec/recommender.hpp"

namespace goalrec {

// Window-independent target-frequency model over the `top` most frequent
// data commands.
class Top50Model : public Recommender {
 public:
  static constexpr std::size_t kDefaultTop = 50;

  Top50Model() = default;
  Top50Model(std::vector<std::uint64_t> target_counts, std::size_t top = kDefaultTop);

  static Top50Model fit(std::span<const SequenceExample> train, const Vocabulary& vocab,
                        std::size_t top = kDefaultTop);

  std::string_view kind() const override { return "top50"; }
  std::size_t output_size() const override { return dist_.size(); }
  Distribution predict_dist(std::span<const Command>, std::optional<GoalId>) const override {
    return dist_;
  }
  void save(std::ostream& out) const override;
  static Top50Model load_body(std::istream& in);

  const Distribution& distribution() const noexcept { return dist_; }
  std::span<const std::uint64_t> counts() const noexcept { return counts_; }

 private:
  std::vector<std::uint64_t> counts_;
  std::size_t top_ = kDefaultTop;
  Distribution dist_;
};

// (context command, consequent data command) pairs: every data command is
// paired with each command since the previous data command and with the
// previous data command itself.
struct MarkovPair {
  std::size_t position = 0;  // index of the consequent in the session
  CommandId context = 0;
  std::size_t context_position = 0;
  CommandId consequent = 0;
};
std::vector<MarkovPair> markov_biterms(std::span<const Command> session);

// Order 1 conditions on the last window command. Order 2 conditions on the
// last two raw commands, counting ((c[j-1], c[j]), dc) for every context
// position j of each pair above. Unseen contexts back off to order 1 and then
// to Top-50.
class MarkovModel : public Recommender {
 public:
  using Counts = std::map<std::size_t, std::uint64_t>;  // slot -> count

  MarkovModel() = default;
  static MarkovModel fit(std::span<const Session> sessions, const Vocabulary& vocab, int order,
                         Top50Model backoff);

  std::string_view kind() const override { return order_ == 1 ? "markov1" : "markov2"; }
  std::size_t output_size() const override { return data_count_; }
  Distribution predict_dist(std::span<const Command> window, std::optional<GoalId> goal) const override;
  void save(std::ostream& out) const override;
  static MarkovModel load_body(std::istream& in, int order);

  int order() const noexcept { return order_; }
  const std::map<CommandId, Counts>& pair_counts() const noexcept { return pairs_; }
  const std::map<std::pair<CommandId, CommandId>, Counts>& triple_counts() const noexcept {
    return triples_;
  }
  const Top50Model& backoff() const noexcept { return backoff_; }

 private:
  int order_ = 1;
  std::size_t data_count_ = 0;
  std::map<CommandId, Counts> pairs_;
  std::map<std::pair<CommandId, CommandId>, Counts> triples_;
  Top50Model backoff_;
};

struct CptConfig {
  std::size_t suffix_length = 4;
};

// Compact prediction tree: prediction trie over the training sessions, an
// inverted index from command to the sessions containing it, and a lookup
// table from session to its trie node.
class CptModel : public Recommender {
 public:
  struct Node {
    CommandId item = 0;
    std::uint32_t parent = 0;
    std::map<CommandId, std::uint32_t> children;
  };

  CptModel() = default;
  static CptModel fit(std::span<const Session> sessions, const Vocabulary& vocab, const CptConfig& config,
                      Top50Model backoff);

  std::string_view kind() const override { return "cpt"; }
  std::size_t output_size() const override { return kinds_.empty() ? 0 : data_count_; }
  // Scores data commands following the longest matching suffix (at most
  // suffix_length, shortened until some candidate exists) by 1 / distance.
  Distribution predict_dist(std::span<const Command> window, std::optional<GoalId> goal) const override;
  void save(std::ostream& out) const override;
  static CptModel load_body(std::istream& in);

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t sequence_count() const noexcept { return lookup_.size(); }
  std::span<const std::uint32_t> sessions_with(CommandId c) const;
  std::vector<Command> reconstruct(std::size_t sequence) const;

 private:
  CptConfig config_;
  std::size_t data_count_ = 0;
  std::vector<Node> nodes_;                       // node 0 is the root
  std::vector<std::uint32_t> lookup_;             // sequence -> last node
  std::map<CommandId, std::vector<std::uint32_t>> inverted_;
  std::vector<CommandKind> kinds_;                // per command id
  std::vector<std::int64_t> slots_;               // per command id, -1 for software
  Top50Model backoff_;
};

// One base model per goal; prediction dispatches on the supplied goal.
class EnsembleModel : public Recommender {
 public:
  using Fitter = std::function<std::unique_ptr<Recommender>(std::span<const Session>)>;

  EnsembleModel() = default;
  explicit EnsembleModel(std::vector<std::unique_ptr<Recommender>> members);

  // Sessions must carry goals in 0..k-1; every partition must be non-empty.
  static EnsembleModel fit(std::span<const Session> sessions, std::size_t k, const Fitter& fitter);

  std::string_view kind() const override { return "ensemble"; }
  std::size_t output_size() const override;
  Distribution predict_dist(std::span<const Command> window, std::optional<GoalId> goal) const override;
  void save(std::ostream& out) const override;
  static EnsembleModel load_body(std::istream& in);

  std::size_t size() const noexcept { return members_.size(); }
  const Recommender& member(GoalId g) const;

 private:
  std::vector<std::unique_ptr<Recommender>> members_;
};

}  // namespace goalrec
