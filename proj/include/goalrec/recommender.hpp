#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "goalrec/corpus.hpp"

namespace goalrec {

struct Scored {
  std::size_t slot = 0;
  double p = 0.0;
};

// k highest entries, ties to the lower slot.
std::vector<Scored> top_k(std::span<const double> dist, std::size_t k);
std::size_t argmax(std::span<const double> dist);

class Recommender {
 public:
  virtual ~Recommender() = default;

  virtual std::string_view kind() const = 0;
  // Number of data-command slots in every predicted distribution.
  virtual std::size_t output_size() const = 0;
  virtual Distribution predict_dist(std::span<const Command> window,
                                    std::optional<GoalId> goal) const = 0;
  // Typed text dump; read back with load_recommender.
  virtual void save(std::ostream& out) const = 0;

  std::vector<Scored> recommend(std::span<const Command> window, std::optional<GoalId> goal,
                                std::size_t k) const {
    return top_k(predict_dist(window, goal), k);
  }
  std::size_t predict(std::span<const Command> window, std::optional<GoalId> goal) const {
    return argmax(predict_dist(window, goal));
  }
};

std::unique_ptr<Recommender> load_recommender(std::istream& in);

}  // namespace goalrec
