#include "goalrec/recommender.hpp"

#include <algorithm>
#include <numeric>

#include "goalrec/error.hpp"

namespace goalrec {

std::vector<Scored> top_k(std::span<const double> dist, std::size_t k) {
  std::vector<std::size_t> order(dist.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  auto better = [&dist](std::size_t a, std::size_t b) {
    return dist[a] > dist[b] || (dist[a] == dist[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  std::vector<Scored> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({order[i], dist[order[i]]});
  return out;
}

std::size_t argmax(std::span<const double> dist) {
  if (dist.empty()) throw Error("argmax of an empty distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < dist.size(); ++i)
    if (dist[i] > dist[best]) best = i;
  return best;
}

}  // namespace goalrec
