#include "goalrec/kernels.hpp"

#include <algorithm>
#include <exception>

#include <omp.h>

#include "goalrec/error.hpp"

namespace goalrec::kernels {

namespace {

// Runs body(i) for i in [0, n) in parallel; rethrows the exception of the
// lowest failing index so error reporting does not depend on scheduling.
template <class Body>
void parallel_for(std::size_t n, Body body) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<std::size_t> distinct_slots(const Session& s, const Vocabulary& vocab) {
  std::vector<std::size_t> slots;
  for (auto c : s.commands)
    if (c.is_data()) slots.push_back(vocab.slot(c.id));
  std::sort(slots.begin(), slots.end());
  slots.erase(std::unique(slots.begin(), slots.end()), slots.end());
  return slots;
}

void add_session(CoherenceCounts& out, const std::vector<std::size_t>& slots) {
  const auto d = out.data_count;
  for (std::size_t a = 0; a < slots.size(); ++a) {
    ++out.single[slots[a]];
    for (std::size_t b = a + 1; b < slots.size(); ++b) {
      ++out.pair[slots[a] * d + slots[b]];
      ++out.pair[slots[b] * d + slots[a]];
    }
  }
}

CoherenceCounts empty_counts(std::size_t sessions, const Vocabulary& vocab) {
  CoherenceCounts out;
  out.data_count = vocab.data_count();
  out.sessions = sessions;
  out.single.assign(out.data_count, 0);
  out.pair.assign(out.data_count * out.data_count, 0);
  return out;
}

}  // namespace

double batch_gradient_serial(const Parameters& params, std::span<const GradientItem> items, bool train_mode,
                             std::span<double> grad) {
  if (grad.size() != params.size()) throw Error("gradient buffer does not match the parameters");
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> scratch(params.size());
  double loss = 0.0;
  for (const auto& it : items) {
    std::fill(scratch.begin(), scratch.end(), 0.0);
    loss += loss_and_gradient(params, it.window, it.goal, it.loss, scratch, train_mode, it.dropout_seed);
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += scratch[k];
  }
  return loss;
}

double batch_gradient_parallel(const Parameters& params, std::span<const GradientItem> items, bool train_mode,
                               std::span<double> grad) {
  if (grad.size() != params.size()) throw Error("gradient buffer does not match the parameters");
  const auto n = items.size();
  const auto p = params.size();
  // Items are processed in blocks; each coordinate is still summed in item
  // order, so the result matches the serial kernel for any thread count.
  const auto block = std::min<std::size_t>(n, 2 * static_cast<std::size_t>(omp_get_max_threads()));
  std::vector<double> per_item(block * p);
  std::vector<double> losses(n, 0.0);
  std::fill(grad.begin(), grad.end(), 0.0);
  const auto count = static_cast<std::int64_t>(p);
  for (std::size_t start = 0; start < n; start += block) {
    const auto m = std::min(block, n - start);
    std::fill(per_item.begin(), per_item.end(), 0.0);
    parallel_for(m, [&](std::size_t j) {
      const auto& it = items[start + j];
      losses[start + j] = loss_and_gradient(params, it.window, it.goal, it.loss,
                                            std::span<double>(per_item).subspan(j * p, p), train_mode,
                                            it.dropout_seed);
    });
#pragma omp parallel for schedule(static)
    for (std::int64_t k = 0; k < count; ++k) {
      double s = grad[static_cast<std::size_t>(k)];
      for (std::size_t j = 0; j < m; ++j) s += per_item[j * p + static_cast<std::size_t>(k)];
      grad[static_cast<std::size_t>(k)] = s;
    }
  }
  double loss = 0.0;
  for (auto l : losses) loss += l;
  return loss;
}

std::vector<std::size_t> predict_top1_serial(const Recommender& model, std::span<const Query> queries) {
  std::vector<std::size_t> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(model.predict(q.window, q.goal));
  return out;
}

std::vector<std::size_t> predict_top1_parallel(const Recommender& model, std::span<const Query> queries) {
  std::vector<std::size_t> out(queries.size());
  parallel_for(queries.size(), [&](std::size_t i) { out[i] = model.predict(queries[i].window, queries[i].goal); });
  return out;
}

CoherenceCounts coherence_counts_serial(std::span<const Session> sessions, const Vocabulary& vocab) {
  auto out = empty_counts(sessions.size(), vocab);
  for (const auto& s : sessions) add_session(out, distinct_slots(s, vocab));
  return out;
}

CoherenceCounts coherence_counts_parallel(std::span<const Session> sessions, const Vocabulary& vocab) {
  std::vector<std::vector<std::size_t>> slots(sessions.size());
  parallel_for(sessions.size(), [&](std::size_t i) { slots[i] = distinct_slots(sessions[i], vocab); });

  // Integer counts: per-thread partial tables merge exactly in any order.
  auto out = empty_counts(sessions.size(), vocab);
  const auto count = static_cast<std::int64_t>(sessions.size());
#pragma omp parallel
  {
    auto local = empty_counts(sessions.size(), vocab);
#pragma omp for schedule(static) nowait
    for (std::int64_t i = 0; i < count; ++i) add_session(local, slots[static_cast<std::size_t>(i)]);
#pragma omp critical(goalrec_coherence_merge)
    {
      for (std::size_t k = 0; k < out.single.size(); ++k) out.single[k] += local.single[k];
      for (std::size_t k = 0; k < out.pair.size(); ++k) out.pair[k] += local.pair[k];
    }
  }
  return out;
}

}  // namespace goalrec::kernels
