#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>

#include "goalrec/digest.hpp"
#include "goalrec/error.hpp"
#include "goalrec/kernels.hpp"
#include "goalrec/neural.hpp"
#include "goalrec/random.hpp"
#include "goalrec/text_io.hpp"

namespace goalrec {

namespace {

struct Objective {
  double alpha = 1.0;
  std::span<const double> goal_def;
  std::optional<GoalId> forced_goal;  // fine-tuning feeds its own goal
  bool select_by_loss = false;
  bool freeze_embeddings = false;
};

std::string train_digest(const TrainConfig& tc, const Objective& obj) {
  std::ostringstream s;
  s << "lr=" << format_double(tc.learning_rate) << " momentum=" << format_double(tc.momentum)
    << " wd=" << format_double(tc.weight_decay) << " batch=" << tc.batch_size << " epochs=" << tc.epochs
    << " alpha=" << format_double(obj.alpha) << " freeze=" << obj.freeze_embeddings << " seed=" << tc.seed;
  if (obj.forced_goal) s << " goal=" << *obj.forced_goal;
  return sha256_hex(s.str()).substr(0, 16);
}

struct Validation {
  double accuracy = 0.0;
  double loss = 0.0;
};

Validation validate(const Parameters& params, std::span<const SequenceExample> data, const Objective& obj,
                    const Vocabulary& vocab) {
  const auto n = data.size();
  std::vector<double> loss(n, 0.0);
  std::vector<std::uint8_t> hit(n, 0);
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      const auto& ex = data[k];
      const auto goal = obj.forced_goal ? obj.forced_goal : ex.goal;
      const auto p = forward(params, ex.window, goal);
      const auto slot = vocab.slot(ex.target.id);
      hit[k] = argmax(p) == slot;
      loss[k] = obj.alpha == 1.0 ? loss_ce(p, slot) : loss_combined(p, slot, obj.goal_def, obj.alpha);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  Validation v;
  for (std::size_t i = 0; i < n; ++i) {
    v.accuracy += hit[i];
    v.loss += loss[i];
  }
  v.accuracy /= static_cast<double>(n);
  v.loss /= static_cast<double>(n);
  return v;
}

Parameters optimize(Parameters params, std::span<const SequenceExample> train_set,
                    std::span<const SequenceExample> validation, const TrainConfig& tc, const Objective& obj,
                    const Vocabulary& vocab, const EpochCallback& on_epoch) {
  tc.validate();
  if (train_set.empty()) throw Error("training set is empty");
  if (params.config().data_count != vocab.data_count())
    throw Error("model output size does not match the vocabulary's data commands");
  params.set_train_digest(train_digest(tc, obj));
  if (tc.epochs == 0) return params;

  const auto mask = params.trainable_mask(obj.freeze_embeddings);
  std::vector<std::uint8_t> decay(params.size(), 0);
  for (const auto& b : params.blocks())
    if (b.role == BlockRole::Weight) std::fill_n(decay.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size(), 1);

  const auto n = train_set.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> velocity(params.size(), 0.0), grad(params.size(), 0.0);
  std::vector<kernels::GradientItem> batch;
  Rng rng(tc.seed);

  Parameters best = params;
  double best_score = 0.0;
  bool have_best = false;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0, b = 0; start < n; start += tc.batch_size, ++b) {
      const auto end = std::min(n, start + tc.batch_size);
      batch.clear();
      for (std::size_t pos = start; pos < end; ++pos) {
        const auto& ex = train_set[order[pos]];
        kernels::GradientItem item;
        item.window = ex.window;
        item.goal = obj.forced_goal ? obj.forced_goal : ex.goal;
        item.loss = {vocab.slot(ex.target.id), obj.alpha, obj.goal_def};
        item.dropout_seed = mix_seed(tc.seed, epoch * n + pos);
        batch.push_back(item);
      }
      const double loss = kernels::batch_gradient_parallel(params, batch, true, grad);
      if (!std::isfinite(loss))
        throw Error("training diverged: non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(b));
      epoch_loss += loss;
      const double scale = 1.0 / static_cast<double>(batch.size());
      auto values = params.values();
      for (std::size_t k = 0; k < values.size(); ++k) {
        if (!mask[k]) continue;
        velocity[k] = tc.momentum * velocity[k] + grad[k] * scale;
        values[k] -= tc.learning_rate * (velocity[k] + (decay[k] ? tc.weight_decay * values[k] : 0.0));
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(n);
    if (!validation.empty()) {
      const auto v = validate(params, validation, obj, vocab);
      log.validation_accuracy = v.accuracy;
      log.validation_loss = v.loss;
      const double score = obj.select_by_loss ? -v.loss : v.accuracy;
      if (!have_best || score > best_score) {
        best = params;
        best_score = score;
        have_best = true;
      }
    }
    if (on_epoch) on_epoch(log);
  }
  return have_best ? best : params;
}

}  // namespace

Parameters train(const ModelConfig& config, std::span<const SequenceExample> train_set,
                 std::span<const SequenceExample> validation, const TrainConfig& train_config,
                 const Vocabulary& vocab, const EpochCallback& on_epoch) {
  Objective obj;
  obj.freeze_embeddings = train_config.freeze_embeddings;
  return optimize(Parameters::initialize(config), train_set, validation, train_config, obj, vocab, on_epoch);
}

Parameters fine_tune(const Parameters& global, GoalId goal, std::span<const SequenceExample> goal_train,
                     std::span<const SequenceExample> goal_validation, std::span<const double> goal_def,
                     const TrainConfig& train_config, const Vocabulary& vocab, const EpochCallback& on_epoch) {
  const auto& c = global.config();
  if (goal_def.size() != c.data_count)
    throw Error("fine_tune: goal definition has " + std::to_string(goal_def.size()) + " entries, model predicts " +
                std::to_string(c.data_count));
  if (c.goal_informed() && goal >= c.goal_count) throw Error("fine_tune: goal out of range");
  Objective obj;
  obj.alpha = train_config.loss_alpha;
  obj.goal_def = goal_def;
  obj.forced_goal = goal;
  obj.select_by_loss = true;
  obj.freeze_embeddings = true;
  return optimize(global, goal_train, goal_validation, train_config, obj, vocab, on_epoch);
}

}  // namespace goalrec
