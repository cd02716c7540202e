#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "goalrec/corpus.hpp"
#include "goalrec/recommender.hpp"

namespace goalrec {

enum class Encoder { Recurrent, Convolutional };
enum class Variant { Vanilla, GCoRe, GComm, GAIn };

std::string_view to_string(Encoder e);
std::string_view to_string(Variant v);
Encoder parse_encoder(std::string_view s);
Variant parse_variant(std::string_view s);

// GCoRe: one-hot goal appended to the encoder output.
// GComm: one-hot goal appended to every command embedding.
// GAIn:  a learned goal embedding is prepended as time step 0.
struct ModelConfig {
  std::size_t vocab_size = 0;  // command embedding rows
  std::size_t data_count = 0;  // output classes
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t layers = 1;
  Encoder encoder = Encoder::Recurrent;
  Variant variant = Variant::Vanilla;
  std::size_t goal_count = 1;
  double dropout = 0.5;
  std::vector<std::size_t> filter_widths{2, 3, 4};
  std::size_t filter_count = 16;
  std::uint64_t seed = 1;

  void validate() const;
  bool goal_informed() const noexcept { return variant != Variant::Vanilla; }
  std::size_t input_dim() const noexcept;
  std::size_t encoder_dim() const noexcept;
  std::size_t dense_input_dim() const noexcept;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.001;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  double loss_alpha = 0.5;  // fine-tuning only: alpha * CE + (1 - alpha) * KL
  bool freeze_embeddings = false;
  std::uint64_t seed = 1;

  void validate() const;
};

enum class BlockRole : std::uint8_t { Embedding, Weight, Bias };

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  BlockRole role = BlockRole::Weight;

  std::size_t size() const noexcept { return rows * cols; }
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

// All trainable tensors in one flat buffer, described by named blocks:
//   embedding                (vocab_size [+ goal_count for GAIn]) x E
//   lstm<l>.wx / .wh / .b    gate rows ordered input, forget, output, candidate
//   conv<w>.w / .b           one filter per row over w stacked inputs
//   dense.w / dense.b        data_count x dense_input_dim
class Parameters {
 public:
  Parameters() = default;
  // Zero-filled tensors with the layout for `config`.
  explicit Parameters(const ModelConfig& config);
  // Seeded random initialization.
  static Parameters initialize(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  std::span<const ParamBlock> blocks() const noexcept { return blocks_; }
  const ParamBlock& block(std::string_view name) const;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  MatrixView matrix(std::string_view name);
  ConstMatrixView matrix(std::string_view name) const;

  // 1 where the optimizer may update. Frozen embeddings cover the command
  // rows only; GAIn goal rows stay trainable.
  std::vector<std::uint8_t> trainable_mask(bool freeze_embeddings) const;

  // Digest of the training configuration that produced these values, kept
  // in checkpoints for provenance ("" when untrained).
  const std::string& train_digest() const noexcept { return train_digest_; }
  void set_train_digest(std::string d) { train_digest_ = std::move(d); }

  void save(std::ostream& out) const;
  static Parameters load(std::istream& in);

  friend bool operator==(const Parameters& a, const Parameters& b) {
    return a.config_ == b.config_ && a.values_ == b.values_;
  }

 private:
  ModelConfig config_;
  std::vector<ParamBlock> blocks_;
  std::vector<double> values_;
  std::string train_digest_;
};

inline constexpr double kProbabilityFloor = 1e-12;

double loss_ce(std::span<const double> predicted, std::size_t target_slot);
// Throws Error when q has a non-positive entry or sizes differ.
double loss_kl(std::span<const double> p, std::span<const double> q);
double loss_combined(std::span<const double> p, std::size_t target_slot, std::span<const double> q,
                     double alpha);

// What one example contributes to the objective.
struct LossSpec {
  std::size_t target_slot = 0;
  double alpha = 1.0;                      // weight of the cross-entropy term
  std::span<const double> goal_def = {};   // Q, required when alpha < 1
};

// Softmax distribution over data commands. Dropout (on the dense input) is
// only active in train mode and is driven by `dropout_seed`.
Distribution forward(const Parameters& params, std::span<const Command> window,
                     std::optional<GoalId> goal, bool train_mode = false,
                     std::uint64_t dropout_seed = 0);

// Loss of one example; adds its gradient into `grad` (same layout as params).
double loss_and_gradient(const Parameters& params, std::span<const Command> window,
                         std::optional<GoalId> goal, const LossSpec& loss, std::span<double> grad,
                         bool train_mode = false, std::uint64_t dropout_seed = 0);

struct GradientCheck {
  double max_relative_error = 0.0;
  std::string worst_block;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Central differences on every parameter, compared with loss_and_gradient.
GradientCheck check_gradient(const Parameters& params, std::span<const Command> window,
                             std::optional<GoalId> goal, const LossSpec& loss, double eps = 1e-4);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_accuracy = 0.0;
  double validation_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Minibatch SGD with classical momentum and decoupled weight decay on the
// cross-entropy loss. Returns the parameters of the best validation-accuracy
// epoch (the last epoch when no validation data is given).
Parameters train(const ModelConfig& config, std::span<const SequenceExample> train_set,
                 std::span<const SequenceExample> validation, const TrainConfig& train_config,
                 const Vocabulary& vocab, const EpochCallback& on_epoch = {});

// Continues from `global` on one goal's examples with the combined loss and
// frozen command embeddings. Returns the epoch with the lowest validation
// combined loss (the last epoch without validation data).
Parameters fine_tune(const Parameters& global, GoalId goal, std::span<const SequenceExample> goal_train,
                     std::span<const SequenceExample> goal_validation, std::span<const double> goal_def,
                     const TrainConfig& train_config, const Vocabulary& vocab,
                     const EpochCallback& on_epoch = {});

class NeuralRecommender : public Recommender {
 public:
  explicit NeuralRecommender(Parameters params, std::string name = "neural")
      : params_(std::move(params)), name_(std::move(name)) {}

  std::string_view kind() const override { return "neural"; }
  std::size_t output_size() const override { return params_.config().data_count; }
  Distribution predict_dist(std::span<const Command> window, std::optional<GoalId> goal) const override;
  void save(std::ostream& out) const override;

  const Parameters& parameters() const noexcept { return params_; }

 private:
  Parameters params_;
  std::string name_;
};

// Per-goal fine-tuned parameters with the global goal-informed model as the
// fallback for goals that were not fine-tuned. Prediction needs a goal.
class FineTunedRecommender : public Recommender {
 public:
  FineTunedRecommender(Parameters global, std::vector<std::optional<Parameters>> per_goal);

  std::string_view kind() const override { return "finetuned"; }
  std::size_t output_size() const override { return global_.config().data_count; }
  Distribution predict_dist(std::span<const Command> window, std::optional<GoalId> goal) const override;
  void save(std::ostream& out) const override;

  const Parameters& global() const noexcept { return global_; }
  // Parameters used for `goal` (fine-tuned when available).
  const Parameters& for_goal(GoalId goal) const;

 private:
  Parameters global_;
  std::vector<std::optional<Parameters>> per_goal_;
};

}  // namespace goalrec
