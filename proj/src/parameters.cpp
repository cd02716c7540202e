#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "goalrec/error.hpp"
#include "goalrec/neural.hpp"
#include "goalrec/random.hpp"
#include "goalrec/text_io.hpp"

namespace goalrec {

std::string_view to_string(Encoder e) { return e == Encoder::Recurrent ? "lstm" : "cnn"; }

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::GCoRe: return "gcore";
    case Variant::GComm: return "gcomm";
    case Variant::GAIn: return "gain";
  }
  return "?";
}

Encoder parse_encoder(std::string_view s) {
  if (s == "lstm") return Encoder::Recurrent;
  if (s == "cnn") return Encoder::Convolutional;
  throw Error("unknown encoder '" + std::string(s) + "' (lstm|cnn)");
}

Variant parse_variant(std::string_view s) {
  for (auto v : {Variant::Vanilla, Variant::GCoRe, Variant::GComm, Variant::GAIn})
    if (to_string(v) == s) return v;
  throw Error("unknown variant '" + std::string(s) + "' (vanilla|gcore|gcomm|gain)");
}

void ModelConfig::validate() const {
  if (vocab_size < 1 || data_count < 1) throw Error("model: empty vocabulary");
  if (embed_dim < 1 || hidden_dim < 1 || goal_count < 1) throw Error("model: E, H and K must be >= 1");
  if (layers < 1) throw Error("model: layers must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("model: dropout must lie in [0, 1)");
  if (encoder == Encoder::Convolutional) {
    if (filter_widths.empty() || filter_count < 1) throw Error("model: convolution needs filters");
    std::set<std::size_t> unique(filter_widths.begin(), filter_widths.end());
    if (unique.size() != filter_widths.size() || *unique.begin() < 1)
      throw Error("model: filter widths must be distinct and >= 1");
  }
}

std::size_t ModelConfig::input_dim() const noexcept {
  return embed_dim + (variant == Variant::GComm ? goal_count : 0);
}

std::size_t ModelConfig::encoder_dim() const noexcept {
  return encoder == Encoder::Recurrent ? hidden_dim : filter_widths.size() * filter_count;
}

std::size_t ModelConfig::dense_input_dim() const noexcept {
  return encoder_dim() + (variant == Variant::GCoRe ? goal_count : 0);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("train: learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("train: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw Error("train: weight_decay must be >= 0");
  if (batch_size < 1) throw Error("train: batch_size must be >= 1");
  if (!(loss_alpha >= 0.0 && loss_alpha <= 1.0)) throw Error("train: loss_alpha must lie in [0, 1]");
}

Parameters::Parameters(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols, BlockRole role) {
    blocks_.push_back({std::move(name), offset, rows, cols, role});
    offset += rows * cols;
  };
  const auto E = config.embed_dim, H = config.hidden_dim;
  add("embedding", config.vocab_size + (config.variant == Variant::GAIn ? config.goal_count : 0), E,
      BlockRole::Embedding);
  if (config.encoder == Encoder::Recurrent) {
    for (std::size_t l = 0; l < config.layers; ++l) {
      const auto in = l == 0 ? config.input_dim() : H;
      const auto p = "lstm" + std::to_string(l);
      add(p + ".wx", 4 * H, in, BlockRole::Weight);
      add(p + ".wh", 4 * H, H, BlockRole::Weight);
      add(p + ".b", 4 * H, 1, BlockRole::Bias);
    }
  } else {
    for (auto w : config.filter_widths) {
      const auto p = "conv" + std::to_string(w);
      add(p + ".w", config.filter_count, w * config.input_dim(), BlockRole::Weight);
      add(p + ".b", config.filter_count, 1, BlockRole::Bias);
    }
  }
  add("dense.w", config.data_count, config.dense_input_dim(), BlockRole::Weight);
  add("dense.b", config.data_count, 1, BlockRole::Bias);
  values_.assign(offset, 0.0);
}

Parameters Parameters::initialize(const ModelConfig& config) {
  Parameters p(config);
  Rng rng(config.seed);
  for (const auto& b : p.blocks_) {
    auto* v = p.values_.data() + b.offset;
    switch (b.role) {
      case BlockRole::Embedding:
        for (std::size_t i = 0; i < b.size(); ++i) v[i] = rng.uniform() - 0.5;
        break;
      case BlockRole::Weight: {
        const double s = std::sqrt(6.0 / static_cast<double>(b.rows + b.cols));
        for (std::size_t i = 0; i < b.size(); ++i) v[i] = s * (2.0 * rng.uniform() - 1.0);
        break;
      }
      case BlockRole::Bias:
        // Forget gates start open.
        if (b.name.starts_with("lstm")) {
          const auto H = config.hidden_dim;
          for (std::size_t i = H; i < 2 * H; ++i) v[i] = 1.0;
        }
        break;
    }
  }
  return p;
}

const ParamBlock& Parameters::block(std::string_view name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw Error("no parameter block '" + std::string(name) + "'");
}

MatrixView Parameters::matrix(std::string_view name) {
  const auto& b = block(name);
  return MatrixView(values_.data() + b.offset, static_cast<Eigen::Index>(b.rows),
                    static_cast<Eigen::Index>(b.cols));
}

ConstMatrixView Parameters::matrix(std::string_view name) const {
  const auto& b = block(name);
  return ConstMatrixView(values_.data() + b.offset, static_cast<Eigen::Index>(b.rows),
                         static_cast<Eigen::Index>(b.cols));
}

std::vector<std::uint8_t> Parameters::trainable_mask(bool freeze_embeddings) const {
  std::vector<std::uint8_t> mask(values_.size(), 1);
  if (freeze_embeddings) {
    const auto& e = block("embedding");
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(e.offset),
                config_.vocab_size * config_.embed_dim, std::uint8_t{0});
  }
  return mask;
}

void Parameters::save(std::ostream& out) const {
  const auto& c = config_;
  out << "goalrec-params 1\n";
  out << "vocab_size " << c.vocab_size << " data_count " << c.data_count << " embed_dim " << c.embed_dim
      << " hidden_dim " << c.hidden_dim << " layers " << c.layers << " encoder " << to_string(c.encoder)
      << " variant " << to_string(c.variant) << " goal_count " << c.goal_count << " dropout "
      << format_double(c.dropout) << " filter_count " << c.filter_count << " seed " << c.seed << '\n';
  out << "filter_widths " << c.filter_widths.size();
  for (auto w : c.filter_widths) out << ' ' << w;
  out << '\n';
  out << "train_digest " << (train_digest_.empty() ? "none" : train_digest_) << '\n';
  out << "blocks " << blocks_.size() << '\n';
  for (const auto& b : blocks_) {
    out << b.name << ' ' << b.rows << ' ' << b.cols << '\n';
    write_row(out, std::span<const double>(values_).subspan(b.offset, b.size()));
  }
}

Parameters Parameters::load(std::istream& in) {
  expect_line(in, "goalrec-params 1");
  ModelConfig c;
  std::istringstream h(read_line(in, "parameter header"));
  std::string key, value;
  std::set<std::string> seen;
  while (h >> key >> value) {
    seen.insert(key);
    auto num = [&value, &key] {
      std::size_t used = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size() || value.empty()) throw Error("parameter header: bad value for " + key);
      return static_cast<std::size_t>(v);
    };
    if (key == "vocab_size") c.vocab_size = num();
    else if (key == "data_count") c.data_count = num();
    else if (key == "embed_dim") c.embed_dim = num();
    else if (key == "hidden_dim") c.hidden_dim = num();
    else if (key == "layers") c.layers = num();
    else if (key == "encoder") c.encoder = parse_encoder(value);
    else if (key == "variant") c.variant = parse_variant(value);
    else if (key == "goal_count") c.goal_count = num();
    else if (key == "dropout") c.dropout = parse_double(value);
    else if (key == "filter_count") c.filter_count = num();
    else if (key == "seed") c.seed = num();
    else throw Error("parameter header: unknown key " + key);
  }
  if (seen.size() != 11) throw Error("parameter header: missing fields");
  std::istringstream fw(read_line(in, "filter widths"));
  std::string tag;
  std::size_t n = 0;
  if (!(fw >> tag >> n) || tag != "filter_widths") throw Error("expected filter_widths");
  c.filter_widths.resize(n);
  for (auto& w : c.filter_widths)
    if (!(fw >> w)) throw Error("malformed filter_widths");

  Parameters p(c);
  std::istringstream td(read_line(in, "train digest"));
  std::string digest;
  if (!(td >> tag >> digest) || tag != "train_digest") throw Error("expected train_digest");
  if (digest != "none") p.train_digest_ = digest;
  std::istringstream bh(read_line(in, "blocks"));
  if (!(bh >> tag >> n) || tag != "blocks" || n != p.blocks_.size()) throw Error("block count mismatch");
  for (const auto& b : p.blocks_) {
    std::istringstream line(read_line(in, "block header"));
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(line >> name >> rows >> cols) || name != b.name || rows != b.rows || cols != b.cols)
      throw Error("block '" + b.name + "' does not match the configuration");
    auto row = read_row(in, b.size(), b.name);
    std::copy(row.begin(), row.end(), p.values_.begin() + static_cast<std::ptrdiff_t>(b.offset));
  }
  return p;
}

}  // namespace goalrec
