#include <algorithm>
#include <cmath>
#include <ostream>

#include "goalrec/error.hpp"
#include "goalrec/neural.hpp"
#include "goalrec/random.hpp"

namespace goalrec {

namespace {

using Eigen::VectorXd;

struct Gates {
  VectorXd i, f, o, g, c, h;
};

struct Trace {
  std::vector<VectorXd> x;           // encoder input per step
  std::vector<std::size_t> rows;     // embedding row feeding each step
  std::vector<std::vector<Gates>> layers;
  std::vector<std::vector<std::size_t>> best;  // per filter width: argmax position per filter
  std::vector<VectorXd> pooled;                // per filter width
  VectorXd dense_in;                           // after dropout
  VectorXd mask;                               // dropout scale, empty when inactive
  VectorXd probs;
};

MatrixView view(std::span<double> flat, const ParamBlock& b) {
  return MatrixView(flat.data() + b.offset, static_cast<Eigen::Index>(b.rows), static_cast<Eigen::Index>(b.cols));
}

VectorXd sigmoid(const VectorXd& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

void build_inputs(const Parameters& params, std::span<const Command> window, std::optional<GoalId> goal,
                  Trace& t) {
  const auto& c = params.config();
  if (window.empty()) throw Error("forward: empty window");
  if (c.goal_informed()) {
    if (!goal) throw Error(std::string("forward: variant ") + std::string(to_string(c.variant)) + " needs a goal");
    if (*goal >= c.goal_count)
      throw Error("forward: goal " + std::to_string(*goal) + " out of range (K = " + std::to_string(c.goal_count) + ")");
  }
  const auto emb = params.matrix("embedding");
  const auto E = static_cast<Eigen::Index>(c.embed_dim);
  auto push = [&](std::size_t row) {
    VectorXd v = VectorXd::Zero(static_cast<Eigen::Index>(c.input_dim()));
    v.head(E) = emb.row(static_cast<Eigen::Index>(row)).transpose();
    if (c.variant == Variant::GComm) v[E + static_cast<Eigen::Index>(*goal)] = 1.0;
    t.x.push_back(std::move(v));
    t.rows.push_back(row);
  };
  if (c.variant == Variant::GAIn) push(c.vocab_size + *goal);
  for (auto cmd : window) {
    if (cmd.id >= c.vocab_size) throw Error("forward: command id outside the model vocabulary");
    push(cmd.id);
  }
}

VectorXd encode_recurrent(const Parameters& params, Trace& t) {
  const auto& c = params.config();
  const auto H = static_cast<Eigen::Index>(c.hidden_dim);
  const std::vector<VectorXd>* inputs = &t.x;
  std::vector<VectorXd> hs;
  t.layers.resize(c.layers);
  for (std::size_t l = 0; l < c.layers; ++l) {
    const auto p = "lstm" + std::to_string(l);
    const auto wx = params.matrix(p + ".wx");
    const auto wh = params.matrix(p + ".wh");
    const auto b = params.matrix(p + ".b");
    VectorXd h = VectorXd::Zero(H), cell = VectorXd::Zero(H);
    auto& steps = t.layers[l];
    steps.clear();
    for (const auto& in : *inputs) {
      VectorXd a = wx * in + wh * h + b.col(0);
      Gates s;
      s.i = sigmoid(a.segment(0, H));
      s.f = sigmoid(a.segment(H, H));
      s.o = sigmoid(a.segment(2 * H, H));
      s.g = a.segment(3 * H, H).array().tanh().matrix();
      s.c = s.f.cwiseProduct(cell) + s.i.cwiseProduct(s.g);
      s.h = s.o.cwiseProduct(s.c.array().tanh().matrix());
      cell = s.c;
      h = s.h;
      steps.push_back(std::move(s));
    }
    hs.clear();
    for (const auto& s : steps) hs.push_back(s.h);
    inputs = &hs;
  }
  return t.layers.back().back().h;
}

// Sequences shorter than a filter are zero-padded at the end.
VectorXd encode_convolutional(const Parameters& params, Trace& t) {
  const auto& c = params.config();
  const auto D = static_cast<Eigen::Index>(c.input_dim());
  const auto F = static_cast<Eigen::Index>(c.filter_count);
  const auto T = t.x.size();
  VectorXd enc(static_cast<Eigen::Index>(c.encoder_dim()));
  t.best.assign(c.filter_widths.size(), {});
  t.pooled.assign(c.filter_widths.size(), VectorXd());
  for (std::size_t wi = 0; wi < c.filter_widths.size(); ++wi) {
    const auto w = c.filter_widths[wi];
    const auto p = "conv" + std::to_string(w);
    const auto W = params.matrix(p + ".w");
    const auto b = params.matrix(p + ".b");
    const auto positions = std::max(T, w) - w + 1;
    VectorXd pooled = VectorXd::Constant(F, -2.0);
    std::vector<std::size_t> best(static_cast<std::size_t>(F), 0);
    for (std::size_t pos = 0; pos < positions; ++pos) {
      VectorXd s = b.col(0);
      for (std::size_t j = 0; j < w && pos + j < T; ++j)
        s += W.block(0, static_cast<Eigen::Index>(j) * D, F, D) * t.x[pos + j];
      s = s.array().tanh().matrix();
      for (Eigen::Index f = 0; f < F; ++f)
        if (s[f] > pooled[f]) {
          pooled[f] = s[f];
          best[static_cast<std::size_t>(f)] = pos;
        }
    }
    enc.segment(static_cast<Eigen::Index>(wi) * F, F) = pooled;
    t.pooled[wi] = std::move(pooled);
    t.best[wi] = std::move(best);
  }
  return enc;
}

void run_forward(const Parameters& params, std::span<const Command> window, std::optional<GoalId> goal,
                 bool train_mode, std::uint64_t dropout_seed, Trace& t) {
  const auto& c = params.config();
  build_inputs(params, window, goal, t);
  VectorXd enc = c.encoder == Encoder::Recurrent ? encode_recurrent(params, t) : encode_convolutional(params, t);

  t.dense_in = VectorXd::Zero(static_cast<Eigen::Index>(c.dense_input_dim()));
  t.dense_in.head(enc.size()) = enc;
  if (c.variant == Variant::GCoRe) t.dense_in[enc.size() + static_cast<Eigen::Index>(*goal)] = 1.0;
  t.mask.resize(0);
  if (train_mode && c.dropout > 0.0) {
    Rng rng(dropout_seed);
    const double keep = 1.0 - c.dropout;
    t.mask.resize(t.dense_in.size());
    for (Eigen::Index j = 0; j < t.mask.size(); ++j) t.mask[j] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    t.dense_in = t.dense_in.cwiseProduct(t.mask);
  }

  VectorXd logits = params.matrix("dense.w") * t.dense_in + params.matrix("dense.b").col(0);
  logits.array() -= logits.maxCoeff();
  t.probs = logits.array().exp().matrix();
  t.probs /= t.probs.sum();
}

void run_backward(const Parameters& params, const Trace& t, const VectorXd& dlogits, std::span<double> grad) {
  const auto& c = params.config();
  view(grad, params.block("dense.w")).noalias() += dlogits * t.dense_in.transpose();
  view(grad, params.block("dense.b")).col(0) += dlogits;

  VectorXd d_in = params.matrix("dense.w").transpose() * dlogits;
  if (t.mask.size() > 0) d_in = d_in.cwiseProduct(t.mask);
  const auto enc_dim = static_cast<Eigen::Index>(c.encoder_dim());
  const VectorXd d_enc = d_in.head(enc_dim);

  const auto T = t.x.size();
  const auto D = static_cast<Eigen::Index>(c.input_dim());
  std::vector<VectorXd> dx(T, VectorXd::Zero(D));

  if (c.encoder == Encoder::Recurrent) {
    const auto H = static_cast<Eigen::Index>(c.hidden_dim);
    // Gradient arriving at each step's hidden output of the current layer.
    std::vector<VectorXd> dh_in(T, VectorXd::Zero(H));
    dh_in[T - 1] = d_enc;
    for (std::size_t l = c.layers; l-- > 0;) {
      const auto p = "lstm" + std::to_string(l);
      const auto wx = params.matrix(p + ".wx");
      const auto wh = params.matrix(p + ".wh");
      auto gwx = view(grad, params.block(p + ".wx"));
      auto gwh = view(grad, params.block(p + ".wh"));
      auto gb = view(grad, params.block(p + ".b"));
      const auto& steps = t.layers[l];
      const auto in_dim = wx.cols();
      std::vector<VectorXd> d_below(T, VectorXd::Zero(in_dim));
      VectorXd dh_next = VectorXd::Zero(H), dc_next = VectorXd::Zero(H);
      const VectorXd zero = VectorXd::Zero(H);
      for (std::size_t s = T; s-- > 0;) {
        const auto& g = steps[s];
        const VectorXd& c_prev = s > 0 ? steps[s - 1].c : zero;
        const VectorXd& h_prev = s > 0 ? steps[s - 1].h : zero;
        const VectorXd& x_in = l == 0 ? t.x[s] : t.layers[l - 1][s].h;
        VectorXd dh = dh_in[s] + dh_next;
        VectorXd tc = g.c.array().tanh().matrix();
        VectorXd d_o = dh.cwiseProduct(tc);
        VectorXd dc = dc_next + dh.cwiseProduct(g.o).cwiseProduct((1.0 - tc.array().square()).matrix());
        VectorXd da(4 * H);
        da.segment(0, H) = dc.cwiseProduct(g.g).cwiseProduct(g.i.cwiseProduct((1.0 - g.i.array()).matrix()));
        da.segment(H, H) = dc.cwiseProduct(c_prev).cwiseProduct(g.f.cwiseProduct((1.0 - g.f.array()).matrix()));
        da.segment(2 * H, H) = d_o.cwiseProduct(g.o.cwiseProduct((1.0 - g.o.array()).matrix()));
        da.segment(3 * H, H) = dc.cwiseProduct(g.i).cwiseProduct((1.0 - g.g.array().square()).matrix());
        dc_next = dc.cwiseProduct(g.f);
        gwx.noalias() += da * x_in.transpose();
        gwh.noalias() += da * h_prev.transpose();
        gb.col(0) += da;
        d_below[s].noalias() = wx.transpose() * da;
        dh_next.noalias() = wh.transpose() * da;
      }
      if (l == 0)
        dx = std::move(d_below);
      else
        dh_in = std::move(d_below);
    }
  } else {
    const auto F = static_cast<Eigen::Index>(c.filter_count);
    for (std::size_t wi = 0; wi < c.filter_widths.size(); ++wi) {
      const auto w = c.filter_widths[wi];
      const auto p = "conv" + std::to_string(w);
      const auto W = params.matrix(p + ".w");
      auto gW = view(grad, params.block(p + ".w"));
      auto gb = view(grad, params.block(p + ".b"));
      for (Eigen::Index f = 0; f < F; ++f) {
        const double s = t.pooled[wi][f];
        const double ds = d_enc[static_cast<Eigen::Index>(wi) * F + f] * (1.0 - s * s);
        const auto pos = t.best[wi][static_cast<std::size_t>(f)];
        gb(f, 0) += ds;
        for (std::size_t j = 0; j < w && pos + j < T; ++j) {
          const auto col = static_cast<Eigen::Index>(j) * D;
          gW.block(f, col, 1, D) += ds * t.x[pos + j].transpose();
          dx[pos + j] += ds * W.block(f, col, 1, D).transpose();
        }
      }
    }
  }

  auto gemb = view(grad, params.block("embedding"));
  const auto E = static_cast<Eigen::Index>(c.embed_dim);
  for (std::size_t s = 0; s < T; ++s) gemb.row(static_cast<Eigen::Index>(t.rows[s])) += dx[s].head(E).transpose();
}

void check_q(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw Error("goal definition has " + std::to_string(q.size()) + " entries, model predicts " +
                std::to_string(p.size()));
  for (auto x : q)
    if (!(x > 0.0)) throw Error("goal definition must be strictly positive");
}

// Loss value and gradient with respect to the logits.
double loss_terms(const VectorXd& probs, const LossSpec& loss, VectorXd* dlogits) {
  const auto n = static_cast<std::size_t>(probs.size());
  if (loss.target_slot >= n) throw Error("loss: target slot out of range");
  if (!(loss.alpha >= 0.0 && loss.alpha <= 1.0)) throw Error("loss: alpha must lie in [0, 1]");
  std::span<const double> p(probs.data(), n);
  if (dlogits) dlogits->setZero(probs.size());
  double total = 0.0;
  if (loss.alpha > 0.0) {
    const auto t = static_cast<Eigen::Index>(loss.target_slot);
    total += loss.alpha * loss_ce(p, loss.target_slot);
    if (dlogits && probs[t] >= kProbabilityFloor) {
      *dlogits += loss.alpha * probs;
      (*dlogits)[t] -= loss.alpha;
    }
  }
  if (loss.alpha < 1.0) {
    check_q(p, loss.goal_def);
    const double kl = loss_kl(p, loss.goal_def);
    total += (1.0 - loss.alpha) * kl;
    if (dlogits)
      for (std::size_t j = 0; j < n; ++j) {
        if (p[j] <= 0.0) continue;
        const double r = std::log(p[j]) - std::log(loss.goal_def[j]);
        (*dlogits)[static_cast<Eigen::Index>(j)] += (1.0 - loss.alpha) * p[j] * (r - kl);
      }
  }
  return total;
}

}  // namespace

double loss_ce(std::span<const double> predicted, std::size_t target_slot) {
  if (target_slot >= predicted.size()) throw Error("loss_ce: target slot out of range");
  return -std::log(std::max(predicted[target_slot], kProbabilityFloor));
}

double loss_kl(std::span<const double> p, std::span<const double> q) {
  check_q(p, q);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  return kl;
}

double loss_combined(std::span<const double> p, std::size_t target_slot, std::span<const double> q, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("loss_combined: alpha must lie in [0, 1]");
  if (alpha == 1.0) return loss_ce(p, target_slot);
  if (alpha == 0.0) return loss_kl(p, q);
  return alpha * loss_ce(p, target_slot) + (1.0 - alpha) * loss_kl(p, q);
}

Distribution forward(const Parameters& params, std::span<const Command> window, std::optional<GoalId> goal,
                     bool train_mode, std::uint64_t dropout_seed) {
  Trace t;
  run_forward(params, window, goal, train_mode, dropout_seed, t);
  return Distribution(t.probs.data(), t.probs.data() + t.probs.size());
}

double loss_and_gradient(const Parameters& params, std::span<const Command> window, std::optional<GoalId> goal,
                         const LossSpec& loss, std::span<double> grad, bool train_mode, std::uint64_t dropout_seed) {
  if (grad.size() != params.size()) throw Error("gradient buffer does not match the parameters");
  Trace t;
  run_forward(params, window, goal, train_mode, dropout_seed, t);
  VectorXd dlogits;
  const double value = loss_terms(t.probs, loss, &dlogits);
  run_backward(params, t, dlogits, grad);
  return value;
}

GradientCheck check_gradient(const Parameters& params, std::span<const Command> window, std::optional<GoalId> goal,
                             const LossSpec& loss, double eps) {
  std::vector<double> analytic(params.size(), 0.0);
  loss_and_gradient(params, window, goal, loss, analytic);
  auto value = [&](const Parameters& p) {
    Trace t;
    run_forward(p, window, goal, false, 0, t);
    return loss_terms(t.probs, loss, nullptr);
  };
  Parameters probe = params;
  GradientCheck out;
  for (const auto& b : params.blocks()) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      auto& x = probe.values()[b.offset + k];
      const double saved = x;
      x = saved + eps;
      const double up = value(probe);
      x = saved - eps;
      const double down = value(probe);
      x = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[b.offset + k];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-8);
      if (rel > out.max_relative_error || out.checked == 0) {
        if (rel >= out.max_relative_error) {
          out.max_relative_error = rel;
          out.worst_block = b.name;
          out.worst_index = k;
        }
      }
      ++out.checked;
    }
  }
  return out;
}

Distribution NeuralRecommender::predict_dist(std::span<const Command> window, std::optional<GoalId> goal) const {
  return forward(params_, window, params_.config().goal_informed() ? goal : std::nullopt);
}

void NeuralRecommender::save(std::ostream& out) const {
  out << "goalrec-model neural 1\n";
  out << "name " << name_ << '\n';
  params_.save(out);
}

}  // namespace goalrec
