#include <omp.h>

#include "doctest.h"

#include "goalrec/baselines.hpp"
#include "goalrec/kernels.hpp"
#include "goalrec/synthetic.hpp"

using namespace goalrec;

namespace {

SyntheticCorpus small_corpus() {
  SyntheticConfig c;
  c.sessions = 60;
  c.seed = 12;
  return generate_synthetic(c);
}

// Runs `body` under several thread counts and restores the default.
template <class F>
void for_thread_counts(F body) {
  const int saved = omp_get_max_threads();
  for (int t : {1, 2, 3, 8}) {
    CAPTURE(t);
    omp_set_num_threads(t);
    body();
  }
  omp_set_num_threads(saved);
}

}  // namespace

TEST_CASE("batch gradient: parallel is bitwise equal to serial") {
  auto corpus = small_corpus();
  auto ex = windows(corpus.sessions, 4);
  ex.resize(40);
  for (auto variant : {Variant::Vanilla, Variant::GAIn}) {
    for (auto encoder : {Encoder::Recurrent, Encoder::Convolutional}) {
      ModelConfig c;
      c.vocab_size = corpus.vocab.size();
      c.data_count = corpus.vocab.data_count();
      c.embed_dim = 8;
      c.hidden_dim = 12;
      c.encoder = encoder;
      c.variant = variant;
      c.goal_count = 3;
      const auto p = Parameters::initialize(c);
      const std::vector<double> q(c.data_count, 1.0 / static_cast<double>(c.data_count));
      std::vector<kernels::GradientItem> items;
      for (std::size_t i = 0; i < ex.size(); ++i)
        items.push_back({ex[i].window, ex[i].goal, {corpus.vocab.slot(ex[i].target.id), 0.5, q}, i});
      std::vector<double> g_serial(p.size(), 7.0);
      const double l_serial = kernels::batch_gradient_serial(p, items, true, g_serial);
      for_thread_counts([&] {
        std::vector<double> g_par(p.size(), -3.0);
        const double l_par = kernels::batch_gradient_parallel(p, items, true, g_par);
        CHECK(l_par == l_serial);
        CHECK(g_par == g_serial);
      });
    }
  }
}

TEST_CASE("top-1 prediction: parallel equals serial") {
  auto corpus = small_corpus();
  auto ex = windows(corpus.sessions, 4);
  auto top = Top50Model::fit(ex, corpus.vocab);
  auto markov = MarkovModel::fit(corpus.sessions, corpus.vocab, 2, top);
  std::vector<kernels::Query> qs;
  for (const auto& e : ex) qs.push_back({e.window, e.goal});
  const auto serial = kernels::predict_top1_serial(markov, qs);
  CHECK(serial.size() == qs.size());
  for_thread_counts([&] { CHECK(kernels::predict_top1_parallel(markov, qs) == serial); });
}

TEST_CASE("coherence counts: parallel equals serial") {
  auto corpus = small_corpus();
  const auto serial = kernels::coherence_counts_serial(corpus.sessions, corpus.vocab);
  for_thread_counts([&] {
    const auto par = kernels::coherence_counts_parallel(corpus.sessions, corpus.vocab);
    CHECK(par.sessions == serial.sessions);
    CHECK(par.single == serial.single);
    CHECK(par.pair == serial.pair);
  });
}

TEST_CASE("the lowest failing item's error is the one reported") {
  auto corpus = small_corpus();
  ModelConfig c;
  c.vocab_size = corpus.vocab.size();
  c.data_count = corpus.vocab.data_count();
  c.variant = Variant::GCoRe;
  c.goal_count = 2;
  const auto p = Parameters::initialize(c);
  auto ex = windows(corpus.sessions, 3);
  ex.resize(10);
  std::vector<kernels::Query> qs;
  for (std::size_t i = 0; i < ex.size(); ++i) qs.push_back({ex[i].window, GoalId{0}});
  qs[3].window = {};
  qs[6].goal.reset();
  NeuralRecommender model(p);
  std::string serial_msg, parallel_msg;
  try {
    kernels::predict_top1_serial(model, qs);
  } catch (const std::exception& e) {
    serial_msg = e.what();
  }
  for_thread_counts([&] {
    try {
      kernels::predict_top1_parallel(model, qs);
    } catch (const std::exception& e) {
      parallel_msg = e.what();
    }
    CHECK(!parallel_msg.empty());
    CHECK(parallel_msg == serial_msg);
  });
}
