// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>
#include <unistd.h>

#include "property_cases.hpp"

#include "goalrec/baselines.hpp"
#include "goalrec/eval.hpp"
#include "goalrec/goals.hpp"
#include "goalrec/neural.hpp"
#include "goalrec/pipeline.hpp"
#include "goalrec/random.hpp"
#include "goalrec/synthetic.hpp"

using namespace goalrec;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 1;
constexpr std::size_t kWindow = 10;
constexpr std::size_t kGoals = 3;

struct Outcome {
  bool pass = false;
  std::string detail;
  std::vector<std::string> notes;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Shared state for the goal and neural criteria.
struct Desk {
  SyntheticCorpus corpus;
  Split split;
  Vocabulary vocab;
  GoalModel goals;
  std::vector<int> planted, assigned;
  std::vector<SequenceExample> train, validation, test;
  std::optional<Parameters> gain, vanilla;
};

Desk& desk() {
  static Desk d;
  return d;
}

TrainConfig train_config() {
  TrainConfig t;
  t.epochs = 15;
  t.seed = mix_seed(kSeed, 5);
  return t;
}

ModelConfig model_config(Variant v) {
  ModelConfig c;
  c.vocab_size = desk().vocab.size();
  c.data_count = desk().vocab.data_count();
  c.variant = v;
  c.encoder = Encoder::Recurrent;
  c.goal_count = kGoals;
  c.seed = mix_seed(kSeed, 4);
  return c;
}

// Normalised mutual information with sqrt(H(a) H(b)) normalisation.
double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pa, pb;
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    pa[a[i]] += 1;
    pb[b[i]] += 1;
  }
  double mi = 0, ha = 0, hb = 0;
  for (const auto& [k, c] : joint) mi += c / n * std::log(c * n / (pa[k.first] * pb[k.second]));
  for (const auto& [k, c] : pa) ha -= c / n * std::log(c / n);
  for (const auto& [k, c] : pb) hb -= c / n * std::log(c / n);
  return ha > 0 && hb > 0 ? mi / std::sqrt(ha * hb) : 0.0;
}

Outcome gradients() {
  const auto t0 = Clock::now();
  Vocabulary v;
  for (int i = 0; i < 5; ++i) v.add_data("c", "v" + std::to_string(i));
  for (int i = 0; i < 3; ++i) v.add_software("s" + std::to_string(i));
  const std::vector<double> q{0.35, 0.25, 0.2, 0.15, 0.05};
  Rng rng(kSeed);
  double worst = 0.0;
  Outcome o;
  for (auto var : {Variant::Vanilla, Variant::GCoRe, Variant::GComm, Variant::GAIn})
    for (auto enc : {Encoder::Recurrent, Encoder::Convolutional}) {
      ModelConfig c;
      c.vocab_size = v.size();
      c.data_count = 5;
      c.embed_dim = 3;
      c.hidden_dim = 4;
      c.filter_widths = {1, 2};
      c.filter_count = 3;
      c.variant = var;
      c.encoder = enc;
      c.goal_count = 2;
      c.seed = rng.next();
      const auto p = Parameters::initialize(c);
      std::vector<Command> window;
      for (int i = 0; i < 5; ++i) window.push_back(v.command(static_cast<CommandId>(1 + rng.below(v.size() - 1))));
      const auto goal = c.goal_informed() ? std::optional<GoalId>(1) : std::nullopt;
      const auto r = check_gradient(p, window, goal, {2, 0.5, q});
      worst = std::max(worst, r.max_relative_error);
      o.notes.push_back(fmt("%s/%s: %zu parameters, max relative error %.2e", std::string(to_string(var)).c_str(),
                            std::string(to_string(enc)).c_str(), r.checked, r.max_relative_error));
    }
  const double secs = seconds_since(t0);
  o.pass = worst < 1e-4 && secs < 60;
  o.detail = fmt("worst relative error %.2e over 8 models in %.1fs", worst, secs);
  return o;
}

// Brute-force biterms: every data command pairs with the preceding data
// command and with each software command between the two.
std::multiset<std::pair<CommandId, CommandId>> oracle_biterms(const std::vector<Command>& c) {
  std::multiset<std::pair<CommandId, CommandId>> out;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!c[i].is_data()) continue;
    for (std::size_t j = i; j-- > 0;) {
      out.insert({c[j].id, c[i].id});
      if (c[j].is_data()) break;
    }
  }
  return out;
}

Outcome markov() {
  Outcome o;
  Vocabulary v;
  std::vector<Command> ex;
  for (auto t : {"c:dc1", "c:dc2", "sc1", "sc2", "c:dc3", "sc3", "c:dc4"}) ex.push_back(v.add_token(t));
  std::multiset<std::pair<std::string, std::string>> got;
  for (const auto& b : markov_biterms(ex)) got.insert({v.token(b.context), v.token(b.consequent)});
  const std::multiset<std::pair<std::string, std::string>> expected{
      {"c:dc1", "c:dc2"}, {"c:dc2", "c:dc3"}, {"sc1", "c:dc3"}, {"sc2", "c:dc3"}, {"c:dc3", "c:dc4"}, {"sc3", "c:dc4"}};
  const bool worked = got == expected;

  std::size_t corpora = 0, mismatches = 0, contexts = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed, ++corpora) {
    Vocabulary vs;
    Rng rng(mix_seed(kSeed, 100 + seed));
    std::vector<Session> sessions;
    for (int s = 0; s < 50; ++s) {
      Session sess;
      const auto len = 1 + rng.below(15);
      for (std::uint64_t i = 0; i < len; ++i)
        sess.commands.push_back(rng.bernoulli(0.5) ? vs.add_data("k", "d" + std::to_string(rng.below(8)))
                                                   : vs.add_software("s" + std::to_string(rng.below(5))));
      sessions.push_back(std::move(sess));
    }
    std::map<CommandId, std::map<std::size_t, double>> counts;
    for (const auto& s : sessions) {
      const auto bt = oracle_biterms(s.commands);
      for (const auto& [a, b] : bt) counts[a][vs.slot(b)] += 1;
      std::multiset<std::pair<CommandId, CommandId>> mine;
      for (const auto& b : markov_biterms(s.commands)) mine.insert({b.context, b.consequent});
      if (mine != bt) ++mismatches;
    }
    const Top50Model flat(std::vector<std::uint64_t>(vs.data_count(), 1));
    const auto m = MarkovModel::fit(sessions, vs, 1, flat);
    for (CommandId c = 1; c < vs.size(); ++c) {
      ++contexts;
      const auto d = m.predict_dist(std::vector<Command>{vs.command(c)}, std::nullopt);
      const auto it = counts.find(c);
      Distribution want = flat.distribution();
      if (it != counts.end()) {
        double total = 0;
        for (auto [slot, n] : it->second) total += n;
        want.assign(vs.data_count(), 0.0);
        for (auto [slot, n] : it->second) want[slot] = n / total;
      }
      if (d != want) ++mismatches;
    }
  }
  o.pass = worked && mismatches == 0;
  o.detail = fmt("worked example %s, %zu corpora, %zu contexts, %zu mismatches", worked ? "exact" : "WRONG", corpora,
                 contexts, mismatches);
  return o;
}

Outcome cpt() {
  SyntheticConfig sc;
  sc.seed = kSeed;
  const auto c = generate_synthetic(sc);
  const auto s = split(c.sessions, {}, kSeed);
  const Top50Model flat(std::vector<std::uint64_t>(c.vocab.data_count(), 1));
  const auto m = CptModel::fit(s.train, c.vocab, {}, flat);
  std::size_t wrong = 0, total_len = 0;
  for (std::size_t i = 0; i < s.train.size(); ++i) {
    total_len += s.train[i].commands.size();
    if (m.reconstruct(i) != s.train[i].commands) ++wrong;
  }
  Outcome o;
  o.pass = wrong == 0 && m.sequence_count() == s.train.size() && m.node_count() <= 1 + total_len;
  o.detail = fmt("%zu/%zu sessions reconstructed, %zu nodes for %zu commands", s.train.size() - wrong, s.train.size(),
                 m.node_count(), total_len);
  return o;
}

Outcome goal_recovery() {
  const auto t0 = Clock::now();
  auto& d = desk();
  SyntheticConfig sc;
  sc.seed = kSeed;
  d.corpus = generate_synthetic(sc);
  d.split = split(d.corpus.sessions, {}, mix_seed(kSeed, 2));
  d.vocab = restrict_to_training(d.corpus.vocab, d.split);
  BtmConfig bc;
  bc.k = kGoals;
  bc.alpha = 50.0 / kGoals;
  bc.seed = mix_seed(kSeed, 3);
  d.goals = btm_fit(d.split.train, d.vocab, bc);
  for (auto* part : {&d.split.train, &d.split.validation, &d.split.test})
    for (auto& s : *part) {
      d.planted.push_back(static_cast<int>(*s.goal));
      s.goal = assign_goal(d.goals, s);
      d.assigned.push_back(static_cast<int>(*s.goal));
    }
  const double score = nmi(d.planted, d.assigned);

  BtmConfig scan = bc;
  scan.alpha = 0.0;
  const std::vector<std::size_t> ks{2, 3, 4, 5, 6};
  const auto sel = select_goal_count(d.split.train, d.vocab, ks, scan);
  const double secs = seconds_since(t0);

  Outcome o;
  o.pass = score >= 0.8 && sel.chosen == kGoals && secs < 120;
  o.detail = fmt("NMI %.3f, selected k=%zu, %.1fs", score, sel.chosen, secs);
  for (std::size_t i = 0; i < ks.size(); ++i) o.notes.push_back(fmt("k=%zu combined coherence %.4f", ks[i], sel.combined[i]));

  d.train = windows(d.split.train, kWindow);
  d.validation = windows(d.split.validation, kWindow);
  d.test = windows(d.split.test, kWindow);
  return o;
}

Outcome goal_input() {
  const auto t0 = Clock::now();
  auto& d = desk();
  if (d.train.empty()) throw Error("no training windows; goal recovery did not finish");
  d.vanilla = train(model_config(Variant::Vanilla), d.train, d.validation, train_config(), d.vocab);
  d.gain = train(model_config(Variant::GAIn), d.train, d.validation, train_config(), d.vocab);
  const double va = accuracy(NeuralRecommender(*d.vanilla), d.test, d.vocab);
  const double ga = accuracy(NeuralRecommender(*d.gain), d.test, d.vocab);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = ga >= 1.05 * va;
  o.detail = fmt("GAIn %.4f vs Vanilla %.4f (x%.3f), %zu test windows, %.0fs", ga, va, ga / va, d.test.size(), secs);
  return o;
}

std::vector<SequenceExample> of_goal(const std::vector<SequenceExample>& ex, GoalId g) {
  std::vector<SequenceExample> out;
  for (const auto& e : ex)
    if (e.goal == g) out.push_back(e);
  return out;
}

FineTunedRecommender tuned_at(double alpha) {
  auto& d = desk();
  if (!d.gain) throw Error("GAIn model was not trained");
  std::vector<std::optional<Parameters>> per;
  for (GoalId g = 0; g < kGoals; ++g) {
    const auto gt = of_goal(d.train, g), gv = of_goal(d.validation, g);
    if (gt.empty() || gv.empty()) {
      per.emplace_back();
      continue;
    }
    TrainConfig ft = train_config();
    ft.epochs = 10;
    ft.loss_alpha = alpha;
    ft.seed = mix_seed(kSeed, 6);
    per.push_back(fine_tune(*d.gain, g, gt, gv, d.goals.goal_defs[g], ft, d.vocab));
  }
  return FineTunedRecommender(*d.gain, per);
}

const std::vector<double> kAlphas{0.25, 0.5, 0.75};
std::map<double, FineTunedRecommender>& tuned() {
  static std::map<double, FineTunedRecommender> m;
  return m;
}

Outcome fine_tuning() {
  auto& d = desk();
  const NeuralRecommender base(*d.gain);
  const auto before = evaluate(base, d.test, d.goals.goal_defs, d.vocab, "gain");
  Outcome o;
  std::string passing;
  for (double alpha : kAlphas) {
    auto ft = tuned_at(alpha);
    const auto after = evaluate(ft, d.test, d.goals.goal_defs, d.vocab, "gain-ft");
    if (after.goals.size() != before.goals.size()) throw Error("goal sets differ after fine-tuning");
    bool ok = true;
    std::string line = fmt("alpha %.2f:", alpha);
    for (std::size_t i = 0; i < after.goals.size(); ++i) {
      const auto& b = before.goals[i];
      const auto& a = after.goals[i];
      const double gr = a.go1 / b.go1, ar = a.accuracy / b.accuracy;
      ok = ok && gr >= 1.05 && ar >= 0.9;
      line += fmt(" goal %u go1 x%.3f acc x%.3f;", a.goal, gr, ar);
    }
    o.notes.push_back(line);
    if (ok) passing += fmt(" %.2f", alpha);
    tuned().emplace(alpha, std::move(ft));
  }
  o.pass = !passing.empty();
  o.detail = o.pass ? "alpha passing for every goal:" + passing : "no alpha improves GO1 by 5% on every goal";
  return o;
}

Outcome adversarial() {
  auto& d = desk();
  if (tuned().size() != kAlphas.size()) throw Error("fine-tuned models are missing");
  const NeuralRecommender control(*d.gain);
  Outcome o;
  std::string passing;
  for (double alpha : kAlphas) {
    const auto adv = adversarial_eval(tuned().at(alpha), control, d.test, d.goals.goal_defs, d.vocab);
    bool ok = !adv.empty();
    std::string line = fmt("alpha %.2f:", alpha);
    for (const auto& a : adv) {
      const double r = a.control.go1 > 0 ? a.tuned.go1 / a.control.go1 : 0.0;
      ok = ok && r >= 1.5;
      line += fmt(" goal %u x%.3f;", a.goal, r);
    }
    o.notes.push_back(line);
    if (ok) passing += fmt(" %.2f", alpha);
  }
  o.pass = !passing.empty();
  o.detail = o.pass ? "mismatched-goal GO1 >= 1.5x control on every goal at alpha" + passing
                    : "no alpha reaches 1.5x the control on every goal";
  return o;
}

Outcome go1_value() {
  const double v = go1(0.7010, 0.3663);
  Outcome o;
  o.pass = std::abs(v - 0.4811) <= 5e-4;
  o.detail = fmt("go1(0.7010, 0.3663) = %.6f", v);
  return o;
}

const char* kRunConfig = R"([run]
seed = 11
[corpus]
sessions = 150
window = 6
[goals]
k = 3
iterations = 60
burn_in = 20
[models]
baselines = top50, markov1, markov2, cpt, ensemble-markov1
neural = gain, vanilla-cnn
embed_dim = 8
hidden_dim = 12
[train]
epochs = 2
[finetune]
models = gain
epochs = 2
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome reproducibility() {
  const auto root = fs::temp_directory_path() / ("goalrec-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::vector<std::string> reports;
  const int threads = omp_get_max_threads();
  for (int run = 0; run < 2; ++run) {
    std::istringstream in(kRunConfig);
    auto c = PipelineConfig::parse(in, root);
    c.out_dir = root / ("run" + std::to_string(run));
    omp_set_num_threads(run == 0 ? threads : std::max(2, threads * 2));
    const auto r = run_pipeline(c);
    reports.push_back(slurp(r.report));
  }
  omp_set_num_threads(threads);
  fs::remove_all(root);
  Outcome o;
  o.pass = !reports[0].empty() && reports[0] == reports[1];
  o.detail = fmt("report.json %zu bytes, %s", reports[0].size(), o.pass ? "byte-identical" : "DIFFERS");
  return o;
}

Outcome distributions() {
  const auto audit = testing::audit_distributions(1000, kSeed);
  Outcome o;
  o.pass = audit.failures.empty() && audit.cases == 1000;
  o.detail = fmt("%zu cases, %zu distributions, worst mass error %.1e, %zu failures", audit.cases, audit.distributions,
                 audit.worst_mass_error, audit.failures.size());
  for (std::size_t i = 0; i < std::min<std::size_t>(5, audit.failures.size()); ++i) o.notes.push_back(audit.failures[i]);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient check, 4 variants x 2 encoders", gradients},
      {"markov biterm counts match brute force", markov},
      {"cpt reconstructs every training session", cpt},
      {"btm recovers planted goals", goal_recovery},
      {"goal input lifts accuracy", goal_input},
      {"per-goal fine-tuning lifts GO1", fine_tuning},
      {"fine-tuning beats control on mismatched goals", adversarial},
      {"go1 harmonic mean", go1_value},
      {"pipeline report is reproducible", reproducibility},
      {"distributions are valid", distributions},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failed;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    for (const auto& n : o.notes) std::printf("        %s\n", n.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed ? 1 : 0;
}
