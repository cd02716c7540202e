#include "goalrec/eval.hpp"

#include <fstream>

#include "json.hpp"

#include "goalrec/error.hpp"
#include "goalrec/kernels.hpp"

namespace goalrec {

double go1(double accuracy, double p_bar) {
  const double s = accuracy + p_bar;
  return s == 0.0 ? 0.0 : 2.0 * accuracy * p_bar / s;
}

namespace {

std::vector<kernels::Query> queries(std::span<const SequenceExample> examples, std::optional<GoalId> fixed) {
  std::vector<kernels::Query> q;
  q.reserve(examples.size());
  for (const auto& ex : examples) q.push_back({ex.window, fixed ? fixed : ex.goal});
  return q;
}

void finish(GoalScore& s, double p_sum) {
  const double n = static_cast<double>(s.examples);
  s.accuracy = static_cast<double>(s.hits) / n;
  s.p_bar = p_sum / n;
  s.go1 = go1(s.accuracy, s.p_bar);
}

nlohmann::json goal_json(const GoalScore& s) {
  return {{"goal", s.goal}, {"examples", s.examples}, {"accuracy", s.accuracy}, {"p_bar", s.p_bar}, {"go1", s.go1}};
}

}  // namespace

double accuracy(const Recommender& model, std::span<const SequenceExample> test, const Vocabulary& vocab) {
  if (test.empty()) throw Error("accuracy: empty test set");
  const auto pred = kernels::predict_top1_parallel(model, queries(test, std::nullopt));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) hits += pred[i] == vocab.slot(test[i].target.id);
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

ModelScore evaluate(const Recommender& model, std::span<const SequenceExample> test,
                    std::span<const Distribution> goal_defs, const Vocabulary& vocab, std::string name) {
  if (test.empty()) throw Error("evaluate: empty test set");
  const auto k = goal_defs.size();
  for (const auto& ex : test)
    if (!ex.goal || *ex.goal >= k) throw Error("evaluate: test example without a valid assigned goal");
  const auto pred = kernels::predict_top1_parallel(model, queries(test, std::nullopt));

  ModelScore out;
  out.name = std::move(name);
  out.examples = test.size();
  std::vector<GoalScore> per(k);
  std::vector<double> p_sum(k, 0.0);
  std::size_t hits = 0;
  double p_total = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto g = *test[i].goal;
    const bool hit = pred[i] == vocab.slot(test[i].target.id);
    const double q = goal_defs[g].at(pred[i]);
    ++per[g].examples;
    per[g].hits += hit;
    p_sum[g] += q;
    hits += hit;
    p_total += q;
  }
  for (std::size_t g = 0; g < k; ++g) {
    per[g].goal = static_cast<GoalId>(g);
    if (per[g].examples == 0) {
      out.omitted_goals.push_back(static_cast<GoalId>(g));
      continue;
    }
    finish(per[g], p_sum[g]);
    out.go1_macro += per[g].go1;
    out.goals.push_back(per[g]);
  }
  out.go1_macro /= static_cast<double>(out.goals.size());
  out.accuracy = static_cast<double>(hits) / static_cast<double>(test.size());
  out.p_bar = p_total / static_cast<double>(test.size());
  out.go1 = go1(out.accuracy, out.p_bar);
  return out;
}

GoalScore score_with_goal(const Recommender& model, std::span<const SequenceExample> examples, GoalId goal,
                          std::span<const double> goal_def, const Vocabulary& vocab) {
  if (examples.empty()) throw Error("no examples to score");
  const auto pred = kernels::predict_top1_parallel(model, queries(examples, goal));
  GoalScore s;
  s.goal = goal;
  s.examples = examples.size();
  double p_sum = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    s.hits += pred[i] == vocab.slot(examples[i].target.id);
    p_sum += goal_def[pred[i]];
  }
  finish(s, p_sum);
  return s;
}

std::vector<AdversarialScore> adversarial_eval(const Recommender& tuned, const Recommender& control,
                                               std::span<const SequenceExample> test,
                                               std::span<const Distribution> goal_defs, const Vocabulary& vocab) {
  const auto k = goal_defs.size();
  if (k < 2) throw Error("adversarial evaluation needs at least two goals");
  std::vector<AdversarialScore> out;
  for (std::size_t g = 0; g < k; ++g) {
    std::vector<SequenceExample> others;
    for (const auto& ex : test) {
      if (!ex.goal) throw Error("adversarial evaluation: test example without an assigned goal");
      if (*ex.goal != g) others.push_back(ex);
    }
    if (others.empty()) throw Error("adversarial evaluation: no mismatched examples for goal " + std::to_string(g));
    AdversarialScore a;
    a.goal = static_cast<GoalId>(g);
    a.examples = others.size();
    a.tuned = score_with_goal(tuned, others, a.goal, goal_defs[g], vocab);
    a.control = score_with_goal(control, others, a.goal, goal_defs[g], vocab);
    out.push_back(a);
  }
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["schema"] = 1;
  j["metadata"] = metadata;
  j["models"] = nlohmann::json::object();
  for (const auto& m : models) {
    nlohmann::json goals = nlohmann::json::array();
    for (const auto& g : m.goals) goals.push_back(goal_json(g));
    j["models"][m.name] = {{"examples", m.examples}, {"accuracy", m.accuracy}, {"p_bar", m.p_bar},
                           {"go1", m.go1},           {"go1_macro", m.go1_macro}, {"goals", goals},
                           {"omitted_goals", m.omitted_goals}};
  }
  j["adversarial"] = nlohmann::json::object();
  for (const auto& [name, rows] : adversarial) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& a : rows)
      arr.push_back({{"goal", a.goal}, {"examples", a.examples}, {"tuned", goal_json(a.tuned)},
                     {"control", goal_json(a.control)}});
    j["adversarial"][name] = arr;
  }
  return j.dump(2) + "\n";
}

void EvalReport::write_tables(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  auto open = [&dir](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw Error("cannot write " + (dir / name).string());
    return f;
  };
  auto t1 = open("table1.csv");
  t1 << "model,examples,accuracy,p_bar,go1,go1_macro\n";
  for (const auto& m : models)
    t1 << m.name << ',' << m.examples << ',' << m.accuracy << ',' << m.p_bar << ',' << m.go1 << ',' << m.go1_macro
       << '\n';
  auto t2 = open("table2.csv");
  t2 << "model,goal,examples,accuracy,p_bar,go1\n";
  for (const auto& m : models)
    for (const auto& g : m.goals)
      t2 << m.name << ',' << g.goal << ',' << g.examples << ',' << g.accuracy << ',' << g.p_bar << ',' << g.go1 << '\n';
  auto t3 = open("table3.csv");
  t3 << "model,goal,examples,tuned_accuracy,tuned_go1,control_accuracy,control_go1\n";
  for (const auto& [name, rows] : adversarial)
    for (const auto& a : rows)
      t3 << name << ',' << a.goal << ',' << a.examples << ',' << a.tuned.accuracy << ',' << a.tuned.go1 << ','
         << a.control.accuracy << ',' << a.control.go1 << '\n';
}

}  // namespace goalrec
