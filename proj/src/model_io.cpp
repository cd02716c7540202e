#include <istream>
#include <ostream>
#include <sstream>

#include "goalrec/baselines.hpp"
#include "goalrec/error.hpp"
#include "goalrec/neural.hpp"
#include "goalrec/text_io.hpp"

namespace goalrec {

FineTunedRecommender::FineTunedRecommender(Parameters global, std::vector<std::optional<Parameters>> per_goal)
    : global_(std::move(global)), per_goal_(std::move(per_goal)) {
  const auto& c = global_.config();
  if (!c.goal_informed()) throw Error("fine-tuned set needs a goal-informed global model");
  if (per_goal_.size() != c.goal_count) throw Error("fine-tuned set must have one entry per goal");
  for (const auto& p : per_goal_)
    if (p && p->config() != c) throw Error("fine-tuned model configuration differs from the global model");
}

const Parameters& FineTunedRecommender::for_goal(GoalId goal) const {
  if (goal >= per_goal_.size())
    throw Error("goal " + std::to_string(goal) + " out of range (K = " + std::to_string(per_goal_.size()) + ")");
  return per_goal_[goal] ? *per_goal_[goal] : global_;
}

Distribution FineTunedRecommender::predict_dist(std::span<const Command> window, std::optional<GoalId> goal) const {
  if (!goal) throw Error("fine-tuned model: prediction needs a goal");
  return forward(for_goal(*goal), window, goal);
}

void FineTunedRecommender::save(std::ostream& out) const {
  out << "goalrec-model finetuned 1\n";
  global_.save(out);
  out << "goals " << per_goal_.size() << '\n';
  for (std::size_t g = 0; g < per_goal_.size(); ++g) {
    out << "goal " << g << (per_goal_[g] ? " tuned" : " global") << '\n';
    if (per_goal_[g]) per_goal_[g]->save(out);
  }
}

namespace {

std::unique_ptr<Recommender> load_finetuned(std::istream& in) {
  auto global = Parameters::load(in);
  std::istringstream h(read_line(in, "fine-tuned goals"));
  std::string tag;
  std::size_t k = 0;
  if (!(h >> tag >> k) || tag != "goals") throw Error("malformed fine-tuned model");
  std::vector<std::optional<Parameters>> per_goal(k);
  for (std::size_t g = 0; g < k; ++g) {
    std::istringstream line(read_line(in, "fine-tuned goal"));
    std::size_t id = 0;
    std::string state;
    if (!(line >> tag >> id >> state) || tag != "goal" || id != g || (state != "tuned" && state != "global"))
      throw Error("malformed fine-tuned goal entry");
    if (state == "tuned") per_goal[g] = Parameters::load(in);
  }
  return std::make_unique<FineTunedRecommender>(std::move(global), std::move(per_goal));
}

}  // namespace

std::unique_ptr<Recommender> load_recommender(std::istream& in) {
  std::istringstream header(read_line(in, "model header"));
  std::string magic, kind, version;
  if (!(header >> magic >> kind >> version) || magic != "goalrec-model" || version != "1")
    throw Error("not a goalrec model file");
  if (kind == "top50") return std::make_unique<Top50Model>(Top50Model::load_body(in));
  if (kind == "markov1") return std::make_unique<MarkovModel>(MarkovModel::load_body(in, 1));
  if (kind == "markov2") return std::make_unique<MarkovModel>(MarkovModel::load_body(in, 2));
  if (kind == "cpt") return std::make_unique<CptModel>(CptModel::load_body(in));
  if (kind == "ensemble") return std::make_unique<EnsembleModel>(EnsembleModel::load_body(in));
  if (kind == "finetuned") return load_finetuned(in);
  if (kind == "neural") {
    std::istringstream line(read_line(in, "model name"));
    std::string tag, name;
    if (!(line >> tag >> name) || tag != "name") throw Error("malformed neural model header");
    return std::make_unique<NeuralRecommender>(Parameters::load(in), name);
  }
  throw Error("unknown model kind '" + kind + "'");
}

}  // namespace goalrec
