#include "goalrec/service.hpp"

#include <cstdio>
#include <fstream>
#include <random>

#include "goalrec/pipeline.hpp"
#include "goalrec/random.hpp"
#include "httplib.h"
#include "json.hpp"

namespace goalrec {

using json = nlohmann::json;

SessionManager::SessionManager(Vocabulary vocab, GoalModel goals, std::shared_ptr<const Recommender> model,
                               ServiceConfig config, Clock clock)
    : vocab_(std::move(vocab)),
      goals_(std::move(goals)),
      model_(std::move(model)),
      config_(std::move(config)),
      clock_(clock ? std::move(clock) : Clock([] { return std::chrono::steady_clock::now(); })),
      id_state_(std::random_device{}()) {
  if (!model_) throw Error("service: no model loaded");
  if (goals_.k() == 0) throw Error("service: goal model has no goals");
  if (model_->output_size() != vocab_.data_count())
    throw Error("service: model predicts " + std::to_string(model_->output_size()) + " data commands, vocabulary has " +
                std::to_string(vocab_.data_count()));
  if (config_.window < 1 || config_.top_k < 1) throw Error("service: window and top_k must be >= 1");
  id_state_ = (id_state_ << 32) ^ std::random_device{}();
}

std::string SessionManager::new_id() {
  char buf[33];
  const auto a = mix_seed(id_state_, 1), b = mix_seed(id_state_, 2);
  ++id_state_;
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(a),
                static_cast<unsigned long long>(b));
  return buf;
}

std::vector<Recommendation> SessionManager::render(std::span<const Scored> scored) const {
  std::vector<Recommendation> out;
  for (const auto& s : scored) out.push_back({vocab_.slot_token(s.slot), s.p});
  return out;
}

std::vector<Recommendation> SessionManager::goal_preview(GoalId goal, std::size_t n) const {
  if (goal >= goals_.k()) throw ServiceError(404, "unknown_goal", "no goal " + std::to_string(goal));
  const auto top = top_k(goals_.goal_defs[goal], n);
  return render(top);
}

SessionManager::Created SessionManager::create(GoalId goal) {
  Created c{{}, goal_preview(goal, config_.top_k)};
  auto live = std::make_shared<Live>();
  live->goal = goal;
  const auto now = clock_();
  live->last_seen = now;
  std::unique_lock lock(mutex_);
  // Sessions idle for two TTLs are forgotten; younger expired ones still answer 410.
  std::erase_if(sessions_, [&](const auto& kv) {
    std::lock_guard l(kv.second->mutex);
    return now - kv.second->last_seen > 2 * config_.ttl;
  });
  do c.session = new_id();
  while (sessions_.count(c.session));
  sessions_.emplace(c.session, std::move(live));
  return c;
}

std::shared_ptr<SessionManager::Live> SessionManager::find(const std::string& session) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(session);
  if (it == sessions_.end()) throw ServiceError(404, "unknown_session", "no session " + session);
  return it->second;
}

SessionManager::Update SessionManager::post(const std::string& session, std::string_view token) {
  if (token.empty()) throw ServiceError(400, "bad_request", "cmd must be a non-empty string");
  auto live = find(session);
  std::unique_lock lock(live->mutex);
  const auto now = clock_();
  if (now - live->last_seen > config_.ttl) {
    lock.unlock();
    throw ServiceError(410, "session_expired", "session " + session + " has expired");
  }
  live->last_seen = now;
  live->buffer.push_back(vocab_.lookup(token));
  if (live->buffer.size() > config_.window) live->buffer.erase(live->buffer.begin());
  Update u;
  u.window_len = live->buffer.size();
  u.recommendations = render(model_->recommend(live->buffer, live->goal, config_.top_k));
  return u;
}

void SessionManager::remove(const std::string& session) {
  std::unique_lock lock(mutex_);
  if (!sessions_.erase(session)) throw ServiceError(404, "unknown_session", "no session " + session);
}

std::size_t SessionManager::live_sessions() const {
  std::shared_lock lock(mutex_);
  return sessions_.size();
}

namespace {

json to_json(const std::vector<Recommendation>& recs) {
  auto out = json::array();
  for (const auto& r : recs) out.push_back({{"cmd", r.cmd}, {"p", r.p}});
  return out;
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  reply(res, status, {{"error", message}, {"code", code}});
}

json parse_body(const httplib::Request& req) {
  auto body = json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) throw ServiceError(400, "bad_request", "body must be a JSON object");
  return body;
}

template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      reply_error(res, e.status(), e.code(), e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, "internal", e.what());
    }
  };
}

}  // namespace

void install_routes(httplib::Server& server, SessionManager& sessions) {
  server.Get("/goals", guarded([&sessions](const httplib::Request&, httplib::Response& res) {
    const auto& gm = sessions.goals();
    auto goals = json::array();
    for (GoalId g = 0; g < gm.k(); ++g) {
      const auto label = g < gm.labels.size() && !gm.labels[g].empty() ? gm.labels[g] : std::to_string(g);
      goals.push_back(
          {{"id", g}, {"label", label}, {"preview", to_json(sessions.goal_preview(g, sessions.config().preview))}});
    }
    reply(res, 200, {{"goals", goals}});
  }));

  server.Get("/vocabulary", guarded([&sessions](const httplib::Request&, httplib::Response& res) {
    const auto& v = sessions.vocabulary();
    auto commands = json::array();
    for (CommandId id = 1; id < v.size(); ++id)
      commands.push_back({{"token", v.token(id)}, {"kind", v.kind(id) == CommandKind::Data ? "DC" : "SC"}});
    reply(res, 200, {{"commands", commands}});
  }));

  server.Post("/sessions", guarded([&sessions](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto it = body.find("goal");
    if (it == body.end() || !it->is_number_integer())
      throw ServiceError(400, "bad_request", "goal must be an integer");
    const auto g = it->get<std::int64_t>();
    if (g < 0 || static_cast<std::uint64_t>(g) >= sessions.goals().k())
      throw ServiceError(404, "unknown_goal", "no goal " + std::to_string(g));
    const auto c = sessions.create(static_cast<GoalId>(g));
    reply(res, 201, {{"session", c.session}, {"recommendations", to_json(c.recommendations)}});
  }));

  server.Post("/sessions/:id/commands", guarded([&sessions](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto it = body.find("cmd");
    if (it == body.end() || !it->is_string()) throw ServiceError(400, "bad_request", "cmd must be a string");
    const auto u = sessions.post(req.path_params.at("id"), it->get<std::string>());
    reply(res, 200, {{"recommendations", to_json(u.recommendations)}, {"window_len", u.window_len}});
  }));

  server.Delete("/sessions/:id", guarded([&sessions](const httplib::Request& req, httplib::Response& res) {
    sessions.remove(req.path_params.at("id"));
    res.status = 204;
  }));

  const auto& dir = sessions.config().static_dir;
  if (!dir.empty() && !server.set_mount_point("/", dir.string()))
    throw Error("service: static directory " + dir.string() + " does not exist");

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) reply_error(res, res.status, res.status == 404 ? "not_found" : "http_error", "no such route");
  });
}

std::unique_ptr<SessionManager> load_service(const std::filesystem::path& run_dir, const std::string& model,
                                             ServiceConfig config) {
  RunLayout layout{run_dir};
  Vocabulary vocab;
  GoalModel goals;
  {
    std::ifstream in(layout.vocabulary());
    if (!in) throw Error("cannot read " + layout.vocabulary().string());
    vocab = Vocabulary::load(in);
  }
  {
    std::ifstream in(layout.goal_model());
    if (!in) throw Error("cannot read " + layout.goal_model().string());
    goals = GoalModel::load(in);
  }
  std::ifstream in(layout.model(model));
  if (!in) throw Error("cannot read " + layout.model(model).string());
  std::shared_ptr<const Recommender> rec = load_recommender(in);
  return std::make_unique<SessionManager>(std::move(vocab), std::move(goals), std::move(rec), std::move(config));
}

}  // namespace goalrec
