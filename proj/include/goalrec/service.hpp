#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>

#include "goalrec/corpus.hpp"
#include "goalrec/error.hpp"
#include "goalrec/goals.hpp"
#include "goalrec/recommender.hpp"

namespace httplib {
class Server;
}

namespace goalrec {

struct ServiceConfig {
  std::size_t top_k = 5;
  std::size_t window = 10;
  std::chrono::seconds ttl{6 * 3600};
  std::size_t preview = 5;
  std::filesystem::path static_dir;  // web client bundle; empty = not served
};

// Carries the HTTP status and a stable machine-readable code.
class ServiceError : public Error {
 public:
  ServiceError(int status, std::string code, const std::string& what)
      : Error(what), status_(status), code_(std::move(code)) {}
  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }

 private:
  int status_;
  std::string code_;
};

struct Recommendation {
  std::string cmd;
  double p = 0.0;
};

// Live goal-selected sessions over one shared read-only model. Sessions expire
// `ttl` after their last activity.
class SessionManager {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  SessionManager(Vocabulary vocab, GoalModel goals, std::shared_ptr<const Recommender> model,
                 ServiceConfig config = {}, Clock clock = {});

  struct Created {
    std::string session;
    std::vector<Recommendation> recommendations;
  };
  struct Update {
    std::vector<Recommendation> recommendations;
    std::size_t window_len = 0;
  };

  Created create(GoalId goal);
  Update post(const std::string& session, std::string_view token);
  void remove(const std::string& session);
  std::size_t live_sessions() const;

  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  const GoalModel& goals() const noexcept { return goals_; }
  const ServiceConfig& config() const noexcept { return config_; }
  std::vector<Recommendation> goal_preview(GoalId goal, std::size_t n) const;

 private:
  struct Live {
    GoalId goal = 0;
    std::vector<Command> buffer;  // oldest first, at most config.window
    std::chrono::steady_clock::time_point last_seen;
    std::mutex mutex;
  };

  std::shared_ptr<Live> find(const std::string& session) const;
  std::vector<Recommendation> render(std::span<const Scored> scored) const;
  std::string new_id();

  Vocabulary vocab_;
  GoalModel goals_;
  std::shared_ptr<const Recommender> model_;
  ServiceConfig config_;
  Clock clock_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Live>> sessions_;
  std::uint64_t id_state_;
};

// Registers the JSON routes (and the static mount when configured).
void install_routes(httplib::Server& server, SessionManager& sessions);

// Loads a finished run directory and the named model for serving.
std::unique_ptr<SessionManager> load_service(const std::filesystem::path& run_dir, const std::string& model,
                                             ServiceConfig config = {});

}  // namespace goalrec
