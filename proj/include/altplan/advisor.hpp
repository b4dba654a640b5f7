#pragma once

// Live experiment advisor: event-sourced sessions persisted as one JSON-lines
// log per session, and the HTTP+JSON service in front of them.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "altplan/model.hpp"
#include "altplan/policy.hpp"

namespace httplib {
class Server;
}

namespace altplan::advisor {

using nlohmann::json;

/// Error carrying an HTTP status and a JSON body.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, std::string message, json fields = json::array())
      : std::runtime_error(message), status_(status), fields_(std::move(fields)) {}
  int status() const { return status_; }
  json body() const { return {{"error", what()}, {"fields", fields_}}; }

 private:
  int status_;
  json fields_;
};

/// Resolved session configuration.
struct SessionConfig {
  CandidateSet cands;
  std::vector<std::string> labels;
  PosteriorState prior;              // after absorbing any uploaded history
  std::vector<Observation> history;
  double default_tau = 1.0;
  PolicyKind policy = PolicyKind::SeqEI;
  DecisionTrack track = DecisionTrack::Approx;
  std::size_t n_total = 0;           // factorial schedule length
  std::uint64_t seed = 0;
  bool noise_var_fitted = false;

  /// Throws ConfigError with field-level messages.
  static SessionConfig parse(const json& j);
};

/// Residual variance of an OLS fit to the uncensored rows of `history`.
double fit_noise_var(const std::vector<Observation>& history);

class Session {
 public:
  struct Recommendation {
    GridCell cell;
    double ei_value = 0.0;
  };

  /// Fresh session; records the Created event.
  static std::unique_ptr<Session> create(std::string id, const json& config);
  /// Rebuilds a session by folding its event log.
  static std::unique_ptr<Session> replay(std::string id, const std::vector<json>& events);

  const std::string& id() const { return id_; }
  const PosteriorState& belief() const { return belief_; }
  const SessionConfig& config() const { return config_; }
  const std::vector<json>& events() const { return events_; }
  const std::optional<Recommendation>& outstanding() const { return outstanding_; }
  std::size_t best_index() const { return best_; }

  /// Serves the outstanding recommendation, or computes and records a new one.
  json recommend();
  /// Body: {"lifetime": number|null, "tau": number (optional)}.
  json observe(const json& body);
  /// Drops the outstanding recommendation without touching the belief.
  json void_recommendation();

  json ranking() const;
  json view() const;
  json export_log() const;

  /// Events appended since the last call (for persistence).
  std::vector<json> take_pending();

  std::mutex& mutex() { return mu_; }

 private:
  explicit Session(std::string id) : id_(std::move(id)) {}
  void apply(const json& event);
  void record(json event);
  json recommendation_payload() const;

  std::string id_;
  SessionConfig config_;
  PosteriorState belief_;
  std::optional<PolicyState> policy_;
  std::vector<Observation> data_;
  std::optional<Recommendation> outstanding_;
  std::optional<Vector> warm_start_;
  std::size_t best_ = 0;
  bool best_fell_back_ = false;
  std::vector<json> events_;
  std::size_t persisted_ = 0;
  std::mutex mu_;
};

/// Sessions kept in memory and mirrored to <data_dir>/sessions/<id>.jsonl.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path data_dir);

  std::string create(const json& config);
  std::shared_ptr<Session> find(const std::string& id) const;
  /// Creates a session from an exported log. Fails with 409 if the id exists.
  std::string import(const json& exported);

  /// Appends pending events of `s` to its log file. Call with the session locked.
  void persist(Session& s);

  std::size_t size() const;
  const std::filesystem::path& data_dir() const { return dir_; }

 private:
  std::filesystem::path log_path(const std::string& id) const;
  std::string fresh_id() const;

  std::filesystem::path dir_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// Registers the API routes (and, when given, static files) on `server`.
void install_routes(httplib::Server& server, SessionStore& store,
                    const std::optional<std::filesystem::path>& ui_dir = std::nullopt);

}  // namespace altplan::advisor
