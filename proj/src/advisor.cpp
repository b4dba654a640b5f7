#include "altplan/advisor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include "httplib.h"

#include "altplan/acquisition.hpp"
#include "altplan/errors.hpp"
#include "altplan/update.hpp"

namespace altplan::advisor {

namespace {

json config_error_fields(const ConfigError& e) {
  json fields = json::array();
  for (const auto& f : e.fields()) fields.push_back({{"field", f.name}, {"message", f.message}});
  return fields;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

json design_json(const CandidateSet& cands, const GridCell& cell) {
  return {{"z_index", cell.z_index},
          {"v_index", cell.v_index},
          {"z", vector_to_json(cands.materials.at(cell.z_index))},
          {"v", vector_to_json(cands.stresses.at(cell.v_index))}};
}

json observation_json(const Observation& o) {
  return {{"z", vector_to_json(o.design.z)},
          {"v", vector_to_json(o.design.v)},
          {"log_tau", o.log_tau},
          {"failed", o.failed},
          {"y", o.y}};
}

Observation observation_from_json(const json& j) {
  Observation o;
  o.design.z = vector_from_json(j.at("z"));
  o.design.v = vector_from_json(j.at("v"));
  o.log_tau = j.at("log_tau").get<double>();
  o.failed = j.at("failed").get<bool>();
  o.y = j.at("y").get<double>();
  return o;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

double fit_noise_var(const std::vector<Observation>& history) {
  std::vector<Observation> failures;
  for (const auto& o : history) {
    if (o.failed) failures.push_back(o);
  }
  if (failures.empty()) throw ConfigError("history", "needs uncensored rows to fit noise_var");
  const CensoredData data = CensoredData::from_observations(failures);
  const auto n = data.X.rows();
  const auto q = data.X.cols();
  if (n <= q) {
    throw ConfigError("history", "needs more uncensored rows than regression coefficients (" +
                                       std::to_string(q) + ") to fit noise_var");
  }
  const Eigen::ColPivHouseholderQR<Matrix> qr(data.X);
  if (qr.rank() < q) throw ConfigError("history", "uncensored rows do not identify every coefficient");
  const Vector beta = qr.solve(data.value);
  const double rss = (data.value - data.X * beta).squaredNorm();
  const double var = rss / static_cast<double>(n - q);
  if (!(var > 0.0)) throw ConfigError("history", "residual variance is zero");
  return var;
}

SessionConfig SessionConfig::parse(const json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "session configuration must be an object");
  SessionConfig c;
  std::vector<ConfigError::Field> errs;

  try {
    c.cands = candidates_from_json(j);
  } catch (const ConfigError& e) {
    for (const auto& f : e.fields()) errs.push_back(f);
  }
  const bool cands_ok = errs.empty();

  if (j.contains("labels")) {
    try {
      c.labels = j.at("labels").get<std::vector<std::string>>();
      if (cands_ok && c.labels.size() != c.cands.num_materials()) {
        errs.push_back({"labels", "needs one label per material"});
      }
    } catch (const std::exception&) {
      errs.push_back({"labels", "must be a list of strings"});
    }
  }
  if (c.labels.empty() && cands_ok) {
    for (std::size_t k = 0; k < c.cands.num_materials(); ++k) c.labels.push_back("material " + std::to_string(k + 1));
  }

  c.default_tau = 1.0;
  if (j.contains("tau")) {
    if (!j.at("tau").is_number() || !(j.at("tau").get<double>() > 0.0)) {
      errs.push_back({"tau", "must be a positive number"});
    } else {
      c.default_tau = j.at("tau").get<double>();
    }
  }

  if (j.contains("policy")) {
    const auto p = j.at("policy").is_string() ? parse_policy(j.at("policy").get<std::string>()) : std::nullopt;
    if (!p) errs.push_back({"policy", "must be one of SeqEI, SeqD, Design"});
    else c.policy = *p;
  }
  if (j.contains("track")) {
    const auto t = j.at("track").is_string() ? parse_track(j.at("track").get<std::string>()) : std::nullopt;
    if (!t) errs.push_back({"track", "must be approx or exact"});
    else c.track = *t;
  }
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) errs.push_back({"seed", "must be a non-negative integer"});
    else c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (c.policy == PolicyKind::FactorialRandomized) {
    if (!j.contains("n_total") || !j.at("n_total").is_number_unsigned() || j.at("n_total").get<std::size_t>() < 1) {
      errs.push_back({"n_total", "a positive run count is required for the Design policy"});
    } else {
      c.n_total = j.at("n_total").get<std::size_t>();
    }
  }

  if (j.contains("history") && cands_ok) {
    const auto& h = j.at("history");
    if (!h.is_array()) {
      errs.push_back({"history", "must be a list of {z, v, lifetime, tau} rows"});
    } else {
      for (std::size_t i = 0; i < h.size(); ++i) {
        const std::string name = "history[" + std::to_string(i) + "]";
        try {
          const auto& row = h[i];
          Observation o;
          o.design.z = vector_from_json(row.at("z"));
          o.design.v = vector_from_json(row.at("v"));
          if (o.design.z.size() != c.cands.p() || o.design.v.size() != c.cands.d()) {
            errs.push_back({name, "z and v must match the candidate dimensions"});
            continue;
          }
          const double tau = row.contains("tau") ? row.at("tau").get<double>() : c.default_tau;
          if (!(tau > 0.0)) {
            errs.push_back({name, "tau must be positive"});
            continue;
          }
          o.log_tau = std::log(tau);
          if (row.at("lifetime").is_null()) {
            o.failed = false;
          } else {
            const double life = row.at("lifetime").get<double>();
            if (!(life > 0.0) || life > tau) {
              errs.push_back({name, "lifetime must be positive and not exceed tau"});
              continue;
            }
            o.failed = true;
            o.y = std::log(life);
          }
          c.history.push_back(o);
        } catch (const std::exception&) {
          errs.push_back({name, "needs numeric z, v, tau and a lifetime (number or null)"});
        }
      }
    }
  }

  double noise_var = 0.0;
  const bool want_fit = !j.contains("noise_var") || (j.at("noise_var").is_string() && j.at("noise_var") == "fit");
  if (want_fit) {
    if (!j.contains("history")) {
      errs.push_back({"noise_var", "is required unless history is supplied to fit it"});
    } else if (errs.empty()) {
      try {
        noise_var = fit_noise_var(c.history);
        c.noise_var_fitted = true;
      } catch (const ConfigError& e) {
        for (const auto& f : e.fields()) errs.push_back(f);
      }
    }
  } else if (!j.at("noise_var").is_number() || !(j.at("noise_var").get<double>() > 0.0)) {
    errs.push_back({"noise_var", "must be a positive number or \"fit\""});
  } else {
    noise_var = j.at("noise_var").get<double>();
  }

  if (errs.empty()) {
    const Eigen::Index dim = c.cands.feature_dim();
    const json prior = j.value("prior", json("diffuse"));
    if (prior.is_string() && prior == "diffuse") {
      double prior_var = 100.0;
      if (j.contains("prior_var")) {
        if (!j.at("prior_var").is_number() || !(j.at("prior_var").get<double>() > 0.0)) {
          errs.push_back({"prior_var", "must be a positive number"});
        } else {
          prior_var = j.at("prior_var").get<double>();
        }
      }
      c.prior = PosteriorState::diffuse(dim, noise_var, prior_var);
    } else if (prior.is_object()) {
      try {
        json p = prior;
        p["noise_var"] = noise_var;
        c.prior = posterior_from_json(p);
        if (c.prior.dim() != dim) {
          errs.push_back({"prior", "theta length must be " + std::to_string(dim)});
        }
      } catch (const std::exception& e) {
        errs.push_back({"prior", std::string("invalid prior: ") + e.what()});
      }
    } else {
      errs.push_back({"prior", "must be \"diffuse\" or {theta, sigma_mat}"});
    }
  }
  if (!errs.empty()) throw ConfigError(std::move(errs));

  for (const auto& o : c.history) c.prior = absorb(c.prior, o);
  c.prior.n = 0;
  return c;
}

// ---------------------------------------------------------------------------
// Session

std::unique_ptr<Session> Session::create(std::string id, const json& config) {
  std::unique_ptr<Session> s(new Session(std::move(id)));
  s->record({{"type", "Created"}, {"config", config}});
  return s;
}

std::unique_ptr<Session> Session::replay(std::string id, const std::vector<json>& events) {
  std::unique_ptr<Session> s(new Session(std::move(id)));
  if (events.empty() || events.front().value("type", "") != "Created") {
    throw std::invalid_argument("event log must start with Created");
  }
  for (const json& e : events) {
    s->apply(e);
    s->events_.push_back(e);
  }
  s->persisted_ = s->events_.size();
  return s;
}

void Session::record(json event) {
  event["seq"] = events_.size();
  event["ts"] = utc_timestamp();
  apply(event);
  events_.push_back(std::move(event));
}

std::vector<json> Session::take_pending() {
  std::vector<json> out(events_.begin() + static_cast<std::ptrdiff_t>(persisted_), events_.end());
  persisted_ = events_.size();
  return out;
}

void Session::apply(const json& event) {
  const std::string type = event.at("type").get<std::string>();
  if (type == "Created") {
    config_ = SessionConfig::parse(event.at("config"));
    belief_ = config_.prior;
    data_ = config_.history;
    policy_ = config_.policy == PolicyKind::FactorialRandomized
                  ? PolicyState(config_.policy, config_.cands, config_.n_total, config_.seed)
                  : PolicyState::sequential(config_.policy, config_.seed);
    const Decision d = decide_best(config_.track, belief_, data_, config_.cands, belief_.noise_var);
    best_ = d.best;
    best_fell_back_ = d.fell_back;
    if (d.beta_hat) warm_start_ = d.beta_hat;
  } else if (type == "Recommended") {
    Recommendation r{{event.at("z_index").get<std::size_t>(), event.at("v_index").get<std::size_t>()},
                     event.at("ei_value").get<double>()};
    if (policy_ && policy_->kind() == PolicyKind::FactorialRandomized) {
      const DesignChoice c = policy_->next_choice(belief_, config_.cands);
      if (!(c.cell == r.cell)) throw std::invalid_argument("Recommended event disagrees with the schedule");
    }
    outstanding_ = r;
  } else if (type == "Observed") {
    const Observation obs = observation_from_json(event.at("observation"));
    obs.validate();
    belief_ = absorb(belief_, obs);
    data_.push_back(obs);
    outstanding_.reset();
  } else if (type == "Decided") {
    best_ = event.at("best_index").get<std::size_t>();
    best_fell_back_ = event.value("fell_back", false);
  } else if (type == "Voided") {
    outstanding_.reset();
  } else {
    throw std::invalid_argument("unknown event type " + type);
  }
}

json Session::ranking() const {
  std::vector<MaterialSummary> rows = target_summary(belief_, config_.cands);
  std::stable_sort(rows.begin(), rows.end(),
                   [](const MaterialSummary& a, const MaterialSummary& b) { return a.mean > b.mean; });
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"material_index", r.material_index},
                   {"label", config_.labels.at(r.material_index)},
                   {"z", vector_to_json(config_.cands.materials[r.material_index])},
                   {"mean", r.mean},
                   {"sd", r.sd},
                   {"best", r.material_index == best_}});
  }
  return out;
}

json Session::recommendation_payload() const {
  return {{"design", design_json(config_.cands, outstanding_->cell)},
          {"ei_value", outstanding_->ei_value},
          {"ranking", ranking()},
          {"best_index", best_}};
}

json Session::recommend() {
  if (outstanding_) return recommendation_payload();
  PolicyState probe = *policy_;
  DesignChoice choice;
  try {
    choice = probe.next_choice(belief_, config_.cands);
  } catch (const ScheduleExhausted&) {
    throw ApiError(409, "the factorial schedule is exhausted");
  }
  const double ei = config_.policy == PolicyKind::SeqEI
                        ? choice.score
                        : ei_score(belief_, config_.cands.design(choice.cell.z_index, choice.cell.v_index),
                                   config_.cands);
  record({{"type", "Recommended"},
          {"z_index", choice.cell.z_index},
          {"v_index", choice.cell.v_index},
          {"design", design_json(config_.cands, choice.cell)},
          {"ei_value", ei}});
  return recommendation_payload();
}

json Session::observe(const json& body) {
  if (!outstanding_) throw ApiError(409, "no outstanding recommendation to attach the observation to");
  if (!body.is_object() || !body.contains("lifetime")) {
    throw ApiError(422, "body needs a lifetime (number, or null when censored)",
                   json::array({{{"field", "lifetime"}, {"message", "is required"}}}));
  }
  double tau = config_.default_tau;
  if (body.contains("tau") && !body.at("tau").is_null()) {
    if (!body.at("tau").is_number() || !(body.at("tau").get<double>() > 0.0)) {
      throw ApiError(422, "tau must be a positive number",
                     json::array({{{"field", "tau"}, {"message", "must be positive"}}}));
    }
    tau = body.at("tau").get<double>();
  }
  const json& life = body.at("lifetime");
  Observation obs;
  obs.design = config_.cands.design(outstanding_->cell.z_index, outstanding_->cell.v_index);
  obs.log_tau = std::log(tau);
  if (life.is_null()) {
    obs.failed = false;
  } else {
    if (!life.is_number()) {
      throw ApiError(422, "lifetime must be a number or null",
                     json::array({{{"field", "lifetime"}, {"message", "wrong type"}}}));
    }
    const double t = life.get<double>();
    if (!(t > 0.0)) {
      throw ApiError(422, "lifetime must be positive",
                     json::array({{{"field", "lifetime"}, {"message", "must be positive"}}}));
    }
    if (t > tau) {
      throw ApiError(422, "a failure cannot be recorded after the observation time tau",
                     json::array({{{"field", "lifetime"}, {"message", "exceeds tau"}}}));
    }
    obs.failed = true;
    obs.y = std::log(t);
  }

  record({{"type", "Observed"},
          {"observation", observation_json(obs)},
          {"lifetime", life},
          {"tau", tau}});
  const Decision d = decide_best(config_.track, belief_, data_, config_.cands, belief_.noise_var, warm_start_);
  if (d.beta_hat) warm_start_ = d.beta_hat;
  record({{"type", "Decided"}, {"best_index", d.best}, {"fell_back", d.fell_back}});

  return {{"censored", !obs.failed},
          {"best_index", best_},
          {"fell_back", best_fell_back_},
          {"n", belief_.n},
          {"ranking", ranking()}};
}

json Session::void_recommendation() {
  if (!outstanding_) throw ApiError(409, "no outstanding recommendation to void");
  record({{"type", "Voided"}});
  return {{"voided", true}};
}

json Session::view() const {
  return {{"session_id", id_},
          {"candidates", to_json(config_.cands)},
          {"labels", config_.labels},
          {"policy", std::string(to_string(config_.policy))},
          {"track", std::string(to_string(config_.track))},
          {"default_tau", config_.default_tau},
          {"noise_var_fitted", config_.noise_var_fitted},
          {"belief", to_json(belief_)},
          {"ranking", ranking()},
          {"best_index", best_},
          {"outstanding", outstanding_ ? recommendation_payload() : json(nullptr)},
          {"events", events_}};
}

json Session::export_log() const { return {{"session_id", id_}, {"events", events_}}; }

// ---------------------------------------------------------------------------
// Store

SessionStore::SessionStore(std::filesystem::path data_dir) : dir_(std::move(data_dir)) {
  std::filesystem::create_directories(dir_ / "sessions");
  for (const auto& entry : std::filesystem::directory_iterator(dir_ / "sessions")) {
    if (entry.path().extension() != ".jsonl") continue;
    std::ifstream in(entry.path());
    std::vector<json> events;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) events.push_back(json::parse(line));
    }
    const std::string id = entry.path().stem().string();
    sessions_[id] = Session::replay(id, events);
  }
}

std::filesystem::path SessionStore::log_path(const std::string& id) const {
  return dir_ / "sessions" / (id + ".jsonl");
}

std::string SessionStore::fresh_id() const {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()));
  return buf;
}

void SessionStore::persist(Session& s) {
  const std::vector<json> pending = s.take_pending();
  if (pending.empty()) return;
  std::ofstream out(log_path(s.id()), std::ios::app | std::ios::binary);
  for (const auto& e : pending) out << e.dump() << '\n';
  out.flush();
  if (!out) throw std::runtime_error("failed to append to session log " + log_path(s.id()).string());
}

std::string SessionStore::create(const json& config) {
  std::unique_ptr<Session> fresh;
  std::string id;
  std::unique_lock lock(mu_);
  do {
    id = fresh_id();
  } while (sessions_.count(id) != 0);
  fresh = Session::create(id, config);
  std::shared_ptr<Session> s(std::move(fresh));
  {
    std::lock_guard slock(s->mutex());
    persist(*s);
  }
  sessions_[id] = s;
  return id;
}

std::string SessionStore::import(const json& exported) {
  if (!exported.is_object() || !exported.contains("session_id") || !exported.contains("events") ||
      !exported.at("session_id").is_string() || !exported.at("events").is_array()) {
    throw ApiError(400, "import needs {session_id, events}");
  }
  const std::string id = exported.at("session_id").get<std::string>();
  if (id.empty() || id.find_first_not_of("0123456789abcdef") != std::string::npos) {
    throw ApiError(400, "session_id must be lowercase hex");
  }
  std::vector<json> events = exported.at("events").get<std::vector<json>>();
  std::shared_ptr<Session> s;
  try {
    s = Session::replay(id, events);
  } catch (const ConfigError& e) {
    throw ApiError(400, e.what(), config_error_fields(e));
  } catch (const std::exception& e) {
    throw ApiError(400, std::string("event log does not replay: ") + e.what());
  }
  std::unique_lock lock(mu_);
  if (sessions_.count(id) != 0) throw ApiError(409, "session already exists");
  {
    std::ofstream out(log_path(id), std::ios::trunc | std::ios::binary);
    for (const auto& e : events) out << e.dump() << '\n';
  }
  sessions_[id] = s;
  return id;
}

std::shared_ptr<Session> SessionStore::find(const std::string& id) const {
  std::shared_lock lock(mu_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::size_t SessionStore::size() const {
  std::shared_lock lock(mu_);
  return sessions_.size();
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const ApiError& e) {
    send_json(res, e.status(), e.body());
  } catch (const ConfigError& e) {
    send_json(res, 400, {{"error", e.what()}, {"fields", config_error_fields(e)}});
  } catch (const json::exception& e) {
    send_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}, {"fields", json::array()}});
  } catch (const std::exception& e) {
    send_json(res, 500, {{"error", e.what()}, {"fields", json::array()}});
  }
}

std::shared_ptr<Session> require_session(SessionStore& store, const std::string& id) {
  auto s = store.find(id);
  if (!s) throw ApiError(404, "unknown session " + id);
  return s;
}

}  // namespace

void install_routes(httplib::Server& server, SessionStore& store,
                    const std::optional<std::filesystem::path>& ui_dir) {
  server.Post("/sessions/import", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 201, {{"session_id", store.import(json::parse(req.body))}}); });
  });

  server.Post("/sessions", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 201, {{"session_id", store.create(json::parse(req.body))}}); });
  });

  server.Get(R"(/sessions/([0-9a-f]+)/recommendation)",
             [&store](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] {
                 auto s = require_session(store, req.matches[1]);
                 std::lock_guard lock(s->mutex());
                 const json body = s->recommend();
                 store.persist(*s);
                 send_json(res, 200, body);
               });
             });

  server.Post(R"(/sessions/([0-9a-f]+)/recommendation/void)",
              [&store](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  auto s = require_session(store, req.matches[1]);
                  std::lock_guard lock(s->mutex());
                  const json body = s->void_recommendation();
                  store.persist(*s);
                  send_json(res, 200, body);
                });
              });

  server.Post(R"(/sessions/([0-9a-f]+)/observations)",
              [&store](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  auto s = require_session(store, req.matches[1]);
                  const json body = json::parse(req.body);
                  std::lock_guard lock(s->mutex());
                  const json out = s->observe(body);
                  store.persist(*s);
                  send_json(res, 200, out);
                });
              });

  server.Get(R"(/sessions/([0-9a-f]+))", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto s = require_session(store, req.matches[1]);
      std::lock_guard lock(s->mutex());
      send_json(res, 200, s->view());
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+)/export)",
             [&store](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] {
                 auto s = require_session(store, req.matches[1]);
                 std::lock_guard lock(s->mutex());
                 send_json(res, 200, s->export_log());
               });
             });

  if (ui_dir) server.set_mount_point("/", ui_dir->string());
}

}  // namespace altplan::advisor
