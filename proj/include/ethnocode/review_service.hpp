#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "ethnocode/coder.hpp"
#include "ethnocode/review.hpp"
#include "ethnocode/textprep.hpp"

namespace ethnocode {

struct ServiceOptions {
  std::filesystem::path data_dir;
  /// built review UI bundle, served at "/" when set
  std::filesystem::path ui_dir;
  std::string bind = "127.0.0.1";
  int port = 8750;
};

enum class JobState { queued, running, done, failed };

constexpr std::string_view to_string(JobState s) {
  constexpr std::string_view names[] = {"queued", "running", "done", "failed"};
  return names[static_cast<int>(s)];
}

struct Job {
  std::string id;
  std::string project;
  std::string code;
  JobState state = JobState::queued;
  std::string error;
  std::size_t queue_version = 0;
};

inline nlohmann::json to_json(const Job& j) {
  return {{"id", j.id},
          {"project", j.project},
          {"code", j.code},
          {"state", std::string(to_string(j.state))},
          {"error", j.error},
          {"queue_version", j.queue_version}};
}

inline int http_status(ErrorKind k) {
  switch (k) {
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Conflict: return 409;
    case ErrorKind::IncompleteReview: return 409;
    case ErrorKind::InvalidArgument:
    case ErrorKind::FormatError:
    case ErrorKind::ConfigError: return 400;
    default: return 500;
  }
}

/// Retrains one code: folds the decided queue items into the corpus, runs a
/// coding round with the project's settings and swaps in the new queue.
inline std::size_t retrain(Project& project, const std::string& code) {
  auto corpus = project.corpus_with_decisions(code);
  auto tokens = tokenize_corpus(corpus);
  auto config = coding_round_config(project.settings());
  auto round = run_coding_round(corpus, tokens, code, project.uncoded_units(), config);
  return project.commit_round(code, std::move(round));
}

/// HTTP front of the review projects under a data directory. All routes
/// live under /api/v1.
class ReviewService {
 public:
  explicit ReviewService(ServiceOptions opt) : opt_(std::move(opt)) {
    if (!std::filesystem::is_directory(opt_.data_dir))
      throw Error(ErrorKind::NotFound, "data directory " + opt_.data_dir.string());
    for (const auto& e : std::filesystem::directory_iterator(opt_.data_dir))
      if (e.is_directory() && std::filesystem::exists(e.path() / "project.json")) {
        auto p = std::make_unique<Project>(e.path());
        const auto id = p->id();
        projects_.emplace(id, std::move(p));
      }
    routes();
  }

  ~ReviewService() {
    stop();
    std::vector<std::thread> workers;
    {
      std::lock_guard lock(jobs_mutex_);
      workers.swap(workers_);
    }
    for (auto& t : workers)
      if (t.joinable()) t.join();
  }

  ReviewService(const ReviewService&) = delete;
  ReviewService& operator=(const ReviewService&) = delete;

  httplib::Server& server() { return server_; }

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind() {
    if (opt_.port == 0) {
      port_ = server_.bind_to_any_port(opt_.bind);
    } else {
      port_ = server_.bind_to_port(opt_.bind, opt_.port) ? opt_.port : -1;
    }
    if (port_ < 0) throw Error(ErrorKind::IoError, "cannot bind " + opt_.bind + ":" + std::to_string(opt_.port));
    return port_;
  }

  /// Blocks serving requests until stop().
  void serve() { server_.listen_after_bind(); }

  void stop() {
    if (server_.is_running()) server_.stop();
  }

  int port() const { return port_; }

  Project& project(const std::string& id) {
    auto it = projects_.find(id);
    if (it == projects_.end()) throw Error(ErrorKind::NotFound, "project " + id);
    return *it->second;
  }

  Job job(const std::string& id) const {
    std::lock_guard lock(jobs_mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) throw Error(ErrorKind::NotFound, "job " + id);
    return it->second;
  }

  /// Starts a background retrain and returns its job id.
  std::string start_retrain(const std::string& project_id, const std::string& code) {
    auto& p = project(project_id);
    if (!p.has_code(code)) throw Error(ErrorKind::NotFound, "code " + code);
    std::lock_guard lock(jobs_mutex_);
    Job j;
    j.id = "job-" + std::to_string(++job_counter_);
    j.project = project_id;
    j.code = code;
    jobs_[j.id] = j;
    workers_.emplace_back([this, id = j.id, &p, code] {
      set_state(id, JobState::running);
      try {
        const auto version = retrain(p, code);
        std::lock_guard l(jobs_mutex_);
        jobs_[id].queue_version = version;
        jobs_[id].state = JobState::done;
      } catch (const std::exception& e) {
        std::lock_guard l(jobs_mutex_);
        jobs_[id].state = JobState::failed;
        jobs_[id].error = e.what();
      }
    });
    return j.id;
  }

 private:
  using Handler = std::function<nlohmann::json(const httplib::Request&, httplib::Response&)>;

  void set_state(const std::string& id, JobState s) {
    std::lock_guard lock(jobs_mutex_);
    jobs_[id].state = s;
  }

  static void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& message) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", kind}, {"message", message}}.dump(), "application/json");
  }

  static httplib::Server::Handler wrap(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        auto body = h(req, res);
        if (res.status == -1 || res.status == 0) res.status = 200;
        res.set_content(body.dump(), "application/json");
      } catch (const Error& e) {
        send_error(res, http_status(e.kind()), to_string(e.kind()), e.what());
      } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, "BadRequest", e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "InternalError", e.what());
      }
    };
  }

  static nlohmann::json parse_body(const httplib::Request& req) {
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::InvalidArgument, "body must be a JSON object");
    return j;
  }

  static std::string required_string(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string() || j.at(key).get<std::string>().empty())
      throw Error(ErrorKind::InvalidArgument, std::string("missing string field \"") + key + "\"");
    return j.at(key).get<std::string>();
  }

  static std::string query_code(const httplib::Request& req) {
    if (!req.has_param("code")) throw Error(ErrorKind::InvalidArgument, "missing query parameter code");
    return req.get_param_value("code");
  }

  static std::size_t query_size(const httplib::Request& req, const char* key, std::size_t fallback) {
    if (!req.has_param(key)) return fallback;
    auto v = util::parse_int(req.get_param_value(key));
    if (!v || *v < 0) throw Error(ErrorKind::InvalidArgument, std::string("bad ") + key);
    return static_cast<std::size_t>(*v);
  }

  static nlohmann::json unit_json(const Unit& u) {
    return {{"unit", u.key().to_string()}, {"text", u.text}, {"speaker", u.speaker ? *u.speaker : ""}};
  }

  nlohmann::json queue_page(Project& p, const httplib::Request& req) {
    const auto code = query_code(req);
    if (!p.has_code(code)) throw Error(ErrorKind::NotFound, "code " + code);
    const auto limit = query_size(req, "limit", 50);
    const auto offset = query_size(req, "offset", 0);
    const auto status = req.has_param("status") ? req.get_param_value("status") : "all";
    if (status != "all" && status != "pending") throw Error(ErrorKind::InvalidArgument, "status is all or pending");
    auto q = p.queue(code);
    auto corpus = p.corpus();
    const auto pending = q.pending();
    if (status == "pending")
      std::erase_if(q.items, [](const ReviewItem& i) { return i.decision != Decision::pending; });
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i = offset; i < q.items.size() && i < offset + limit; ++i) {
      const auto& item = q.items[i];
      nlohmann::json context = nlohmann::json::array();
      for (const auto& u : context_window(corpus, item.unit.doc_id, item.unit.reference, 1)) {
        auto cj = unit_json(u);
        cj["focus"] = u.key() == item.unit;
        context.push_back(cj);
      }
      const auto& unit = corpus.at(item.unit);
      items.push_back({{"unit", item.unit.to_string()},
                       {"score", item.score},
                       {"decision", std::string(to_string(item.decision))},
                       {"reviewer", item.reviewer},
                       {"timestamp", item.timestamp},
                       {"text", unit.text},
                       {"speaker", unit.speaker ? *unit.speaker : ""},
                       {"context", context}});
    }
    return {{"code", code},
            {"version", q.version},
            {"total", q.items.size()},
            {"pending", pending},
            {"offset", offset},
            {"items", items}};
  }

  nlohmann::json metrics(Project& p, const std::string& code) {
    if (!p.has_code(code)) throw Error(ErrorKind::NotFound, "code " + code);
    const auto q = p.queue(code);
    const auto prog = progress_of(q);
    nlohmann::json review{{"total", prog.total},
                          {"pending", prog.pending},
                          {"accepted", prog.accepted},
                          {"rejected", prog.rejected},
                          {"progress", prog.progress},
                          {"accept_rate", prog.accept_rate}};
    // accepts count as true positives, so what survives review is precise by
    // construction; the accept rate estimates the raw machine precision
    const bool decided = prog.accepted + prog.rejected > 0;
    review["post_review_precision"] = decided ? nlohmann::json(1.0) : nlohmann::json(nullptr);
    review["machine_precision_estimate"] = decided ? nlohmann::json(prog.accept_rate) : nlohmann::json(nullptr);
    auto report = p.report(code);
    return {{"code", code},
            {"queue_version", q.version},
            {"review", review},
            {"report", report ? *report : nlohmann::json(nullptr)},
            {"alpha_bar", 0.8}};
  }

  void routes() {
    server_.Get("/api/v1/projects", wrap([this](const httplib::Request&, httplib::Response&) {
                  nlohmann::json out = nlohmann::json::array();
                  for (const auto& [id, p] : projects_) out.push_back(id);
                  return nlohmann::json{{"projects", out}};
                }));
    server_.Get(R"(/api/v1/projects/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response&) {
                  auto& p = project(req.matches[1]);
                  nlohmann::json codes = nlohmann::json::object();
                  for (const auto& c : p.codes()) {
                    auto q = p.queue(c);
                    codes[c] = {{"queue_version", q.version}, {"pending", q.pending()}, {"total", q.items.size()}};
                  }
                  return nlohmann::json{{"id", p.id()}, {"units", p.corpus().size()}, {"codes", codes}};
                }));
    server_.Get(R"(/api/v1/projects/([^/]+)/queue)", wrap([this](const httplib::Request& req, httplib::Response&) {
                  return queue_page(project(req.matches[1]), req);
                }));
    server_.Post(R"(/api/v1/projects/([^/]+)/decisions)",
                 wrap([this](const httplib::Request& req, httplib::Response&) {
                   auto& p = project(req.matches[1]);
                   auto body = parse_body(req);
                   auto unit = UnitKey::parse(required_string(body, "unit"));
                   if (!unit) throw Error(ErrorKind::InvalidArgument, "unit must look like doc#ref");
                   const auto code = required_string(body, "code");
                   auto decision = parse_decision(required_string(body, "decision"));
                   if (!decision) throw Error(ErrorKind::InvalidArgument, "decision is accept, reject or pending");
                   const auto reviewer = required_string(body, "reviewer");
                   auto ack = p.decide(*unit, code, *decision, reviewer);
                   return nlohmann::json{{"seq", ack.seq}, {"duplicate", ack.duplicate}, {"pending", ack.pending}};
                 }));
    server_.Get(R"(/api/v1/projects/([^/]+)/metrics)", wrap([this](const httplib::Request& req, httplib::Response&) {
                  return metrics(project(req.matches[1]), query_code(req));
                }));
    server_.Post(R"(/api/v1/projects/([^/]+)/retrain)",
                 wrap([this](const httplib::Request& req, httplib::Response& res) {
                   const std::string pid = req.matches[1];
                   project(pid);
                   auto body = parse_body(req);
                   const auto id = start_retrain(pid, required_string(body, "code"));
                   res.status = 202;
                   return nlohmann::json{{"job", id}};
                 }));
    server_.Post(R"(/api/v1/projects/([^/]+)/lease/release)",
                 wrap([this](const httplib::Request& req, httplib::Response&) {
                   auto& p = project(req.matches[1]);
                   auto body = parse_body(req);
                   p.release_lease(required_string(body, "code"), required_string(body, "reviewer"));
                   return nlohmann::json{{"released", true}};
                 }));
    server_.Get(R"(/api/v1/jobs/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response&) {
                  return to_json(job(req.matches[1]));
                }));
    server_.Get(R"(/api/v1/.*)", wrap([](const httplib::Request& req, httplib::Response&) -> nlohmann::json {
                  throw Error(ErrorKind::NotFound, "no route " + req.path);
                }));
    if (!opt_.ui_dir.empty()) {
      if (!server_.set_mount_point("/", opt_.ui_dir.string()))
        throw Error(ErrorKind::NotFound, "UI bundle directory " + opt_.ui_dir.string());
    }
  }

  ServiceOptions opt_;
  httplib::Server server_;
  int port_ = -1;
  std::map<std::string, std::unique_ptr<Project>> projects_;
  mutable std::mutex jobs_mutex_;
  std::map<std::string, Job> jobs_;
  std::vector<std::thread> workers_;
  std::size_t job_counter_ = 0;
};

}  // namespace ethnocode
