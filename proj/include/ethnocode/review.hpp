#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ethnocode/coder.hpp"
#include "ethnocode/corpus.hpp"
#include "ethnocode/error.hpp"
#include "ethnocode/util.hpp"

namespace ethnocode {

struct LogEntry {
  std::uint64_t seq = 0;
  UnitKey unit;
  std::string code;
  Decision decision = Decision::pending;
  std::string reviewer;
  std::string timestamp;
  std::size_t queue_version = 1;

  bool operator==(const LogEntry&) const = default;
};

inline nlohmann::json to_json(const LogEntry& e) {
  return {{"seq", e.seq},
          {"unit", e.unit.to_string()},
          {"code", e.code},
          {"decision", std::string(to_string(e.decision))},
          {"reviewer", e.reviewer},
          {"timestamp", e.timestamp},
          {"queue_version", e.queue_version}};
}

inline LogEntry log_entry_from_json(const nlohmann::json& j) {
  LogEntry e;
  e.seq = j.at("seq");
  auto key = UnitKey::parse(j.at("unit").get<std::string>());
  auto d = parse_decision(j.at("decision").get<std::string>());
  if (!key || !d) throw Error(ErrorKind::FormatError, "bad log entry");
  e.unit = *key;
  e.code = j.at("code");
  e.decision = *d;
  e.reviewer = j.at("reviewer");
  e.timestamp = j.at("timestamp");
  e.queue_version = j.at("queue_version");
  return e;
}

struct Replay {
  std::vector<LogEntry> entries;
  /// bytes of the text covered by complete, well-formed lines
  std::size_t valid_bytes = 0;
};

/// Parses a decision log. A final line without its newline, or one that
/// does not parse, is the trace of an interrupted write and is dropped.
/// Damage anywhere else is an error.
inline Replay replay_log(std::string_view text) {
  Replay r;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) break;
    const auto line = text.substr(pos, nl - pos);
    LogEntry e;
    try {
      e = log_entry_from_json(nlohmann::json::parse(line));
    } catch (const std::exception&) {
      if (nl + 1 == text.size()) break;
      throw Error(ErrorKind::FormatError, "corrupt decision log line at byte " + std::to_string(pos));
    }
    if (!r.entries.empty() && e.seq <= r.entries.back().seq)
      throw Error(ErrorKind::FormatError, "decision log sequence is not increasing at seq " + std::to_string(e.seq));
    r.entries.push_back(std::move(e));
    pos = nl + 1;
    r.valid_bytes = pos;
  }
  return r;
}

/// Latest decision per (code, queue version, unit).
using DecisionState = std::map<std::tuple<std::string, std::size_t, UnitKey>, LogEntry>;

inline void apply_entry(DecisionState& state, const LogEntry& e) { state[{e.code, e.queue_version, e.unit}] = e; }

/// `base` with the decisions of its version filled in.
inline ReviewQueue apply_decisions(ReviewQueue base, const DecisionState& state) {
  for (auto& item : base.items) {
    auto it = state.find({base.code, base.version, item.unit});
    if (it == state.end()) continue;
    item.decision = it->second.decision;
    item.reviewer = it->second.reviewer;
    item.timestamp = it->second.timestamp;
  }
  return base;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Append-only JSONL decision log with an optional snapshot beside it.
/// Not thread-safe; the owning project serializes writers.
class DecisionLog {
 public:
  explicit DecisionLog(std::filesystem::path path, std::size_t snapshot_every = 100)
      : path_(std::move(path)), snapshot_every_(snapshot_every) {
    std::uint64_t snap_seq = 0;
    const auto snap = snapshot_path();
    if (std::filesystem::exists(snap)) {
      auto j = nlohmann::json::parse(util::read_file(snap));
      snap_seq = j.at("seq");
      for (const auto& e : j.at("state")) apply_entry(state_, log_entry_from_json(e));
      last_seq_ = snap_seq;
    }
    if (std::filesystem::exists(path_)) {
      const auto text = util::read_file(path_);
      auto r = replay_log(text);
      if (r.valid_bytes < text.size()) std::filesystem::resize_file(path_, r.valid_bytes);
      for (auto& e : r.entries) {
        if (e.seq > snap_seq) apply_entry(state_, e);
        last_seq_ = std::max(last_seq_, e.seq);
        ++length_;
      }
    }
  }

  const DecisionState& state() const { return state_; }
  std::uint64_t last_seq() const { return last_seq_; }
  std::size_t length() const { return length_; }
  const std::filesystem::path& path() const { return path_; }

  /// Writes the entry with the next sequence number and returns it.
  std::uint64_t append(LogEntry e) {
    e.seq = last_seq_ + 1;
    const auto line = to_json(e).dump() + "\n";
    {
      std::ofstream out(path_, std::ios::binary | std::ios::app);
      if (!out) throw Error(ErrorKind::IoError, "cannot append to " + path_.string());
      out << line;
      out.flush();
      if (!out) throw Error(ErrorKind::IoError, "append failed for " + path_.string());
    }
    last_seq_ = e.seq;
    ++length_;
    apply_entry(state_, e);
    if (snapshot_every_ && length_ % snapshot_every_ == 0) write_snapshot();
    return e.seq;
  }

  void write_snapshot() const {
    nlohmann::json state = nlohmann::json::array();
    for (const auto& [k, e] : state_) state.push_back(to_json(e));
    util::write_file(snapshot_path(), nlohmann::json{{"seq", last_seq_}, {"state", state}}.dump() + "\n");
  }

  std::filesystem::path snapshot_path() const {
    auto p = path_;
    p += ".snapshot.json";
    return p;
  }

 private:
  std::filesystem::path path_;
  std::size_t snapshot_every_;
  DecisionState state_;
  std::uint64_t last_seq_ = 0;
  std::size_t length_ = 0;
};

struct DecisionAck {
  std::uint64_t seq = 0;
  bool duplicate = false;
  std::size_t pending = 0;
};

struct ReviewProgress {
  std::size_t total = 0, pending = 0, accepted = 0, rejected = 0;
  double progress = 0;
  double accept_rate = 0;
};

inline ReviewProgress progress_of(const ReviewQueue& q) {
  ReviewProgress p;
  p.total = q.items.size();
  for (const auto& i : q.items) {
    if (i.decision == Decision::pending) ++p.pending;
    else if (i.decision == Decision::accept) ++p.accepted;
    else ++p.rejected;
  }
  const auto decided = p.accepted + p.rejected;
  p.progress = p.total ? static_cast<double>(decided) / static_cast<double>(p.total) : 1.0;
  p.accept_rate = decided ? static_cast<double>(p.accepted) / static_cast<double>(decided) : 0.0;
  return p;
}

/// A review project on disk:
///
///   project.json      id, codes, uncoded documents, round settings
///   corpus.csv        the corpus table
///   assignments.csv   origin-tagged code records
///   decisions.jsonl   decision log (+ snapshot)
///   queues/<code>/v<N>.json, models/<code>/, reports/<code>.json
///
/// Readers take a shared lock; decisions, queue swaps and corpus updates
/// take the exclusive lock.
class Project {
 public:
  static constexpr std::chrono::seconds kLeaseDuration{900};

  explicit Project(std::filesystem::path dir) : dir_(std::move(dir)) {
    auto meta_path = dir_ / "project.json";
    if (!std::filesystem::exists(meta_path)) throw Error(ErrorKind::NotFound, "no project at " + dir_.string());
    meta_ = nlohmann::json::parse(util::read_file(meta_path));
    id_ = meta_.value("id", dir_.filename().string());
    corpus_ = load_corpus();
    for (const auto& c : meta_.value("codes", std::vector<std::string>{})) {
      codes_.insert(c);
      auto latest = latest_queue_file(c);
      if (latest) queues_[c] = queue_from_json(nlohmann::json::parse(util::read_file(*latest)));
    }
    log_.emplace(dir_ / "decisions.jsonl");
  }

  /// Lays out a new project directory.
  static void create(const std::filesystem::path& dir, const std::string& id, const Corpus& corpus,
                     const std::vector<std::string>& codes, const std::set<std::string>& uncoded_documents,
                     const nlohmann::json& settings = nlohmann::json::object()) {
    std::filesystem::create_directories(dir);
    write_corpus_table(dir / "corpus.csv", corpus);
    csv::write_table_file(dir / "assignments.csv", assignments_table(corpus));
    nlohmann::json meta{{"id", id},
                        {"codes", codes},
                        {"uncoded_documents", uncoded_documents},
                        {"settings", settings}};
    util::write_file(dir / "project.json", meta.dump(2) + "\n");
  }

  const std::string& id() const { return id_; }
  const std::filesystem::path& dir() const { return dir_; }

  bool has_code(const std::string& code) const { return codes_.count(code) > 0; }
  std::set<std::string> codes() const { return codes_; }

  Corpus corpus() const {
    std::shared_lock lock(mutex_);
    return corpus_;
  }

  std::set<UnitKey> uncoded_units() const {
    std::shared_lock lock(mutex_);
    return uncoded_units_locked();
  }

  nlohmann::json settings() const { return meta_.value("settings", nlohmann::json::object()); }

  /// Current queue for `code` with logged decisions applied. A code with no
  /// queue yet yields an empty version-0 queue.
  ReviewQueue queue(const std::string& code) const {
    std::shared_lock lock(mutex_);
    return queue_locked(code);
  }

  std::size_t log_length() const {
    std::shared_lock lock(mutex_);
    return log_->length();
  }

  /// Records a decision. Repeating the latest decision of the same reviewer
  /// returns its original sequence number without writing.
  DecisionAck decide(const UnitKey& unit, const std::string& code, Decision decision, const std::string& reviewer,
                     std::string timestamp = "") {
    std::unique_lock lock(mutex_);
    require_code(code);
    auto q = queue_locked(code);
    auto it = std::find_if(q.items.begin(), q.items.end(), [&](const ReviewItem& i) { return i.unit == unit; });
    if (it == q.items.end())
      throw Error(ErrorKind::Conflict, unit.to_string() + " is not in the " + code + " queue");
    claim_lease(code, reviewer);
    auto prev = log_->state().find({code, q.version, unit});
    if (prev != log_->state().end() && prev->second.decision == decision && prev->second.reviewer == reviewer)
      return {prev->second.seq, true, q.pending()};
    if (prev == log_->state().end() && decision == Decision::pending) return {0, true, q.pending()};
    LogEntry e;
    e.unit = unit;
    e.code = code;
    e.decision = decision;
    e.reviewer = reviewer;
    e.timestamp = timestamp.empty() ? utc_timestamp() : std::move(timestamp);
    e.queue_version = q.version;
    const auto seq = log_->append(std::move(e));
    return {seq, false, queue_locked(code).pending()};
  }

  void release_lease(const std::string& code, const std::string& reviewer) {
    std::unique_lock lock(mutex_);
    auto it = leases_.find(code);
    if (it != leases_.end() && it->second.first == reviewer) leases_.erase(it);
  }

  /// Persists `q` as the next version of its code's queue and swaps it in.
  std::size_t install_queue(ReviewQueue q) {
    std::unique_lock lock(mutex_);
    return install_queue_locked(std::move(q));
  }

  /// Replaces the corpus (codes and assignments) on disk and in memory.
  void replace_corpus(const Corpus& c) {
    std::unique_lock lock(mutex_);
    replace_corpus_locked(c);
  }

  /// Swaps in the result of a retrain: decisions made on the old queue are
  /// merged into the corpus, units they settled are dropped from the new
  /// queue, and the model, report and queue are written. Returns the new
  /// queue version.
  std::size_t commit_round(const std::string& code, CodingRound round) {
    std::unique_lock lock(mutex_);
    auto old = queue_locked(code);
    std::erase_if(old.items, [](const ReviewItem& i) { return i.decision == Decision::pending; });
    std::set<UnitKey> settled;
    for (const auto& i : old.items) settled.insert(i.unit);
    if (!old.items.empty()) replace_corpus_locked(merge_review(old, corpus_).corpus);
    std::erase_if(round.queue.items, [&](const ReviewItem& i) { return settled.count(i.unit) > 0; });
    save_round(code, round);
    return install_queue_locked(std::move(round.queue));
  }

  void save_round(const std::string& code, const CodingRound& round) {
    save_code_model(round.model, dir_ / "models" / code);
    auto j = to_json(round.report);
    j["threshold"] = round.model.threshold;
    j["tuned_recall"] = round.tuning.recall;
    j["tuned_precision"] = round.tuning.precision;
    util::write_file(dir_ / "reports" / (code + ".json"), j.dump(2) + "\n");
  }

  std::optional<nlohmann::json> report(const std::string& code) const {
    const auto p = dir_ / "reports" / (code + ".json");
    if (!std::filesystem::exists(p)) return std::nullopt;
    return nlohmann::json::parse(util::read_file(p));
  }

  /// Decided items of the current queue, merged into a copy of the corpus.
  Corpus corpus_with_decisions(const std::string& code) const {
    std::shared_lock lock(mutex_);
    auto q = queue_locked(code);
    std::erase_if(q.items, [](const ReviewItem& i) { return i.decision == Decision::pending; });
    return merge_review(q, corpus_).corpus;
  }

 private:
  std::size_t install_queue_locked(ReviewQueue q) {
    require_code(q.code);
    auto current = queues_.find(q.code);
    q.version = current == queues_.end() ? 1 : current->second.version + 1;
    for (auto& i : q.items) {
      i.decision = Decision::pending;
      i.reviewer.clear();
      i.timestamp.clear();
    }
    util::write_file(queue_file(q.code, q.version), to_json(q).dump(1) + "\n");
    queues_[q.code] = q;
    return q.version;
  }

  void replace_corpus_locked(const Corpus& c) {
    write_corpus_table(dir_ / "corpus.csv", c);
    csv::write_table_file(dir_ / "assignments.csv", assignments_table(c));
    corpus_ = load_corpus();
  }

  void require_code(const std::string& code) const {
    if (!codes_.count(code)) throw Error(ErrorKind::NotFound, "code " + code);
  }

  ReviewQueue queue_locked(const std::string& code) const {
    require_code(code);
    auto it = queues_.find(code);
    if (it == queues_.end()) {
      ReviewQueue empty;
      empty.code = code;
      empty.version = 0;
      return empty;
    }
    return apply_decisions(it->second, log_->state());
  }

  std::set<UnitKey> uncoded_units_locked() const {
    std::set<UnitKey> out;
    for (const auto& doc : meta_.value("uncoded_documents", std::vector<std::string>{})) {
      if (!corpus_.documents().count(doc)) continue;
      for (const auto& u : corpus_.document_units(doc)) out.insert(u.key());
    }
    return out;
  }

  void claim_lease(const std::string& code, const std::string& reviewer) {
    const auto now = std::chrono::steady_clock::now();
    auto it = leases_.find(code);
    if (it != leases_.end() && it->second.first != reviewer && it->second.second > now)
      throw Error(ErrorKind::Conflict, "queue " + code + " is leased by " + it->second.first);
    leases_[code] = {reviewer, now + kLeaseDuration};
  }

  Corpus load_corpus() const {
    auto c = read_corpus_table(dir_ / "corpus.csv");
    const auto a = dir_ / "assignments.csv";
    if (std::filesystem::exists(a)) c = attach_assignments(c, csv::read_table_file(a));
    return c;
  }

  std::filesystem::path queue_file(const std::string& code, std::size_t version) const {
    return dir_ / "queues" / code / ("v" + std::to_string(version) + ".json");
  }

  std::optional<std::filesystem::path> latest_queue_file(const std::string& code) const {
    const auto d = dir_ / "queues" / code;
    if (!std::filesystem::exists(d)) return std::nullopt;
    std::optional<std::pair<long long, std::filesystem::path>> best;
    for (const auto& e : std::filesystem::directory_iterator(d)) {
      const auto name = e.path().stem().string();
      if (e.path().extension() != ".json" || name.size() < 2 || name[0] != 'v') continue;
      auto v = util::parse_int(std::string_view(name).substr(1));
      if (v && (!best || *v > best->first)) best = std::make_pair(*v, e.path());
    }
    if (!best) return std::nullopt;
    return best->second;
  }

  std::filesystem::path dir_;
  std::string id_;
  nlohmann::json meta_;
  std::set<std::string> codes_;
  Corpus corpus_;
  std::map<std::string, ReviewQueue> queues_;
  std::optional<DecisionLog> log_;
  std::map<std::string, std::pair<std::string, std::chrono::steady_clock::time_point>> leases_;
  mutable std::shared_mutex mutex_;
};

}  // namespace ethnocode
