#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcsc/completion.hpp"
#include "vcsc/corpus.hpp"
#include "vcsc/model.hpp"

namespace vcsc {

/// Number of suggestions shown per round.
inline constexpr std::size_t kSuggestionCount = 5;

enum class SessionMode { fully_manual, interactive };

std::string to_string(SessionMode mode);
SessionMode session_mode_from_string(const std::string& name);

struct Snapshot {
  std::string text;
  std::size_t cursor = 0;
  double ts = 0.0;  // seconds, client clock

  bool operator==(const Snapshot&) const = default;
};

struct SelectionEvent {
  std::size_t round = 0;  // number of snapshots recorded before the selection
  std::size_t rank = 0;   // 1-based
  double ts = 0.0;

  bool operator==(const SelectionEvent&) const = default;
};

struct SessionStats {
  std::size_t T = 0;
  std::size_t num_selections = 0;
  std::size_t accumulated_edits = 0;
  std::size_t accumulated_levd = 0;
  /// LevD(empty, S_T): the workload of typing the final annotation by hand.
  std::size_t levd_manual = 0;
  SessionMode mode = SessionMode::fully_manual;

  nlohmann::json to_json() const;
  static SessionStats from_json(const nlohmann::json& j);
  bool operator==(const SessionStats&) const = default;
};

/// One annotation session: snapshots S_1..S_T with no two identical
/// consecutive texts, the selections made, and the final annotation once
/// submitted.
struct Session {
  std::string session_id;
  std::string image_id;
  double created_at = 0.0;
  std::vector<Snapshot> snapshots;
  std::vector<SelectionEvent> selections;
  std::size_t suggestion_rounds = 0;
  std::optional<std::string> final_annotation;

  bool closed() const { return final_annotation.has_value(); }
  SessionMode mode() const { return selections.empty() ? SessionMode::fully_manual : SessionMode::interactive; }

  nlohmann::json to_json() const;
  static Session from_json(const nlohmann::json& j);
  bool operator==(const Session&) const = default;
};

/// Statistics as a pure function of the stored session.
SessionStats compute_stats(const Session& session);

struct ExportFilter {
  std::optional<bool> closed;
  std::optional<SessionMode> mode;
  std::optional<std::string> image_id;

  bool matches(const Session& s) const;
};

/// One exported line: the session plus its stats (null while open).
std::string export_line(const Session& session);
Session import_line(const std::string& line);

/// Append-only JSON-lines event log. Appends are serialized and flushed.
class EventLog {
 public:
  EventLog() = default;  // discards events
  explicit EventLog(const std::filesystem::path& path);

  void append(const nlohmann::json& event);
  static std::vector<nlohmann::json> read(const std::filesystem::path& path);

 private:
  std::mutex mutex_;
  std::ofstream out_;
  bool enabled_ = false;
};

/// Session bookkeeping: creation, snapshots, selections, submission and
/// export. Operations on one session are serialized; different sessions
/// proceed in parallel.
class SessionStore {
 public:
  /// `known_images` gates create_session; empty means any id is accepted.
  explicit SessionStore(std::shared_ptr<EventLog> log = std::make_shared<EventLog>(),
                        std::vector<std::string> known_images = {}, std::size_t k = kSuggestionCount);

  /// Rebuilds sessions from an event log without writing to it. Events are
  /// validated exactly as live calls are.
  void replay(const std::filesystem::path& log_path);

  std::string create_session(const std::string& image_id);
  void record_snapshot(const std::string& session_id, const std::string& text, std::size_t cursor, double ts);
  void record_selection(const std::string& session_id, std::size_t rank, const std::string& resulting_text,
                        double ts);
  void record_suggestion(const std::string& session_id, const std::string& text, std::size_t cursor,
                         const std::vector<Candidate>& candidates);
  SessionStats submit(const std::string& session_id, const std::string& final_text, double ts);

  /// Throws Error(conflict) if the session is closed.
  void require_open(const std::string& session_id) const;
  Session get(const std::string& session_id) const;
  std::vector<Session> sessions(const ExportFilter& filter = {}) const;
  std::string export_jsonl(const ExportFilter& filter = {}) const;
  /// Per-rank selection counts over all sessions (index 0 is rank 1).
  std::vector<std::size_t> selection_histogram() const;
  std::size_t k() const { return k_; }

 private:
  struct Entry {
    mutable std::mutex mutex;
    Session session;
  };

  Entry& entry(const std::string& session_id) const;
  void insert(const nlohmann::json& created_event);
  /// Validates an event against the session and applies it. Returns false
  /// when the event changes nothing (a repeated snapshot text).
  bool apply_to(Session& session, const nlohmann::json& event) const;
  std::string fresh_id();

  std::shared_ptr<EventLog> log_;
  std::vector<std::string> known_images_;
  std::size_t k_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::unique_ptr<Entry>> entries_;
  std::mutex id_mutex_;
  std::mt19937_64 id_rng_;
};

/// Ties a session store to a completion model and a feature store.
class AnnotationService {
 public:
  AnnotationService(CompletionModel model, FeatureStore features, std::shared_ptr<EventLog> log,
                    std::size_t k = kSuggestionCount);

  std::string create_session(const std::string& image_id) { return store_.create_session(image_id); }
  /// k candidates for (text, cursor) against the session's image.
  std::vector<Candidate> suggest(const std::string& session_id, const std::string& text, std::size_t cursor);

  SessionStore& store() { return store_; }
  const FeatureStore& features() const { return features_; }
  const CompletionModel& model() const { return model_; }

 private:
  CompletionModel model_;
  FeatureStore features_;
  SessionStore store_;
};

}  // namespace vcsc
