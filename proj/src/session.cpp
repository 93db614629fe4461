#include "vcsc/session.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <sstream>

#include "vcsc/error.hpp"
#include "vcsc/textcore.hpp"

namespace vcsc {

std::string to_string(SessionMode mode) {
  return mode == SessionMode::interactive ? "interactive" : "fully_manual";
}

SessionMode session_mode_from_string(const std::string& name) {
  if (name == "interactive") return SessionMode::interactive;
  if (name == "fully_manual") return SessionMode::fully_manual;
  throw Error("unknown session mode '" + name + "'");
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json SessionStats::to_json() const {
  return {{"T", T},
          {"num_selections", num_selections},
          {"accumulated_edits", accumulated_edits},
          {"accumulated_levd", accumulated_levd},
          {"levd_manual", levd_manual},
          {"mode", to_string(mode)}};
}

SessionStats SessionStats::from_json(const nlohmann::json& j) {
  SessionStats s;
  s.T = j.at("T").get<std::size_t>();
  s.num_selections = j.at("num_selections").get<std::size_t>();
  s.accumulated_edits = j.at("accumulated_edits").get<std::size_t>();
  s.accumulated_levd = j.at("accumulated_levd").get<std::size_t>();
  s.levd_manual = j.at("levd_manual").get<std::size_t>();
  s.mode = session_mode_from_string(j.at("mode").get<std::string>());
  return s;
}

nlohmann::json Session::to_json() const {
  nlohmann::json snaps = nlohmann::json::array();
  for (const auto& s : snapshots) snaps.push_back({{"text", s.text}, {"cursor", s.cursor}, {"ts", s.ts}});
  nlohmann::json sels = nlohmann::json::array();
  for (const auto& s : selections) sels.push_back({{"round", s.round}, {"rank", s.rank}, {"ts", s.ts}});
  return {{"session_id", session_id},
          {"image_id", image_id},
          {"created_at", created_at},
          {"snapshots", std::move(snaps)},
          {"selections", std::move(sels)},
          {"suggestion_rounds", suggestion_rounds},
          {"final_annotation", final_annotation ? nlohmann::json(*final_annotation) : nlohmann::json(nullptr)},
          {"mode", to_string(mode())}};
}

Session Session::from_json(const nlohmann::json& j) {
  try {
    Session s;
    s.session_id = j.at("session_id").get<std::string>();
    s.image_id = j.at("image_id").get<std::string>();
    s.created_at = j.at("created_at").get<double>();
    for (const auto& x : j.at("snapshots")) {
      s.snapshots.push_back({x.at("text").get<std::string>(), x.at("cursor").get<std::size_t>(), x.at("ts").get<double>()});
    }
    for (const auto& x : j.at("selections")) {
      s.selections.push_back({x.at("round").get<std::size_t>(), x.at("rank").get<std::size_t>(), x.at("ts").get<double>()});
    }
    s.suggestion_rounds = j.at("suggestion_rounds").get<std::size_t>();
    if (!j.at("final_annotation").is_null()) s.final_annotation = j.at("final_annotation").get<std::string>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed session record: ") + e.what());
  }
}

SessionStats compute_stats(const Session& session) {
  SessionStats st;
  st.T = session.snapshots.size();
  st.num_selections = session.selections.size();
  st.accumulated_edits = st.T > 0 ? st.T - 1 : 0;
  std::vector<std::string> texts;
  texts.reserve(st.T);
  for (const auto& s : session.snapshots) texts.push_back(s.text);
  st.accumulated_levd = texts.empty() ? 0 : accumulated_levd(texts);
  const std::string& final_text = session.final_annotation ? *session.final_annotation
                                  : texts.empty()          ? std::string()
                                                           : texts.back();
  st.levd_manual = utf8_length(final_text);
  st.mode = session.mode();
  return st;
}

bool ExportFilter::matches(const Session& s) const {
  if (closed && s.closed() != *closed) return false;
  if (mode && s.mode() != *mode) return false;
  if (image_id && s.image_id != *image_id) return false;
  return true;
}

std::string export_line(const Session& session) {
  nlohmann::json j = session.to_json();
  j["stats"] = session.closed() ? compute_stats(session).to_json() : nlohmann::json(nullptr);
  return j.dump();
}

Session import_line(const std::string& line) {
  try {
    return Session::from_json(nlohmann::json::parse(line));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed export line: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Event log

EventLog::EventLog(const std::filesystem::path& path) : out_(path, std::ios::app), enabled_(true) {
  if (!out_) throw Error("cannot open event log '" + path.string() + "'", Error::Kind::io);
}

void EventLog::append(const nlohmann::json& event) {
  if (!enabled_) return;
  std::lock_guard lock(mutex_);
  out_ << event.dump() << '\n';
  out_.flush();
  if (!out_) throw Error("failed to append to event log", Error::Kind::io);
}

std::vector<nlohmann::json> EventLog::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open event log '" + path.string() + "'", Error::Kind::io);
  std::vector<nlohmann::json> events;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      events.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what(), Error::Kind::io);
    }
  }
  return events;
}

// ---------------------------------------------------------------------------
// Store

SessionStore::SessionStore(std::shared_ptr<EventLog> log, std::vector<std::string> known_images, std::size_t k)
    : log_(std::move(log)), known_images_(std::move(known_images)), k_(k), id_rng_(std::random_device{}()) {
  std::sort(known_images_.begin(), known_images_.end());
  if (!log_) log_ = std::make_shared<EventLog>();
}

std::string SessionStore::fresh_id() {
  std::lock_guard lock(id_mutex_);
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << id_rng_();
  return os.str();
}

SessionStore::Entry& SessionStore::entry(const std::string& session_id) const {
  std::shared_lock lock(map_mutex_);
  auto it = entries_.find(session_id);
  if (it == entries_.end()) throw Error("unknown session '" + session_id + "'", Error::Kind::not_found);
  return *it->second;
}

void SessionStore::insert(const nlohmann::json& ev) {
  auto e = std::make_unique<Entry>();
  e->session.session_id = ev.at("session_id").get<std::string>();
  e->session.image_id = ev.at("image_id").get<std::string>();
  e->session.created_at = ev.at("created_at").get<double>();
  std::unique_lock lock(map_mutex_);
  if (!entries_.emplace(e->session.session_id, std::move(e)).second) {
    throw Error("duplicate session id '" + ev.at("session_id").get<std::string>() + "'", Error::Kind::conflict);
  }
}

std::string SessionStore::create_session(const std::string& image_id) {
  if (!known_images_.empty() && !std::binary_search(known_images_.begin(), known_images_.end(), image_id)) {
    throw Error("unknown image '" + image_id + "'", Error::Kind::not_found);
  }
  const double now =
      std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
  for (;;) {
    nlohmann::json ev = {{"type", "session_created"}, {"session_id", fresh_id()}, {"image_id", image_id},
                         {"created_at", now}};
    try {
      insert(ev);
    } catch (const Error& e) {
      if (e.kind() == Error::Kind::conflict) continue;
      throw;
    }
    log_->append(ev);
    return ev["session_id"].get<std::string>();
  }
}

namespace {

void require_open_session(const Session& s) {
  if (s.closed()) throw Error("session '" + s.session_id + "' is closed", Error::Kind::conflict);
}

/// Returns true if `text` should be stored as a new snapshot.
bool check_snapshot(const Session& s, const std::string& text, std::size_t cursor, double ts) {
  if (cursor > utf8_length(text)) throw Error("cursor out of bounds");
  if (s.snapshots.empty()) return true;
  const Snapshot& last = s.snapshots.back();
  if (ts < last.ts) throw Error("out-of-order timestamp", Error::Kind::conflict);
  if (text == last.text) return false;
  if (ts == last.ts) throw Error("out-of-order timestamp", Error::Kind::conflict);
  return true;
}

}  // namespace

bool SessionStore::apply_to(Session& s, const nlohmann::json& ev) const {
  const std::string type = ev.at("type").get<std::string>();
  if (type == "snapshot") {
    require_open_session(s);
    const auto text = ev.at("text").get<std::string>();
    const auto cursor = ev.at("cursor").get<std::size_t>();
    const auto ts = ev.at("ts").get<double>();
    if (!check_snapshot(s, text, cursor, ts)) return false;
    s.snapshots.push_back({text, cursor, ts});
    return true;
  }
  if (type == "selection") {
    require_open_session(s);
    const auto rank = ev.at("rank").get<std::size_t>();
    if (rank < 1 || rank > k_) throw Error("invalid rank " + std::to_string(rank));
    const auto text = ev.at("text").get<std::string>();
    const auto ts = ev.at("ts").get<double>();
    const std::size_t cursor = utf8_length(text);
    const bool store_snapshot = check_snapshot(s, text, cursor, ts);
    s.selections.push_back({s.snapshots.size(), rank, ts});
    if (store_snapshot) s.snapshots.push_back({text, cursor, ts});
    return true;
  }
  if (type == "suggestion") {
    require_open_session(s);
    ++s.suggestion_rounds;
    return true;
  }
  if (type == "submitted") {
    if (s.closed()) throw Error("session '" + s.session_id + "' was already submitted", Error::Kind::conflict);
    const auto text = ev.at("text").get<std::string>();
    const auto ts = ev.at("ts").get<double>();
    if (text.empty()) throw Error("final annotation must not be empty");
    const std::size_t cursor = utf8_length(text);
    if (check_snapshot(s, text, cursor, ts)) s.snapshots.push_back({text, cursor, ts});
    s.final_annotation = text;
    return true;
  }
  throw Error("unknown event type '" + type + "'");
}

void SessionStore::record_snapshot(const std::string& session_id, const std::string& text, std::size_t cursor,
                                   double ts) {
  const nlohmann::json ev = {{"type", "snapshot"}, {"session_id", session_id}, {"text", text}, {"cursor", cursor},
                             {"ts", ts}};
  Entry& e = entry(session_id);
  std::lock_guard lock(e.mutex);
  if (apply_to(e.session, ev)) log_->append(ev);
}

void SessionStore::record_selection(const std::string& session_id, std::size_t rank,
                                    const std::string& resulting_text, double ts) {
  const nlohmann::json ev = {{"type", "selection"}, {"session_id", session_id}, {"rank", rank},
                             {"text", resulting_text}, {"ts", ts}};
  Entry& e = entry(session_id);
  std::lock_guard lock(e.mutex);
  if (apply_to(e.session, ev)) log_->append(ev);
}

void SessionStore::record_suggestion(const std::string& session_id, const std::string& text, std::size_t cursor,
                                     const std::vector<Candidate>& candidates) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : candidates) cands.push_back({{"text", c.text}, {"score", c.score}, {"rank", c.rank}});
  const nlohmann::json ev = {{"type", "suggestion"}, {"session_id", session_id}, {"text", text},
                             {"cursor", cursor},     {"candidates", std::move(cands)}};
  Entry& e = entry(session_id);
  std::lock_guard lock(e.mutex);
  if (apply_to(e.session, ev)) log_->append(ev);
}

SessionStats SessionStore::submit(const std::string& session_id, const std::string& final_text, double ts) {
  const nlohmann::json ev = {{"type", "submitted"}, {"session_id", session_id}, {"text", final_text}, {"ts", ts}};
  Entry& e = entry(session_id);
  std::lock_guard lock(e.mutex);
  apply_to(e.session, ev);
  log_->append(ev);
  return compute_stats(e.session);
}

void SessionStore::replay(const std::filesystem::path& log_path) {
  for (const auto& ev : EventLog::read(log_path)) {
    try {
      if (ev.at("type").get<std::string>() == "session_created") {
        insert(ev);
        continue;
      }
      Entry& e = entry(ev.at("session_id").get<std::string>());
      std::lock_guard lock(e.mutex);
      apply_to(e.session, ev);
    } catch (const nlohmann::json::exception& ex) {
      throw Error(std::string("malformed event in log: ") + ex.what(), Error::Kind::io);
    }
  }
}

void SessionStore::require_open(const std::string& session_id) const {
  Entry& e = entry(session_id);
  std::lock_guard lock(e.mutex);
  require_open_session(e.session);
}

Session SessionStore::get(const std::string& session_id) const {
  Entry& e = entry(session_id);
  std::lock_guard lock(e.mutex);
  return e.session;
}

std::vector<Session> SessionStore::sessions(const ExportFilter& filter) const {
  std::vector<Session> out;
  std::shared_lock map_lock(map_mutex_);
  for (const auto& [id, e] : entries_) {
    std::lock_guard lock(e->mutex);
    if (filter.matches(e->session)) out.push_back(e->session);
  }
  // Stable order for export: creation time, then id.
  std::sort(out.begin(), out.end(), [](const Session& a, const Session& b) {
    return a.created_at != b.created_at ? a.created_at < b.created_at : a.session_id < b.session_id;
  });
  return out;
}

std::string SessionStore::export_jsonl(const ExportFilter& filter) const {
  std::string out;
  for (const auto& s : sessions(filter)) out += export_line(s) + '\n';
  return out;
}

std::vector<std::size_t> SessionStore::selection_histogram() const {
  std::vector<std::size_t> hist(k_, 0);
  for (const auto& s : sessions()) {
    for (const auto& sel : s.selections) ++hist[sel.rank - 1];
  }
  return hist;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> image_ids(const FeatureStore& features) {
  std::vector<std::string> ids;
  for (const auto& [id, t] : features.items()) ids.push_back(id);
  return ids;
}

}  // namespace

AnnotationService::AnnotationService(CompletionModel model, FeatureStore features, std::shared_ptr<EventLog> log,
                                     std::size_t k)
    : model_(std::move(model)), features_(std::move(features)), store_(std::move(log), image_ids(features_), k) {
  if (features_.dim() != config_of(model_).feature_dim) {
    throw Error("feature store dimension " + std::to_string(features_.dim()) + " does not match the model's " +
                std::to_string(config_of(model_).feature_dim));
  }
}

std::vector<Candidate> AnnotationService::suggest(const std::string& session_id, const std::string& text,
                                                  std::size_t cursor) {
  const Session s = store_.get(session_id);
  if (s.closed()) throw Error("session '" + session_id + "' is closed", Error::Kind::conflict);
  CompletionRequest req{features_.at(s.image_id), text, cursor, store_.k()};
  auto candidates = complete(model_, req);
  store_.record_suggestion(session_id, text, cursor, candidates);
  return candidates;
}

}  // namespace vcsc
