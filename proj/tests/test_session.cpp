#include <filesystem>
#include <set>
#include <sstream>
#include <thread>

#include <doctest.h>

#include "fixtures.hpp"
#include "vcsc/error.hpp"
#include "vcsc/session.hpp"

using namespace vcsc;
namespace fs = std::filesystem;

namespace {

fs::path temp_log(const std::string& name) {
  auto p = fs::temp_directory_path() / ("vcsc_" + name + "_" + std::to_string(std::random_device{}()) + ".jsonl");
  fs::remove(p);
  return p;
}

Error::Kind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return Error::Kind::io;
}

/// Snapshots "x", "x1", ..., one rank-r selection, then submit.
SessionStats scripted(SessionStore& store, const std::string& id, int variant) {
  std::string text;
  double ts = 0.0;
  for (int i = 0; i <= variant % 5; ++i) {
    text += static_cast<char>('a' + (variant + i) % 26);
    store.record_snapshot(id, text, text.size(), ts += 0.2);
    store.record_snapshot(id, text, text.size(), ts += 0.2);
  }
  if (variant % 3 != 0) store.record_selection(id, 1 + variant % 5, text + " done", ts += 0.2);
  return store.submit(id, text + " done!", ts += 0.2);
}

}  // namespace

TEST_SUITE("session") {

TEST_CASE("create session") {
  SessionStore store(std::make_shared<EventLog>(), {"img1", "img2"});
  const auto a = store.create_session("img1");
  const auto b = store.create_session("img1");
  CHECK(a != b);
  const auto s = store.get(a);
  CHECK(s.snapshots.empty());
  CHECK_FALSE(s.closed());
  CHECK(s.image_id == "img1");
  CHECK(kind_of([&] { store.create_session("nope"); }) == Error::Kind::not_found);
  CHECK(kind_of([&] { store.get("missing"); }) == Error::Kind::not_found);
}

TEST_CASE("snapshot dedup and ordering") {
  SessionStore store;
  const auto id = store.create_session("x");
  store.record_snapshot(id, "a", 1, 1.0);
  store.record_snapshot(id, "a", 1, 1.2);
  CHECK(store.get(id).snapshots.size() == 1);
  store.record_snapshot(id, "ab", 2, 1.4);
  CHECK(store.get(id).snapshots.size() == 2);
  CHECK(compute_stats(store.get(id)).accumulated_levd == 1);
  CHECK(kind_of([&] { store.record_snapshot(id, "abc", 3, 1.0); }) == Error::Kind::conflict);
  CHECK(kind_of([&] { store.record_snapshot(id, "abc", 4, 2.0); }) == Error::Kind::invalid_argument);
  CHECK(store.get(id).snapshots.size() == 2);
}

TEST_CASE("selection") {
  SessionStore store;
  const auto id = store.create_session("x");
  store.record_snapshot(id, "a", 1, 1.0);
  store.record_selection(id, 1, "a dog", 2.0);
  const auto s = store.get(id);
  REQUIRE(s.selections.size() == 1);
  CHECK(s.selections[0].rank == 1);
  CHECK(s.selections[0].round == 1);
  CHECK(s.mode() == SessionMode::interactive);
  CHECK(s.snapshots.back() == Snapshot{"a dog", 5, 2.0});
  CHECK(kind_of([&] { store.record_selection(id, 6, "x", 3.0); }) == Error::Kind::invalid_argument);
  CHECK(kind_of([&] { store.record_selection(id, 0, "x", 3.0); }) == Error::Kind::invalid_argument);
}

TEST_CASE("submit") {
  SessionStore store;
  const auto id = store.create_session("x");
  store.record_snapshot(id, "a", 1, 1.0);
  store.record_snapshot(id, "ab", 2, 1.2);
  CHECK(kind_of([&] { store.submit(id, "", 1.4); }) == Error::Kind::invalid_argument);
  const auto stats = store.submit(id, "abc", 1.4);
  CHECK(stats.T == 3);
  CHECK(stats.accumulated_edits == 2);
  CHECK(stats.accumulated_levd == 2);
  CHECK(stats.levd_manual == 3);
  CHECK(stats.num_selections == 0);
  CHECK(stats.mode == SessionMode::fully_manual);
  CHECK(kind_of([&] { store.submit(id, "abc", 1.6); }) == Error::Kind::conflict);
  CHECK(kind_of([&] { store.record_snapshot(id, "abcd", 4, 1.8); }) == Error::Kind::conflict);
  CHECK(kind_of([&] { store.require_open(id); }) == Error::Kind::conflict);
  CHECK(store.get(id).final_annotation == "abc");
}

TEST_CASE("scripted session with a selection") {
  SessionStore store;
  const auto id = store.create_session("img");
  store.record_snapshot(id, "一", 1, 0.2);
  store.record_snapshot(id, "一只", 2, 0.4);
  store.record_selection(id, 1, "一只狗", 0.6);
  const auto stats = store.submit(id, "一只狗", 0.8);
  CHECK(stats.T == 3);
  CHECK(stats.accumulated_edits == 2);
  CHECK(stats.accumulated_levd == 2);
  CHECK(stats.num_selections == 1);
  CHECK(stats.levd_manual == 3);
  CHECK(stats.mode == SessionMode::interactive);
}

TEST_CASE("export and import") {
  SessionStore store;
  CHECK(store.export_jsonl().empty());
  const auto a = store.create_session("x");
  const auto b = store.create_session("y");
  store.create_session("z");
  scripted(store, a, 1);
  scripted(store, b, 3);
  ExportFilter closed;
  closed.closed = true;
  const auto text = store.export_jsonl(closed);
  std::istringstream in(text);
  std::string line;
  std::vector<Session> back;
  while (std::getline(in, line)) {
    back.push_back(import_line(line));
    CHECK(export_line(back.back()) == line);
    const auto j = nlohmann::json::parse(line);
    CHECK((j["mode"] == "interactive") == !back.back().selections.empty());
    CHECK(SessionStats::from_json(j["stats"]) == compute_stats(back.back()));
  }
  CHECK(back.size() == 2);
  CHECK(store.sessions().size() == 3);
  ExportFilter by_image;
  by_image.image_id = "y";
  CHECK(store.sessions(by_image).size() == 1);
  ExportFilter manual;
  manual.mode = SessionMode::fully_manual;
  for (const auto& s : store.sessions(manual)) CHECK(s.selections.empty());
}

TEST_CASE("the event log rebuilds identical sessions") {
  const auto path = temp_log("replay");
  std::vector<std::string> ids;
  std::vector<SessionStats> live;
  {
    SessionStore store(std::make_shared<EventLog>(path));
    for (int v = 0; v < 12; ++v) {
      ids.push_back(store.create_session("img" + std::to_string(v % 3)));
      live.push_back(scripted(store, ids.back(), v));
    }
    store.create_session("open");
  }
  SessionStore rebuilt;
  rebuilt.replay(path);
  CHECK(rebuilt.sessions().size() == 13);
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(compute_stats(rebuilt.get(ids[i])) == live[i]);
  fs::remove(path);
}

TEST_CASE("a damaged log line is reported") {
  const auto path = temp_log("damaged");
  std::ofstream(path) << "{\"type\":\"session_created\",\"session_id\":\"s\",\"image_id\":\"x\",\"created_at\":1}\nnot json\n";
  SessionStore store;
  CHECK_THROWS_WITH_AS(store.replay(path), doctest::Contains(":2:"), Error);
  fs::remove(path);
}

TEST_CASE("parallel sessions match serial execution") {
  SessionStore serial;
  std::vector<SessionStats> expected;
  for (int v = 0; v < 100; ++v) expected.push_back(scripted(serial, serial.create_session("img"), v));

  const auto path = temp_log("parallel");
  SessionStore store(std::make_shared<EventLog>(path));
  std::vector<std::string> ids(100);
  std::vector<SessionStats> got(100);
  std::vector<std::thread> threads;
  for (int w = 0; w < 8; ++w) {
    threads.emplace_back([&, w] {
      for (int v = w; v < 100; v += 8) {
        ids[v] = store.create_session("img");
        got[v] = scripted(store, ids[v], v);
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(got == expected);

  SessionStore rebuilt;
  rebuilt.replay(path);
  for (int v = 0; v < 100; ++v) CHECK(compute_stats(rebuilt.get(ids[v])) == expected[v]);
  CHECK(rebuilt.selection_histogram() == store.selection_histogram());
  fs::remove(path);
}

TEST_CASE("selection histogram counts ranks") {
  SessionStore store;
  for (std::size_t rank : {1, 1, 2, 5}) {
    const auto id = store.create_session("x");
    store.record_selection(id, rank, "text", 1.0);
  }
  CHECK(store.selection_histogram() == std::vector<std::size_t>{2, 1, 0, 0, 1});
}

TEST_CASE("annotation service suggestions") {
  const auto& t = fixture::small_trained();
  AnnotationService service(t.abd.completion_model(), t.features, std::make_shared<EventLog>());
  const auto id = service.create_session(t.records[0].image_id);
  auto c = service.suggest(id, "", 0);
  CHECK(c.size() == 5);
  std::set<std::string> distinct;
  for (const auto& x : c) distinct.insert(x.text);
  CHECK(distinct.size() == 5);
  c = service.suggest(id, "a d", 3);
  for (const auto& x : c) CHECK(x.text.rfind("a d", 0) == 0);
  CHECK(service.store().get(id).suggestion_rounds == 2);
  CHECK(kind_of([&] { service.create_session("ghost"); }) == Error::Kind::not_found);
  service.store().submit(id, "a dog", 1.0);
  CHECK(kind_of([&] { service.suggest(id, "a", 1); }) == Error::Kind::conflict);
}

}
