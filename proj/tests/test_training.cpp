#include <filesystem>
#include <fstream>
#include <map>

#include <doctest.h>

#include "fixtures.hpp"
#include "vcsc/checkpoint.hpp"
#include "vcsc/completion.hpp"
#include "vcsc/error.hpp"
#include "vcsc/training.hpp"

using namespace vcsc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("vcsc_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

TrainConfig small_config(std::size_t epochs) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.batch_size = 1;
  c.d = 24;
  c.d_embed = 12;
  c.N = 16;
  return c;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("corpus files") {
  TempDir dir;
  write(dir.path / "c.jsonl", R"({"image_id": "a", "caption": "一只狗"})" "\n" R"({"image_id": "b", "caption": "cat"})" "\n");
  const auto recs = load_corpus(dir.path / "c.jsonl");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0] == CorpusRecord{"a", "一只狗"});

  write(dir.path / "f.jsonl", "{\"dim\": 2}\n{\"image_id\": \"a\", \"feature\": [1, 0]}\n");
  const auto feats = load_features(dir.path / "f.jsonl");
  CHECK(feats.dim() == 2);
  CHECK_THROWS_WITH_AS(validate_corpus(recs, feats), doctest::Contains("b"), Error);

  write(dir.path / "bad.jsonl", "{\"dim\": 2}\n{\"image_id\": \"a\", \"feature\": [1, 0]}\n"
                                "{\"image_id\": \"z\", \"feature\": [1, 0, 3]}\n");
  CHECK_THROWS_WITH_AS(load_features(dir.path / "bad.jsonl"), doctest::Contains(":3:"), Error);
  CHECK_THROWS_WITH_AS(load_features(dir.path / "bad.jsonl"), doctest::Contains("'z'"), Error);

  write(dir.path / "empty.jsonl", R"({"image_id": "a", "caption": ""})" "\n");
  CHECK_THROWS_AS(load_corpus(dir.path / "empty.jsonl"), Error);
  CHECK_THROWS_AS(load_corpus(dir.path / "missing.jsonl"), Error);
}

TEST_CASE("feature and corpus files round trip") {
  TempDir dir;
  const auto recs = fixture::toy_corpus(5);
  const auto feats = fixture::features_for(recs, 7);
  save_corpus(recs, dir.path / "c.jsonl");
  save_features(feats, dir.path / "f.jsonl");
  CHECK(load_corpus(dir.path / "c.jsonl") == recs);
  const auto back = load_features(dir.path / "f.jsonl");
  for (const auto& [id, t] : feats.items()) CHECK(back.at(id) == t);
}

TEST_CASE("synthetic features are unit norm and seeded") {
  const std::vector<std::string> ids{"a", "b", "c"};
  const auto f = synthetic_features(ids, 16, 3);
  for (const auto& [id, t] : f.items()) {
    double n = 0.0;
    for (double v : t.values()) n += v * v;
    CHECK(n == doctest::Approx(1.0));
  }
  CHECK(synthetic_features(ids, 16, 3).at("b") == f.at("b"));
  CHECK_FALSE(synthetic_features(ids, 16, 4).at("b") == f.at("b"));
}

TEST_CASE("split is by image and roughly 80/10/10") {
  std::map<Split, int> counts;
  for (int i = 0; i < 5000; ++i) ++counts[split_of("image" + std::to_string(i))];
  CHECK(counts[Split::train] > 3800);
  CHECK(counts[Split::train] < 4200);
  CHECK(counts[Split::val] > 350);
  CHECK(counts[Split::test] > 350);
  CHECK(split_of("image7") == split_of("image7"));
  CHECK(split_from_string("val") == Split::val);
  CHECK_THROWS_AS(split_from_string("dev"), Error);
}

TEST_CASE("training config json") {
  auto c = TrainConfig::from_json({{"lr", 0.01}, {"d", 32}, {"abd_gapped_views", 3}});
  CHECK(c.lr == 0.01);
  CHECK(c.d == 32);
  CHECK(c.batch_size == 16);
  CHECK(c.abd_gapped_views == 3);
  CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK_THROWS_AS(TrainConfig::from_json({{"lr", -1.0}}), Error);
  CHECK_THROWS_AS(TrainConfig::from_json({{"d", "big"}}), Error);
}

TEST_CASE("a single caption is memorized in both directions") {
  const std::vector<CorpusRecord> one{{"only", "a red kite"}};
  const auto feats = fixture::features_for(one, 8);
  auto cfg = small_config(200);
  cfg.lr = 0.005;
  const auto fwd = train_show_and_tell(one, {}, feats, cfg);
  CHECK(fwd.history.back().train_loss < 0.05);
  for (std::size_t e = 6; e < fwd.history.size(); ++e) {
    CHECK(fwd.history[e].train_loss <= fwd.history[e - 1].train_loss * 1.05 + 1e-4);
  }
  const auto st = fwd.checkpoint.show_and_tell();
  CHECK(st.vocab.decode(greedy_decode(st.config, st.params, feats.at("only"), st.vocab.end_id())) == "a red kite");

  const auto bwd = train_backward(one, {}, feats, cfg);
  CHECK(bwd.history.back().train_loss < 0.05);
  const auto b = bwd.checkpoint.backward_model();
  CHECK(b.vocab.decode(greedy_decode(b.config, b.params, feats.at("only"), b.vocab.end_id())) == "etik der a");
}

TEST_CASE("selection picks the best validation epoch") {
  const auto recs = fixture::toy_corpus(6);
  const auto feats = fixture::features_for(recs, 8);
  auto cfg = small_config(15);
  cfg.lr = 0.005;
  const auto out = train_show_and_tell(recs, recs, feats, cfg);
  REQUIRE(out.history.size() == 15);
  double best = -1.0;
  for (const auto& e : out.history) best = std::max(best, e.val_cider);
  CHECK(out.history[out.best_epoch - 1].val_cider == best);
  CHECK(out.checkpoint.epoch == out.best_epoch);

  const auto bwd = train_backward(recs, recs, feats, cfg);
  double lowest = 1e300;
  for (const auto& e : bwd.history) lowest = std::min(lowest, e.val_loss);
  CHECK(bwd.history[bwd.best_epoch - 1].val_loss == lowest);
}

TEST_CASE("seeded training is bit-reproducible and leaves the backward decoder untouched") {
  const auto recs = fixture::toy_corpus(4);
  const auto feats = fixture::features_for(recs, 8);
  auto cfg = small_config(3);
  cfg.batch_size = 2;
  const auto a = train_backward(recs, {}, feats, cfg);
  const auto b = train_backward(recs, {}, feats, cfg);
  CHECK(a.checkpoint == b.checkpoint);

  const auto frozen = a.checkpoint.backward;
  const auto abd1 = train_forward_abd(recs, {}, feats, cfg, a.checkpoint);
  const auto abd2 = train_forward_abd(recs, {}, feats, cfg, a.checkpoint);
  CHECK(abd1.checkpoint == abd2.checkpoint);
  CHECK(abd1.checkpoint.backward == frozen);
  CHECK(a.checkpoint.backward == frozen);

  cfg.seed = 2;
  CHECK_FALSE(train_backward(recs, {}, feats, cfg).checkpoint == a.checkpoint);
}

TEST_CASE("bidirectional training needs a backward checkpoint") {
  const auto recs = fixture::toy_corpus(2);
  const auto feats = fixture::features_for(recs, 8);
  const auto st = train_show_and_tell(recs, {}, feats, small_config(1));
  CHECK_THROWS_AS(train_forward_abd(recs, {}, feats, small_config(1), st.checkpoint), Error);
  CHECK_THROWS_AS(train_show_and_tell({}, {}, feats, small_config(1)), Error);
  const std::vector<CorpusRecord> orphan{{"nowhere", "x"}};
  CHECK_THROWS_AS(train_show_and_tell(orphan, {}, feats, small_config(1)), Error);
}

TEST_CASE("checkpoint files round trip bit-exactly") {
  TempDir dir;
  const auto& t = fixture::small_trained();
  for (const auto* ckpt : {&t.show_and_tell, &t.backward, &t.abd}) {
    save_checkpoint(*ckpt, dir.path / "m.ckpt");
    const auto back = load_checkpoint(dir.path / "m.ckpt");
    CHECK(back == *ckpt);
  }
  std::ifstream in(dir.path / "m.ckpt");
  std::string magic;
  std::getline(in, magic);
  CHECK(magic == "VCSC1");

  write(dir.path / "bad.ckpt", "NOPE\n{}");
  CHECK_THROWS_AS(load_checkpoint(dir.path / "bad.ckpt"), Error);

  auto doc = checkpoint_to_json(t.abd);
  doc["tensors"].erase("attention.att.W");
  CHECK_THROWS_WITH_AS(checkpoint_from_json(doc), doctest::Contains("attention.att.W"), Error);
  doc = checkpoint_to_json(t.abd);
  doc["tensors"]["forward.out.b"]["shape"] = {3};
  CHECK_THROWS_AS(checkpoint_from_json(doc), Error);
  CHECK_THROWS_AS(t.backward.completion_model(), Error);
}

}
