// vcsc: train, evaluate, compare and serve caption-completion models.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "vcsc/checkpoint.hpp"
#include "vcsc/completion.hpp"
#include "vcsc/corpus.hpp"
#include "vcsc/error.hpp"
#include "vcsc/eval.hpp"
#include "vcsc/server.hpp"
#include "vcsc/session.hpp"
#include "vcsc/training.hpp"

namespace {

struct TrainArgs {
  std::string corpus, features, config, out, backward;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
};

void add_train_options(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--corpus", a.corpus, "captions, JSON-lines")->required()->check(CLI::ExistingFile);
  cmd->add_option("--features", a.features, "feature vectors, JSON-lines")->required()->check(CLI::ExistingFile);
  cmd->add_option("--config", a.config, "training config, JSON")->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "checkpoint to write")->required();
  cmd->add_option("--seed", a.seed, "overrides the config seed");
  cmd->add_option("--epochs", a.epochs, "overrides max_epochs");
}

vcsc::TrainConfig resolve_config(const TrainArgs& a, const CLI::App* cmd) {
  auto cfg = a.config.empty() ? vcsc::TrainConfig{} : vcsc::load_train_config(a.config);
  if (cmd->count("--seed")) cfg.seed = a.seed;
  if (cmd->count("--epochs")) cfg.max_epochs = a.epochs;
  cfg.on_epoch = [](const vcsc::EpochStats& s) {
    std::fprintf(stderr, "epoch %zu  train_loss %.4f  val_loss %.4f  val_cider %.4f\n", s.epoch, s.train_loss,
                 s.val_loss, s.val_cider);
  };
  return cfg;
}

int run_train(const std::string& which, const TrainArgs& a, const CLI::App* cmd) {
  const auto cfg = resolve_config(a, cmd);
  const auto records = vcsc::load_corpus(a.corpus);
  const auto features = vcsc::load_features(a.features);
  vcsc::validate_corpus(records, features);
  const auto train = vcsc::select_split(records, vcsc::Split::train);
  const auto val = vcsc::select_split(records, vcsc::Split::val);
  std::fprintf(stderr, "%zu train / %zu val captions\n", train.size(), val.size());

  vcsc::TrainOutcome outcome;
  if (which == "backward") {
    outcome = vcsc::train_backward(train, val, features, cfg);
  } else if (which == "st") {
    outcome = vcsc::train_show_and_tell(train, val, features, cfg);
  } else {
    const auto backward = vcsc::load_checkpoint(a.backward);
    outcome = vcsc::train_forward_abd(train, val, features, cfg, backward);
  }
  vcsc::save_checkpoint(outcome.checkpoint, a.out);
  std::fprintf(stderr, "selected epoch %zu -> %s\n", outcome.best_epoch, a.out.c_str());
  return 0;
}

std::atomic<vcsc::HttpServer*> g_server{nullptr};

void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive caption completion engine"};
  app.require_subcommand(1);

  TrainArgs tb, tf, ts;
  auto* train_backward = app.add_subcommand("train-backward", "train the backward decoder");
  add_train_options(train_backward, tb);
  auto* train_forward = app.add_subcommand("train-forward", "train the attention forward decoder");
  add_train_options(train_forward, tf);
  train_forward->add_option("--backward", tf.backward, "backward checkpoint")->required()->check(CLI::ExistingFile);
  auto* train_st = app.add_subcommand("train-st", "train the prefix-only forward decoder");
  add_train_options(train_st, ts);

  std::string ev_ckpt, ev_corpus, ev_features, ev_split = "test";
  auto* evaluate = app.add_subcommand("evaluate", "automated-captioning metrics");
  evaluate->add_option("--checkpoint", ev_ckpt)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--corpus", ev_corpus)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--features", ev_features)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--split", ev_split)->check(CLI::IsMember({"train", "val", "test", "all"}));

  std::string sim_cases, sim_a, sim_b, sim_features, sim_format = "json";
  std::size_t sim_k = vcsc::kSuggestionCount;
  auto* simulate = app.add_subcommand("simulate", "replay completion cases against two models");
  simulate->add_option("--cases", sim_cases)->required()->check(CLI::ExistingFile);
  simulate->add_option("--model-a", sim_a)->required()->check(CLI::ExistingFile);
  simulate->add_option("--model-b", sim_b)->required()->check(CLI::ExistingFile);
  simulate->add_option("--features", sim_features)->required()->check(CLI::ExistingFile);
  simulate->add_option("--k", sim_k)->check(CLI::PositiveNumber);
  simulate->add_option("--format", sim_format)->check(CLI::IsMember({"json", "csv"}));

  std::string co_ckpt, co_features, co_image, co_text;
  std::size_t co_cursor = 0, co_k = vcsc::kSuggestionCount;
  bool co_cursor_set = false;
  auto* complete = app.add_subcommand("complete", "print completions for one input");
  complete->add_option("--checkpoint", co_ckpt)->required()->check(CLI::ExistingFile);
  complete->add_option("--features", co_features)->required()->check(CLI::ExistingFile);
  complete->add_option("--image", co_image)->required();
  complete->add_option("--text", co_text);
  complete->add_option("--cursor", co_cursor, "code-point offset; defaults to the end of --text");
  complete->add_option("--k", co_k)->check(CLI::PositiveNumber);

  std::string sv_ckpt, sv_features, sv_images, sv_log, sv_host = "127.0.0.1";
  int sv_port = 8080;
  auto* serve = app.add_subcommand("serve", "run the annotation HTTP service");
  serve->add_option("--checkpoint", sv_ckpt)->required()->check(CLI::ExistingFile);
  serve->add_option("--features", sv_features)->required()->check(CLI::ExistingFile);
  serve->add_option("--images", sv_images, "directory of image files named by id");
  serve->add_option("--log", sv_log, "event log; replayed on start, appended to afterwards");
  serve->add_option("--host", sv_host);
  serve->add_option("--port", sv_port);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_backward) return run_train("backward", tb, train_backward);
    if (*train_forward) return run_train("forward", tf, train_forward);
    if (*train_st) return run_train("st", ts, train_st);

    if (*evaluate) {
      const auto model = vcsc::load_checkpoint(ev_ckpt).completion_model();
      auto records = vcsc::load_corpus(ev_corpus);
      if (ev_split != "all") records = vcsc::select_split(records, vcsc::split_from_string(ev_split));
      const auto features = vcsc::load_features(ev_features);
      std::cout << vcsc::evaluate_model(model, records, features).to_json().dump(2) << '\n';
      return 0;
    }

    if (*simulate) {
      const auto cases = vcsc::load_replay_cases(sim_cases);
      const auto a = vcsc::load_checkpoint(sim_a).completion_model();
      const auto b = vcsc::load_checkpoint(sim_b).completion_model();
      const auto features = vcsc::load_features(sim_features);
      const auto table = vcsc::simulated_compare(cases, features, a, b, sim_k, vcsc::kind_name(a) + ":A",
                                                 vcsc::kind_name(b) + ":B");
      if (sim_format == "csv") {
        std::cout << table.to_csv();
      } else {
        std::cout << table.to_json().dump(2) << '\n';
      }
      return 0;
    }

    if (*complete) {
      co_cursor_set = complete->count("--cursor") > 0;
      const auto model = vcsc::load_checkpoint(co_ckpt).completion_model();
      const auto features = vcsc::load_features(co_features);
      vcsc::CompletionRequest req{features.at(co_image), co_text,
                                  co_cursor_set ? co_cursor : vcsc::utf8_length(co_text), co_k};
      for (const auto& c : vcsc::complete(model, req)) {
        std::cout << c.rank << '\t' << c.score << '\t' << c.text << '\n';
      }
      return 0;
    }

    if (*serve) {
      auto log = sv_log.empty() ? std::make_shared<vcsc::EventLog>() : nullptr;
      const bool replay = !sv_log.empty() && std::filesystem::exists(sv_log);
      if (!log) log = std::make_shared<vcsc::EventLog>(sv_log);
      vcsc::AnnotationService service(vcsc::load_checkpoint(sv_ckpt).completion_model(),
                                      vcsc::load_features(sv_features), log);
      if (replay) service.store().replay(sv_log);
      vcsc::HttpServer server(service, {sv_host, sv_port, sv_images});
      const int port = server.bind();
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::fprintf(stderr, "listening on http://%s:%d (%zu sessions restored)\n", sv_host.c_str(), port,
                   service.store().sessions().size());
      server.listen();
      g_server = nullptr;
      return 0;
    }
  } catch (const vcsc::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
