#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <sstream>

#include "vcsc/completion.hpp"
#include "vcsc/error.hpp"
#include "vcsc/eval.hpp"

namespace vcsc {

std::vector<ReplayCase> load_replay_cases(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'", Error::Kind::io);
  std::vector<ReplayCase> cases;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ReplayCase c;
      c.image_id = j.at("image_id").get<std::string>();
      c.pre_completion_text = j.at("pre_completion_text").get<std::string>();
      c.cursor = j.value("cursor", utf8_length(c.pre_completion_text));
      c.final_annotation = j.at("final_annotation").get<std::string>();
      if (c.final_annotation.empty()) throw Error("empty final annotation");
      cases.push_back(std::move(c));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what(), Error::Kind::io);
    }
  }
  return cases;
}

void save_replay_cases(std::span<const ReplayCase> cases, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing", Error::Kind::io);
  for (const auto& c : cases) {
    out << nlohmann::json{{"image_id", c.image_id},
                          {"pre_completion_text", c.pre_completion_text},
                          {"cursor", c.cursor},
                          {"final_annotation", c.final_annotation}}
               .dump()
        << '\n';
  }
}

ReplayTable simulated_compare(std::span<const ReplayCase> cases, const FeatureStore& features,
                              const CompletionModel& model_a, const CompletionModel& model_b, std::size_t k,
                              const std::string& name_a, const std::string& name_b) {
  if (k == 0) throw Error("k must be at least 1");
  ReplayTable table;
  table.k = k;
  table.models = {name_a, name_b};

  std::vector<const ReplayCase*> usable;
  for (const auto& c : cases) {
    if (features.contains(c.image_id)) {
      usable.push_back(&c);
    } else {
      ++table.skipped;
    }
  }
  table.evaluated = usable.size();

  const CompletionModel* models[] = {&model_a, &model_b};
  table.levd.assign(2, std::vector<std::vector<long>>(usable.size(), std::vector<long>(k, -1)));
  const auto n = static_cast<std::ptrdiff_t>(usable.size());
  std::vector<std::exception_ptr> errors(usable.size());
  for (std::size_t mi = 0; mi < 2; ++mi) {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t ci = 0; ci < n; ++ci) {
      try {
        const ReplayCase& c = *usable[ci];
        CompletionRequest req{features.at(c.image_id), c.pre_completion_text, c.cursor, k};
        const auto cands = complete(*models[mi], req);
        for (const auto& cand : cands) {
          table.levd[mi][ci][cand.rank - 1] = static_cast<long>(levenshtein(cand.text, c.final_annotation));
        }
      } catch (...) {
        errors[ci] = std::current_exception();
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  table.mean_levd.assign(2, std::vector<double>(k, std::numeric_limits<double>::quiet_NaN()));
  table.counts.assign(2, std::vector<std::size_t>(k, 0));
  for (std::size_t mi = 0; mi < 2; ++mi) {
    for (std::size_t r = 0; r < k; ++r) {
      double sum = 0.0;
      for (const auto& row : table.levd[mi]) {
        if (row[r] < 0) continue;
        sum += static_cast<double>(row[r]);
        ++table.counts[mi][r];
      }
      if (table.counts[mi][r] > 0) table.mean_levd[mi][r] = sum / static_cast<double>(table.counts[mi][r]);
    }
  }
  return table;
}

nlohmann::json ReplayTable::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    nlohmann::json means = nlohmann::json::array();
    for (double v : mean_levd[mi]) means.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
    rows.push_back({{"model", models[mi]}, {"mean_levd", means}, {"counts", counts[mi]}});
  }
  return {{"k", k}, {"evaluated", evaluated}, {"skipped", skipped}, {"rows", rows}};
}

std::string ReplayTable::to_csv() const {
  std::ostringstream os;
  os << "model";
  for (std::size_t r = 1; r <= k; ++r) os << ",rank" << r;
  os << '\n';
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    os << models[mi];
    for (double v : mean_levd[mi]) {
      os << ',';
      if (!std::isnan(v)) os << v;
    }
    os << '\n';
  }
  return os.str();
}

double sign_test_p(std::size_t wins, std::size_t losses) {
  const std::size_t n = wins + losses;
  if (n == 0) return 1.0;
  // Sum binomial tail in log space to stay finite for large n.
  double p = 0.0;
  const double log_half_n = -static_cast<double>(n) * std::log(2.0);
  for (std::size_t x = wins; x <= n; ++x) {
    const double log_choose = std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(x) + 1.0) -
                              std::lgamma(static_cast<double>(n - x) + 1.0);
    p += std::exp(log_choose + log_half_n);
  }
  return std::min(1.0, p);
}

}  // namespace vcsc
