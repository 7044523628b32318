#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "gust/config_io.hpp"
#include "gust/trainer.hpp"

namespace gust {

struct RunMetadata {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string dataset;
  TrainConfig config;
};

namespace detail {

inline nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json run_header(const RunMetadata& meta) {
  nlohmann::ordered_json j;
  j["run_id"] = meta.run_id;
  j["seed"] = meta.seed;
  j["dataset"] = meta.dataset;
  j["config"] = to_json(meta.config);
  return j;
}

}  // namespace detail

/// Appends one JSON line per EM iteration plus a closing summary line.
/// Writes nothing (and creates no file) for an empty history.
inline void write_metrics(const EmHistory& history, const RunMetadata& meta,
                          const std::filesystem::path& path) {
  if (history.records.empty()) return;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error(path.string() + ": cannot open metrics file for append");

  for (const EmRecord& r : history.records) {
    auto j = detail::run_header(meta);
    j["iteration"] = r.iteration;
    j["losses"] = {{"total", r.losses.total},
                   {"labeled", r.losses.labeled},
                   {"pseudo", r.losses.pseudo},
                   {"omega", r.losses.omega},
                   {"smoothness_term", r.losses.smoothness_term}};
    j["mean_alpha"] = detail::optional_number(r.mean_alpha);
    j["val_acc"] = detail::optional_number(r.val_acc);
    j["test_acc"] = detail::optional_number(r.test_acc);
    out << j.dump() << '\n';
  }
  auto s = detail::run_header(meta);
  s["summary"] = true;
  s["iterations"] = history.records.size();
  s["best_val_iteration"] = history.best_val_iteration
                                ? nlohmann::ordered_json(*history.best_val_iteration)
                                : nlohmann::ordered_json(nullptr);
  s["val_acc"] = detail::optional_number(history.records.back().val_acc);
  s["test_acc"] = detail::optional_number(history.records.back().test_acc);
  out << s.dump() << '\n';
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace gust
