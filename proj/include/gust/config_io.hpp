#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "gust/trainer.hpp"

namespace gust {

/// Keys mirror the command-line flag names.
inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["method"] = std::string(to_string(c.method));
  j["gamma"] = c.gamma;
  j["lambda"] = c.lambda;
  j["T"] = c.T;
  j["m_epochs"] = c.m_epochs;
  j["lr"] = c.lr;
  j["latent_dim"] = c.latent_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["seed"] = c.seed;
  j["deterministic_encoder"] = c.ablations.deterministic_encoder;
  j["single_step"] = c.ablations.single_step;
  j["no_graph_reg"] = c.ablations.no_graph_reg;
  j["confidence_threshold"] = c.confidence_threshold;
  return j;
}

/// Overlays any recognized keys present in `j` onto `c`.
template <typename Json>
void apply_json(const Json& j, TrainConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  if (j.contains("method")) c.method = parse_method(j.at("method").template get<std::string>());
  if (j.contains("gamma")) c.gamma = j.at("gamma").template get<double>();
  if (j.contains("lambda")) c.lambda = j.at("lambda").template get<double>();
  if (j.contains("T")) c.T = j.at("T").template get<int>();
  if (j.contains("m_epochs")) c.m_epochs = j.at("m_epochs").template get<int>();
  if (j.contains("lr")) c.lr = j.at("lr").template get<double>();
  if (j.contains("latent_dim")) c.latent_dim = j.at("latent_dim").template get<std::size_t>();
  if (j.contains("hidden_dim")) c.hidden_dim = j.at("hidden_dim").template get<std::size_t>();
  if (j.contains("seed")) c.seed = j.at("seed").template get<std::uint64_t>();
  if (j.contains("deterministic_encoder")) c.ablations.deterministic_encoder = j.at("deterministic_encoder").template get<bool>();
  if (j.contains("single_step")) c.ablations.single_step = j.at("single_step").template get<bool>();
  if (j.contains("no_graph_reg")) c.ablations.no_graph_reg = j.at("no_graph_reg").template get<bool>();
  if (j.contains("confidence_threshold")) c.confidence_threshold = j.at("confidence_threshold").template get<double>();
}

}  // namespace gust
