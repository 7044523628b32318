#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gust/config_io.hpp"
#include "gust/encoder.hpp"
#include "gust/errors.hpp"
#include "gust/trainer.hpp"

namespace gust {

inline constexpr int kCheckpointFormatVersion = 1;

namespace detail {

/// 64-bit FNV-1a, as 16 lowercase hex digits.
inline std::string fnv1a_hex(const std::vector<char>& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

struct Checkpoint {
  EncoderParams params;
  TrainConfig config;
};

/// Writes `dir`/manifest.json and `dir`/weights.bin. The payload is every
/// weight matrix in manifest order as little-endian IEEE-754 doubles.
inline void save_checkpoint(const EncoderParams& params, const TrainConfig& config,
                            const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["seed"] = config.seed;
  manifest["config"] = to_json(config);
  auto& shapes = manifest["shapes"] = nlohmann::ordered_json::array();

  std::vector<char> payload;
  for (const Parameter* p : params.list()) {
    shapes.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
    for (double v : p->value.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) payload.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
  }

  manifest["payload_fnv1a"] = detail::fnv1a_hex(payload);

  std::ofstream m(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  m << manifest.dump(2) << '\n';
  std::ofstream w(dir / "weights.bin", std::ios::binary | std::ios::trunc);
  w.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!m || !w) throw std::runtime_error(dir.string() + ": failed to write checkpoint");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream m(dir / "manifest.json", std::ios::binary);
  if (!m) throw IntegrityError((dir / "manifest.json").string() + ": cannot open");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(m);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError((dir / "manifest.json").string() + ": " + e.what());
  }

  Checkpoint ck;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  std::string checksum;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw IntegrityError("checkpoint format_version " + std::to_string(version) +
                           " is not supported (expected " +
                           std::to_string(kCheckpointFormatVersion) + ")");
    }
    apply_json(manifest.at("config"), ck.config);
    checksum = manifest.at("payload_fnv1a").get<std::string>();
    for (const auto& s : manifest.at("shapes")) {
      shapes.emplace_back(s.at("rows").get<std::size_t>(), s.at("cols").get<std::size_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError((dir / "manifest.json").string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw IntegrityError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (shapes.size() != 4) throw IntegrityError("checkpoint: expected 4 weight matrices");

  std::ifstream w(dir / "weights.bin", std::ios::binary);
  if (!w) throw IntegrityError((dir / "weights.bin").string() + ": cannot open");
  const std::vector<char> payload{std::istreambuf_iterator<char>(w), std::istreambuf_iterator<char>()};
  std::size_t expected = 0;
  for (auto [r, c] : shapes) expected += r * c * 8;
  if (payload.size() != expected) {
    throw IntegrityError("checkpoint: weights.bin holds " + std::to_string(payload.size()) +
                         " bytes, manifest requires " + std::to_string(expected));
  }

  if (detail::fnv1a_hex(payload) != checksum) {
    throw IntegrityError("checkpoint: weights.bin checksum mismatch (manifest " + checksum + ")");
  }

  ck.params = EncoderParams::zeros({shapes[0].first, shapes[0].second, shapes[1].second, shapes[3].second});
  std::size_t offset = 0;
  auto list = ck.params.list();
  for (std::size_t k = 0; k < list.size(); ++k) {
    Parameter& p = *list[k];
    if (p.value.rows() != shapes[k].first || p.value.cols() != shapes[k].second) {
      throw IntegrityError("checkpoint: inconsistent shape for " + p.name);
    }
    for (double& v : p.value.values()) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(payload[offset++])) << (8 * b);
      }
      v = std::bit_cast<double>(bits);
    }
  }
  return ck;
}

}  // namespace gust
