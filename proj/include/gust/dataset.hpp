#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gust/encoder.hpp"
#include "gust/errors.hpp"
#include "gust/graph.hpp"

namespace gust {

struct DatasetBundle {
  std::string name;
  Graph graph;
  /// Original node id for each dense index.
  std::vector<std::int64_t> node_ids;

  std::size_t num_classes() const { return graph.num_classes; }
  std::size_t feature_dim() const { return graph.feature_dim(); }
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

class TsvReader {
 public:
  explicit TsvReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) throw LoadError(path_.string() + ": cannot open file");
  }

  /// Next non-empty line split on tabs; false at end of file.
  bool next(std::vector<std::string_view>& fields) {
    while (std::getline(in_, line_)) {
      ++line_no_;
      if (!line_.empty() && line_.back() == '\r') line_.pop_back();
      if (line_.empty()) continue;
      fields = split_tabs(line_);
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw LoadError(path_.string() + ":" + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::string line_;
  std::size_t line_no_ = 0;
};

inline IndexSet sorted(IndexSet s) {
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace detail

/// Planetoid-style split over labeled nodes: `per_class` train nodes per
/// class, then `val` and `test` nodes from the rest, all chosen from `seed`.
inline void assign_default_split(Graph& g, std::uint64_t seed, std::size_t per_class = 20,
                                 std::size_t val = 500, std::size_t test = 1000) {
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < g.n; ++i) {
    if (g.labels[i]) labeled.push_back(i);
  }
  Rng rng(seed);
  std::shuffle(labeled.begin(), labeled.end(), rng);
  std::vector<std::size_t> taken(g.num_classes, 0);
  IndexSet train, rest;
  for (std::size_t i : labeled) {
    std::size_t& count = taken[*g.labels[i]];
    if (count < per_class) {
      ++count;
      train.push_back(i);
    } else {
      rest.push_back(i);
    }
  }
  const std::size_t nval = std::min(val, rest.size());
  const std::size_t ntest = std::min(test, rest.size() - nval);
  g.train_mask = detail::sorted(std::move(train));
  g.val_mask = detail::sorted(IndexSet(rest.begin(), rest.begin() + nval));
  g.test_mask = detail::sorted(IndexSet(rest.begin() + nval, rest.begin() + nval + ntest));
}

/// Reads nodes.tsv, edges.tsv, labels.tsv and the optional splits.tsv from
/// `dir`. Node ids are remapped densely in nodes.tsv order.
inline DatasetBundle load_dataset(const std::filesystem::path& dir, std::uint64_t split_seed = 0) {
  namespace fs = std::filesystem;
  for (const char* f : {"nodes.tsv", "edges.tsv", "labels.tsv"}) {
    if (!fs::exists(dir / f)) throw LoadError((dir / f).string() + ": missing file");
  }

  DatasetBundle b;
  b.name = dir.filename().string();
  if (b.name.empty()) b.name = dir.parent_path().filename().string();
  std::unordered_map<std::int64_t, std::size_t> index;
  std::vector<double> features;
  std::size_t dim = 0;
  std::vector<std::string_view> fields;

  {
    detail::TsvReader r(dir / "nodes.tsv");
    while (r.next(fields)) {
      std::int64_t id = 0;
      if (!detail::parse_number(fields[0], id)) r.fail("non-integer node id '" + std::string(fields[0]) + "'");
      if (b.node_ids.empty()) dim = fields.size() - 1;
      if (fields.size() - 1 != dim) {
        r.fail("expected " + std::to_string(dim) + " features, found " + std::to_string(fields.size() - 1));
      }
      if (!index.emplace(id, b.node_ids.size()).second) r.fail("duplicate node id " + std::to_string(id));
      b.node_ids.push_back(id);
      for (std::size_t k = 1; k < fields.size(); ++k) {
        double v = 0.0;
        if (!detail::parse_number(fields[k], v) || !std::isfinite(v)) {
          r.fail("invalid feature value '" + std::string(fields[k]) + "'");
        }
        features.push_back(v);
      }
    }
  }
  Graph& g = b.graph;
  g.n = b.node_ids.size();
  g.features = Matrix(g.n, dim, std::move(features));
  g.labels.assign(g.n, std::nullopt);

  auto lookup = [&](detail::TsvReader& r, std::string_view s) {
    std::int64_t id = 0;
    if (!detail::parse_number(s, id)) r.fail("non-integer node id '" + std::string(s) + "'");
    auto it = index.find(id);
    if (it == index.end()) r.fail("unknown node id " + std::to_string(id));
    return it->second;
  };

  {
    detail::TsvReader r(dir / "edges.tsv");
    std::vector<Edge> raw;
    while (r.next(fields)) {
      if (fields.size() != 2) r.fail("expected 2 fields, found " + std::to_string(fields.size()));
      const std::size_t u = lookup(r, fields[0]);
      const std::size_t v = lookup(r, fields[1]);
      if (u == v) r.fail("self-loop edge on node " + std::string(fields[0]));
      raw.push_back({u, v});
    }
    g.edges = canonicalize_edges(raw, g.n);
  }

  {
    detail::TsvReader r(dir / "labels.tsv");
    std::size_t max_label = 0;
    bool any = false;
    while (r.next(fields)) {
      if (fields.size() != 2) r.fail("expected 2 fields, found " + std::to_string(fields.size()));
      const std::size_t node = lookup(r, fields[0]);
      std::int64_t label = 0;
      if (!detail::parse_number(fields[1], label)) r.fail("non-integer label '" + std::string(fields[1]) + "'");
      if (label < 0) r.fail("label out of range: " + std::to_string(label));
      if (g.labels[node]) r.fail("duplicate label for node " + std::string(fields[0]));
      g.labels[node] = static_cast<std::size_t>(label);
      max_label = std::max(max_label, static_cast<std::size_t>(label));
      any = true;
    }
    g.num_classes = any ? max_label + 1 : 0;
  }

  if (fs::exists(dir / "splits.tsv")) {
    detail::TsvReader r(dir / "splits.tsv");
    std::vector<char> assigned(g.n, 0);
    while (r.next(fields)) {
      if (fields.size() != 2) r.fail("expected 2 fields, found " + std::to_string(fields.size()));
      const std::size_t node = lookup(r, fields[0]);
      if (assigned[node]) r.fail("node " + std::string(fields[0]) + " assigned to two splits");
      assigned[node] = 1;
      if (fields[1] == "train") {
        if (!g.labels[node]) r.fail("train node " + std::string(fields[0]) + " has no label");
        g.train_mask.push_back(node);
      } else if (fields[1] == "val") {
        g.val_mask.push_back(node);
      } else if (fields[1] == "test") {
        g.test_mask.push_back(node);
      } else {
        r.fail("unknown split '" + std::string(fields[1]) + "'");
      }
    }
    g.train_mask = detail::sorted(std::move(g.train_mask));
    g.val_mask = detail::sorted(std::move(g.val_mask));
    g.test_mask = detail::sorted(std::move(g.test_mask));
  } else {
    assign_default_split(g, split_seed);
  }

  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw LoadError(dir.string() + ": " + e.what());
  }
  return b;
}

struct SbmParams {
  std::size_t n = 200;
  std::size_t blocks = 2;
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t feature_dim = 16;
  double feature_shift = 1.0;
  std::size_t labels_per_class = 5;
  /// Share of the non-train nodes placed in validation; the rest is test.
  double val_fraction = 0.25;
};

/// Named SBM configurations usable from the command line.
inline SbmParams sbm_preset(std::string_view name) {
  if (name == "easy") return {};
  if (name == "hard") {
    SbmParams p;
    p.p_out = 0.03;
    p.feature_shift = 0.5;
    return p;
  }
  if (name == "tiny") {
    SbmParams p;
    p.n = 12;
    p.blocks = 3;
    p.p_in = 0.6;
    p.p_out = 0.1;
    p.feature_dim = 4;
    p.labels_per_class = 1;
    return p;
  }
  throw std::invalid_argument("unknown sbm preset '" + std::string(name) + "' (expected easy, hard or tiny)");
}

/// Stochastic block model with class-shifted Gaussian features. Nodes are
/// assigned to blocks contiguously; block index is the class label.
inline DatasetBundle generate_sbm(const SbmParams& params, std::uint64_t seed) {
  if (params.blocks == 0 || params.n < params.blocks) throw std::invalid_argument("generate_sbm: need n >= blocks >= 1");
  if (!(params.p_in >= 0.0 && params.p_in <= 1.0 && params.p_out >= 0.0 && params.p_out <= 1.0)) {
    throw std::invalid_argument("generate_sbm: probabilities must lie in [0, 1]");
  }
  if (params.labels_per_class < 1) throw std::invalid_argument("generate_sbm: labels_per_class must be >= 1");
  if (params.feature_dim == 0) throw std::invalid_argument("generate_sbm: feature_dim must be >= 1");

  Rng rng(seed);
  DatasetBundle b;
  b.name = "sbm";
  Graph& g = b.graph;
  g.n = params.n;
  g.num_classes = params.blocks;
  g.labels.resize(g.n);
  std::vector<std::vector<std::size_t>> members(params.blocks);
  for (std::size_t i = 0; i < g.n; ++i) {
    const std::size_t c = i * params.blocks / g.n;
    g.labels[i] = c;
    members[c].push_back(i);
    b.node_ids.push_back(static_cast<std::int64_t>(i));
  }
  for (std::size_t c = 0; c < params.blocks; ++c) {
    if (members[c].size() < params.labels_per_class) {
      throw std::invalid_argument("generate_sbm: class " + std::to_string(c) + " has " +
                                  std::to_string(members[c].size()) + " nodes, fewer than labels_per_class=" +
                                  std::to_string(params.labels_per_class));
    }
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j = i + 1; j < g.n; ++j) {
      const double p = *g.labels[i] == *g.labels[j] ? params.p_in : params.p_out;
      if (unit(rng) < p) g.edges.push_back({i, j});
    }
  }

  g.features = standard_normal(g.n, params.feature_dim, rng);
  for (std::size_t i = 0; i < g.n; ++i) {
    g.features(i, *g.labels[i] % params.feature_dim) += params.feature_shift;
  }

  IndexSet rest;
  for (auto& m : members) {
    std::shuffle(m.begin(), m.end(), rng);
    g.train_mask.insert(g.train_mask.end(), m.begin(), m.begin() + params.labels_per_class);
    rest.insert(rest.end(), m.begin() + params.labels_per_class, m.end());
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  const auto nval = static_cast<std::size_t>(params.val_fraction * static_cast<double>(rest.size()));
  g.train_mask = detail::sorted(std::move(g.train_mask));
  g.val_mask = detail::sorted(IndexSet(rest.begin(), rest.begin() + nval));
  g.test_mask = detail::sorted(IndexSet(rest.begin() + nval, rest.end()));
  g.validate();
  return b;
}

/// Keeps round(fraction * count) train nodes of each class, chosen from
/// `seed` so that smaller fractions give nested subsets. Returns nullopt if a
/// class with training nodes would keep none.
inline std::optional<IndexSet> subsample_train_mask(const Graph& g, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must lie in (0, 1]");
  std::vector<IndexSet> by_class(g.num_classes);
  for (std::size_t i : g.train_mask) by_class[*g.labels[i]].push_back(i);
  Rng rng(seed);
  IndexSet out;
  for (auto& nodes : by_class) {
    if (nodes.empty()) continue;
    std::shuffle(nodes.begin(), nodes.end(), rng);
    const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(nodes.size())));
    if (keep == 0) return std::nullopt;
    out.insert(out.end(), nodes.begin(), nodes.begin() + std::min(keep, nodes.size()));
  }
  return detail::sorted(std::move(out));
}

}  // namespace gust
