#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "forge/dsl.hpp"
#include "forge/engine.hpp"
#include "forge/graph.hpp"

namespace forge {

/// The one compressor every bit measure uses: zlib deflate, level 9,
/// 15-bit window, memory level 8, default strategy, zlib container.
/// Its identity string is recorded in every ComplexityReport.
struct Compressor {
  static constexpr int kLevel = 9;
  static constexpr int kWindowBits = 15;
  static constexpr int kMemLevel = 8;

  static std::string identity() {
    return std::string("zlib-") + zlibVersion() + "/deflate level=9 window=15 memlevel=8 strategy=default";
  }

  static std::size_t compressed_size(std::span<const std::uint8_t> data) {
    z_stream zs{};
    if (deflateInit2(&zs, kLevel, Z_DEFLATED, kWindowBits, kMemLevel, Z_DEFAULT_STRATEGY) != Z_OK)
      throw std::runtime_error("deflateInit2 failed");
    std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(data.size())));
    zs.next_in = const_cast<Bytef*>(data.data());
    zs.avail_in = static_cast<uInt>(data.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    const std::size_t produced = zs.total_out;
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw std::runtime_error("deflate did not finish");
    return produced;
  }
};

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// 8 x compressed length under the pinned compressor.
inline std::int64_t compressed_bits(std::span<const std::uint8_t> data) {
  return 8 * static_cast<std::int64_t>(Compressor::compressed_size(data));
}
inline std::int64_t compressed_bits(std::string_view data) { return compressed_bits(as_bytes(data)); }

/// Normalized compression distance
///   (C(ab) - min(C(a), C(b))) / max(C(a), C(b))
/// with C = compressed_bits and ab the concatenation.
inline double ncd(std::string_view a, std::string_view b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ncd needs two non-empty inputs");
  std::string ab;
  ab.reserve(a.size() + b.size());
  ab.append(a).append(b);
  const double ca = static_cast<double>(compressed_bits(a));
  const double cb = static_cast<double>(compressed_bits(b));
  const double cab = static_cast<double>(compressed_bits(ab));
  return (cab - std::min(ca, cb)) / std::max(ca, cb);
}

/// 8 x canonical text length, plus 64 bits per param scalar when `params`
/// is given.
inline std::int64_t description_bits(const GraphSpec& spec, const ParamSet* params = nullptr) {
  std::int64_t bits = 8 * static_cast<std::int64_t>(canonical_serialize(spec).size());
  if (params) {
    for (const auto& p : spec.params) {
      auto it = params->find(p.name);
      if (it == params->end()) throw std::invalid_argument("no value for param '" + p.name + "'");
      bits += 64 * static_cast<std::int64_t>(it->second.size());
    }
  }
  return bits;
}

struct PageRankOptions {
  double damping = 0.85;
  double tolerance = 1e-10;
  int max_iter = 1000;
};

/// PageRank by power iteration on a directed graph given as out-edge lists.
/// Dangling vertices spread their mass uniformly. Stops when the L1 change
/// drops below the tolerance or after max_iter sweeps; scores sum to 1.
inline std::vector<double> pagerank(const std::vector<std::vector<std::size_t>>& out_edges,
                                    const PageRankOptions& opt = {}) {
  if (!(opt.damping > 0.0 && opt.damping < 1.0))
    throw std::invalid_argument("pagerank damping must lie in (0, 1)");
  const std::size_t n = out_edges.size();
  if (n == 0) return {};
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> rank(n, inv_n), next(n);
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    double dangling = 0.0;
    for (std::size_t u = 0; u < n; ++u)
      if (out_edges[u].empty()) dangling += rank[u];
    const double base = (1.0 - opt.damping) * inv_n + opt.damping * dangling * inv_n;
    std::fill(next.begin(), next.end(), base);
    for (std::size_t u = 0; u < n; ++u) {
      if (out_edges[u].empty()) continue;
      const double share = opt.damping * rank[u] / static_cast<double>(out_edges[u].size());
      for (std::size_t v : out_edges[u]) next[v] += share;
    }
    // Renormalize against rounding drift.
    double total = 0.0;
    for (double v : next) total += v;
    double change = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      next[v] /= total;
      change += std::abs(next[v] - rank[v]);
    }
    rank.swap(next);
    if (change < opt.tolerance) break;
  }
  return rank;
}

/// PageRank over every declaration of a valid spec, with an edge from each
/// operand to its consumer (one edge per operand slot).
inline std::map<std::string, double> pagerank(const GraphSpec& spec, const PageRankOptions& opt = {}) {
  validate(spec).value();
  std::vector<std::string> names;
  for (const auto& in : spec.inputs) names.push_back(in.name);
  for (const auto& p : spec.params) names.push_back(p.name);
  for (const auto& n : spec.nodes) names.push_back(n.name);
  std::sort(names.begin(), names.end());
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < names.size(); ++i) index.emplace(names[i], i);

  std::vector<std::vector<std::size_t>> edges(names.size());
  for (const auto& n : spec.nodes)
    for (const auto& o : n.operands) edges[index.at(o)].push_back(index.at(n.name));
  const auto scores = pagerank(edges, opt);

  std::map<std::string, double> out;
  for (std::size_t i = 0; i < names.size(); ++i) out.emplace(names[i], scores[i]);
  return out;
}

struct ComplexityReport {
  std::int64_t description_bits = 0;
  std::int64_t compressed_bits = 0;
  std::int64_t node_count = 0;
  std::optional<double> ncd_to_reference;
  std::map<std::string, double> pagerank;
  std::string compressor;
};

/// All measures for one spec; `reference`, when given, adds the NCD between
/// the two canonical texts.
inline ComplexityReport complexity_report(const GraphSpec& spec, const GraphSpec* reference = nullptr) {
  const std::string text = canonical_serialize(spec);
  ComplexityReport r;
  r.description_bits = description_bits(spec);
  r.compressed_bits = compressed_bits(text);
  r.node_count = static_cast<std::int64_t>(node_count(spec));
  if (reference) r.ncd_to_reference = ncd(text, canonical_serialize(*reference));
  r.pagerank = pagerank(spec);
  r.compressor = Compressor::identity();
  return r;
}

}  // namespace forge
