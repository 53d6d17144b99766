#include "eurnet_verify/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numbers>
#include <numeric>

namespace eurnet::verify {

RelGraph random_graph(std::mt19937_64& rng, std::size_t nodes, std::size_t relations, double p,
                      bool allow_self_loops) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> edges;
  for (std::size_t r = 0; r < relations; ++r)
    for (std::size_t u = 0; u < nodes; ++u)
      for (std::size_t v = 0; v < nodes; ++v) {
        if (u == v && !allow_self_loops) continue;
        if (coin(rng)) {
          edges.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v),
                           static_cast<std::uint32_t>(r)});
        }
      }
  return RelGraph::from_edges(nodes, relations, edges);
}

RelGraph regular_graph(std::size_t nodes, std::size_t relations, std::size_t degree) {
  std::vector<Edge> edges;
  for (std::size_t r = 0; r < relations; ++r)
    for (std::size_t v = 0; v < nodes; ++v)
      for (std::size_t j = 1; j <= degree; ++j) {
        edges.push_back({static_cast<std::uint32_t>((v + j) % nodes), static_cast<std::uint32_t>(v),
                         static_cast<std::uint32_t>(r)});
      }
  return RelGraph::from_edges(nodes, relations, edges);
}

std::vector<double> dense_rel_aggregate(const RelGraph& graph, const Tensor<double>& z) {
  const std::size_t n = graph.num_nodes(), nrel = graph.num_relations(), c = z.cols();
  const auto edges = graph.edges();
  std::vector<double> neighborhood(n * nrel, 0.0);
  for (const Edge& e : edges) neighborhood[e.dst * nrel + e.rel] += 1.0;
  std::vector<double> adjacency(n * n * nrel, 0.0);
  for (const Edge& e : edges) {
    adjacency[e.src * (n * nrel) + e.dst * nrel + e.rel] = 1.0 / neighborhood[e.dst * nrel + e.rel];
  }
  std::vector<double> out(n * nrel * c, 0.0);
  for (std::size_t col = 0; col < n * nrel; ++col)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) out[col * c + ch] += adjacency[i * (n * nrel) + col] * z.at(i, ch);
  return out;
}

std::set<Edge> brute_force_line_edges(const RelGraph& graph, const Tensor<double>& coords,
                                      std::size_t num_bins, bool include_reverse) {
  const auto edges = graph.edges();
  std::set<Edge> out;
  for (std::size_t i = 0; i < edges.size(); ++i)
    for (std::size_t j = 0; j < edges.size(); ++j) {
      if (i == j || edges[i].dst != edges[j].src) continue;
      const bool reverse = edges[j].dst == edges[i].src && edges[j].src != edges[j].dst;
      if (reverse && !include_reverse) continue;
      double u[3], w[3];
      for (int k = 0; k < 3; ++k) {
        u[k] = coords.at(edges[i].dst, k) - coords.at(edges[i].src, k);
        w[k] = coords.at(edges[j].dst, k) - coords.at(edges[j].src, k);
      }
      const double nu = std::hypot(u[0], u[1], u[2]);
      const double nw = std::hypot(w[0], w[1], w[2]);
      std::size_t bin = 0;
      if (nu > 0 && nw > 0) {
        double cosine = (u[0] * w[0] + u[1] * w[1] + u[2] * w[2]) / (nu * nw);
        cosine = std::max(-1.0, std::min(1.0, cosine));
        const double theta = std::acos(cosine);
        bin = std::min(num_bins - 1, static_cast<std::size_t>(theta * num_bins / std::numbers::pi));
      }
      out.insert({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(bin)});
    }
  return out;
}

}  // namespace eurnet::verify

namespace eurnet::verify {

std::set<Edge> brute_force_image_medium(const PatchGrid<double>& grid, std::size_t k, std::uint32_t rel) {
  const std::size_t n = grid.height * grid.width, c = grid.features.cols();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = grid.features.at(i, ch) - grid.features.at(j, ch);
        s += d * d;
      }
      dist[i * n + j] = std::sqrt(s);
    }
  std::set<Edge> out;
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<std::size_t> order;
    for (std::size_t u = 0; u < n; ++u) {
      const bool same_window = (u / grid.width) / 2 == (v / grid.width) / 2 &&
                               (u % grid.width) / 2 == (v % grid.width) / 2;
      if (!same_window) order.push_back(u);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[v * n + a] < dist[v * n + b]; });
    for (std::size_t i = 0; i < std::min(k, order.size()); ++i) {
      out.insert({static_cast<std::uint32_t>(order[i]), static_cast<std::uint32_t>(v), rel});
    }
  }
  return out;
}

namespace {

std::vector<double> distance_matrix(const ProteinChain& chain) {
  const std::size_t n = chain.length();
  std::vector<double> dist(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        const double d = chain.coords.at(i, k) - chain.coords.at(j, k);
        s += d * d;
      }
      dist[i * n + j] = std::sqrt(s);
    }
  return dist;
}

}  // namespace

std::set<Edge> brute_force_protein_medium(const ProteinChain& chain, const ProteinGraphOptions& options,
                                          std::uint32_t first_rel, std::uint32_t second_rel) {
  const std::size_t n = chain.length();
  const auto dist = distance_matrix(chain);
  std::set<Edge> out;
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<std::size_t> remaining;
    for (std::size_t u = 0; u < n; ++u) {
      const std::size_t sep = u > v ? u - v : v - u;
      if (u == v || sep <= options.medium_min_separation || dist[v * n + u] <= options.medium_min_distance) continue;
      remaining.push_back(u);
    }
    std::stable_sort(remaining.begin(), remaining.end(),
                     [&](std::size_t a, std::size_t b) { return dist[v * n + a] < dist[v * n + b]; });
    for (std::size_t rank = 0; rank < remaining.size() && rank < options.medium_first + options.medium_second; ++rank) {
      out.insert({static_cast<std::uint32_t>(remaining[rank]), static_cast<std::uint32_t>(v),
                  rank < options.medium_first ? first_rel : second_rel});
    }
  }
  return out;
}

ProteinChain random_chain(std::mt19937_64& rng, std::size_t length) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> residue(0, 19);
  ProteinChain chain;
  std::vector<double> coords;
  double pos[3] = {0, 0, 0}, dir[3] = {1, 0, 0};
  for (std::size_t i = 0; i < length; ++i) {
    chain.sequence.push_back(kAminoAcids[residue(rng)]);
    coords.insert(coords.end(), pos, pos + 3);
    double step[3];
    double norm = 0.0;
    for (int k = 0; k < 3; ++k) {
      step[k] = 0.6 * dir[k] + normal(rng);
      norm += step[k] * step[k];
    }
    norm = std::sqrt(norm);
    for (int k = 0; k < 3; ++k) {
      dir[k] = step[k] / norm;
      pos[k] += 3.8 * dir[k];
    }
  }
  chain.coords = Tensor<double>::from({length, 3}, std::move(coords));
  return chain;
}

Tensor<double> random_e3_transform(std::mt19937_64& rng, const Tensor<double>& coords, bool reflect) {
  std::normal_distribution<double> normal(0.0, 1.0);
  // Random rotation from a normalized quaternion.
  double q[4];
  double qn = 0.0;
  for (auto& v : q) {
    v = normal(rng);
    qn += v * v;
  }
  qn = std::sqrt(qn);
  for (auto& v : q) v /= qn;
  const double a = q[0], b = q[1], c = q[2], d = q[3];
  double rot[3][3] = {
      {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
      {2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)},
      {2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d},
  };
  if (reflect) {
    for (auto& row : rot) row[0] = -row[0];
  }
  double shift[3];
  for (auto& s : shift) s = 50.0 * normal(rng);
  const std::size_t n = coords.rows();
  std::vector<double> out(n * 3);
  for (std::size_t i = 0; i < n; ++i)
    for (int r = 0; r < 3; ++r) {
      double s = shift[r];
      for (int k = 0; k < 3; ++k) s += rot[r][k] * coords.at(i, k);
      out[i * 3 + r] = s;
    }
  return Tensor<double>::from({n, 3}, std::move(out));
}

double protein_threshold_margin(const ProteinChain& chain, const ProteinGraphOptions& options) {
  const std::size_t n = chain.length();
  const auto dist = distance_matrix(chain);
  double margin = INFINITY;
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<double> candidates;
    for (std::size_t u = 0; u < n; ++u) {
      if (u == v) continue;
      const double d = dist[v * n + u];
      margin = std::min({margin, std::abs(d - options.radius), std::abs(d - options.medium_min_distance)});
      const std::size_t sep = u > v ? u - v : v - u;
      if (sep > options.medium_min_separation && d > options.medium_min_distance) candidates.push_back(d);
    }
    std::sort(candidates.begin(), candidates.end());
    const std::size_t limit = std::min(candidates.size(), options.medium_first + options.medium_second + 1);
    for (std::size_t i = 1; i < limit; ++i) margin = std::min(margin, candidates[i] - candidates[i - 1]);
  }
  return margin;
}

namespace {

// Row vector times matrix, in double.
template <typename T>
std::vector<double> vec_mat(const std::vector<double>& x, const Tensor<T>& w) {
  std::vector<double> y(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) y[j] += x[i] * static_cast<double>(w.at(i, j));
  return y;
}

template <typename T>
std::vector<double> row_of(const Tensor<T>& z, std::size_t v) {
  std::vector<double> r(z.cols());
  for (std::size_t j = 0; j < z.cols(); ++j) r[j] = static_cast<double>(z.at(v, j));
  return r;
}

template <typename T>
void add_bias_to(std::vector<double>& x, const Tensor<T>& b) {
  if (!b.defined()) return;
  for (std::size_t j = 0; j < x.size(); ++j) x[j] += static_cast<double>(b.values()[j]);
}

// Incoming neighbor lists per (node, relation), straight from the edge list.
std::vector<std::vector<std::vector<std::size_t>>> in_lists(const RelGraph& g) {
  std::vector<std::vector<std::vector<std::size_t>>> lists(
      g.num_nodes(), std::vector<std::vector<std::size_t>>(g.num_relations()));
  for (const Edge& e : g.edges()) lists[e.dst][e.rel].push_back(e.src);
  return lists;
}

}  // namespace

template <typename T>
std::vector<double> rgconv_loop_oracle(const RelGraph& graph, const Tensor<T>& z, const RGConvParams<T>& p) {
  const std::size_t n = graph.num_nodes(), in = p.in_dim(), out = p.out_dim();
  auto lists = in_lists(graph);
  std::vector<double> result;
  for (std::size_t v = 0; v < n; ++v) {
    auto acc = vec_mat(row_of(z, v), p.w_self);
    add_bias_to(acc, p.b_self);
    add_bias_to(acc, p.b_aggr);
    for (std::size_t r = 0; r < graph.num_relations(); ++r) {
      const auto& nb = lists[v][r];
      for (std::size_t u : nb) {
        auto zu = row_of(z, u);
        for (std::size_t i = 0; i < in; ++i)
          for (std::size_t j = 0; j < out; ++j)
            acc[j] += zu[i] * static_cast<double>(p.w_rel.at(r * in + i, j)) / static_cast<double>(nb.size());
      }
    }
    result.insert(result.end(), acc.begin(), acc.end());
  }
  return result;
}

template <typename T>
std::vector<double> grmp_loop_oracle(const RelGraph& graph, const Tensor<T>& z, const GRMPParams<T>& p,
                                     const GRMPVariant& variant) {
  const std::size_t n = graph.num_nodes(), R = graph.num_relations();
  const std::size_t msg = variant.use_w_in ? p.w_in.out_dim() : p.in_dim();
  auto lists = in_lists(graph);
  std::vector<double> result;
  for (std::size_t v = 0; v < n; ++v) {
    const auto zv = row_of(z, v);
    std::vector<double> alpha(R, 1.0 / static_cast<double>(R));
    if (variant.alpha == AlphaMode::kLearned) {
      alpha = vec_mat(zv, p.w_alpha.weight);
      add_bias_to(alpha, p.w_alpha.bias);
    }
    std::vector<double> mixed(msg, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
      const auto& nb = lists[v][r];
      for (std::size_t u : nb) {
        auto h = row_of(z, u);
        if (variant.use_w_in) {
          h = vec_mat(h, p.w_in.weight);
          add_bias_to(h, p.w_in.bias);
        }
        for (std::size_t j = 0; j < msg; ++j) {
          const double w = static_cast<double>(p.w_rel.values()[r * msg + j]);
          mixed[j] += alpha[r] * w * h[j] / static_cast<double>(nb.size());
        }
      }
    }
    auto aggr = mixed;
    if (variant.use_w_out) {
      aggr = vec_mat(mixed, p.w_out.weight);
      add_bias_to(aggr, p.w_out.bias);
    }
    auto self = vec_mat(zv, p.w_self);
    for (std::size_t j = 0; j < self.size(); ++j)
      result.push_back(variant.gating == GatingMode::kGate ? self[j] * aggr[j] : self[j] + aggr[j]);
  }
  return result;
}

template std::vector<double> rgconv_loop_oracle(const RelGraph&, const Tensor<float>&, const RGConvParams<float>&);
template std::vector<double> rgconv_loop_oracle(const RelGraph&, const Tensor<double>&, const RGConvParams<double>&);
template std::vector<double> grmp_loop_oracle(const RelGraph&, const Tensor<float>&, const GRMPParams<float>&,
                                              const GRMPVariant&);
template std::vector<double> grmp_loop_oracle(const RelGraph&, const Tensor<double>&, const GRMPParams<double>&,
                                              const GRMPVariant&);

double fmax_oracle(const std::vector<std::vector<double>>& scores, const std::vector<std::vector<int>>& labels,
                   const std::vector<double>& thresholds) {
  double best = 0.0;
  for (double t : thresholds) {
    std::vector<double> precisions, recalls;
    for (std::size_t p = 0; p < scores.size(); ++p) {
      std::set<std::size_t> predicted, truth;
      for (std::size_t j = 0; j < scores[p].size(); ++j) {
        if (scores[p][j] >= t) predicted.insert(j);
        if (labels[p][j] == 1) truth.insert(j);
      }
      std::vector<std::size_t> common;
      std::set_intersection(predicted.begin(), predicted.end(), truth.begin(), truth.end(),
                            std::back_inserter(common));
      if (!predicted.empty()) precisions.push_back(double(common.size()) / double(predicted.size()));
      if (!truth.empty()) recalls.push_back(double(common.size()) / double(truth.size()));
    }
    auto avg = [](const std::vector<double>& v) {
      return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    };
    const double pr = avg(precisions), rc = avg(recalls);
    if (pr + rc > 0) best = std::max(best, 2 * pr * rc / (pr + rc));
  }
  return best;
}

std::vector<double> fmax_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 99; ++i) grid.push_back(std::stod("0." + std::string(i < 10 ? "0" : "") + std::to_string(i)));
  return grid;
}

std::vector<double> distinct_thresholds(const std::vector<std::vector<double>>& scores) {
  std::set<double> values;
  for (const auto& row : scores) values.insert(row.begin(), row.end());
  values.erase(0.0);
  return {values.begin(), values.end()};
}

}  // namespace eurnet::verify
