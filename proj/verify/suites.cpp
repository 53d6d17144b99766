#include "eurnet_verify/suites.hpp"

#include <chrono>
#include <set>
#include <sstream>
#include <stdexcept>

#include "eurnet/models.hpp"
#include "eurnet/ops.hpp"
#include "eurnet_verify/gradcheck.hpp"
#include "eurnet_verify/oracles.hpp"

namespace eurnet::verify {

bool SuiteResult::passed() const { return failures() == 0 && !checks.empty(); }

std::size_t SuiteResult::failures() const {
  std::size_t n = 0;
  for (const auto& c : checks) n += !c.passed;
  return n;
}

namespace {

// Full model, the four ablations and two combinations of them.
const GRMPVariant kVariants[] = {
    {},
    {GatingMode::kAdd, AlphaMode::kLearned, true, true},
    {GatingMode::kGate, AlphaMode::kUniform, true, true},
    {GatingMode::kGate, AlphaMode::kLearned, false, true},
    {GatingMode::kGate, AlphaMode::kLearned, true, false},
    {GatingMode::kAdd, AlphaMode::kUniform, false, false},
};

std::string variant_name(const GRMPVariant& v) {
  std::ostringstream os;
  os << (v.gating == GatingMode::kGate ? "gate" : "add") << '/' << (v.alpha == AlphaMode::kLearned ? "alpha" : "uniform")
     << (v.use_w_in ? "/w_in" : "") << (v.use_w_out ? "/w_out" : "");
  return os.str();
}

template <typename P>
ParamList<typename decltype(P::w_self)::value_type> params_of(const P& p) {
  ParamList<typename decltype(P::w_self)::value_type> out;
  p.collect("", out);
  return out;
}

CheckResult bound(std::string name, double value, double limit, std::string detail = {}) {
  return {std::move(name), value <= limit, value, limit, std::move(detail)};
}

CheckResult exact(std::string name, std::uint64_t got, std::uint64_t want) {
  const double diff = got > want ? static_cast<double>(got - want) : static_cast<double>(want - got);
  return {std::move(name), got == want, diff, 0, "measured " + std::to_string(got) + ", formula " + std::to_string(want)};
}

template <typename F>
SuiteResult timed(const std::string& name, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  SuiteResult result{name, {}, 0};
  body(result.checks);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"gradcheck", "flops-exact", "e3", "oracles"};
  return names;
}

SuiteResult run_suite(const std::string& name, const SuiteOptions& options) {
  if (name == "gradcheck") return gradcheck_suite(options);
  if (name == "flops-exact") return flops_exact_suite(options);
  if (name == "e3") return e3_suite(options);
  if (name == "oracles") return oracle_suite(options);
  throw std::invalid_argument("unknown suite " + name);
}

SuiteResult gradcheck_suite(const SuiteOptions& options) {
  return timed("gradcheck", [&](std::vector<CheckResult>& checks) {
    for (std::uint64_t s = 0; s < options.gradcheck_seeds; ++s) {
      const std::uint64_t seed = options.seed + s;
      std::mt19937_64 rng(1000 + seed);
      auto g = random_graph(rng, 5, 2, 0.4, true);
      auto z = random_tensor<double>(rng, {5, 3}, 1.0, true);
      auto weights = random_tensor<double>(rng, {5, 4});

      auto conv = RGConvParams<double>::init(rng, 3, 4, 2);
      auto conv_params = params_of(conv);
      randomize(conv_params, rng);
      std::vector<Tensor<double>> inputs{z};
      for (auto& [name, t] : conv_params) inputs.push_back(t);
      auto r = gradcheck([&] { return sum(hadamard(rgconv_forward(g, z, conv), weights)); }, inputs);
      checks.push_back(bound("rgconv/seed" + std::to_string(seed), r.max_rel_error, 1e-5,
                             std::to_string(r.checked) + " entries"));

      for (const auto& variant : kVariants) {
        const std::size_t out = (!variant.use_w_in && !variant.use_w_out) ? 3 : 4;
        auto grmp = GRMPParams<double>::init(rng, 3, out, 2, variant);
        auto grmp_params = params_of(grmp);
        randomize(grmp_params, rng);
        std::vector<Tensor<double>> gin{z};
        for (auto& [name, t] : grmp_params) gin.push_back(t);
        auto w = slice_cols(weights, 0, out);
        auto rg = gradcheck([&] { return sum(hadamard(grmp_forward(g, z, grmp, variant), w)); }, gin);
        checks.push_back(bound("grmp/" + variant_name(variant) + "/seed" + std::to_string(seed), rg.max_rel_error,
                               1e-5, std::to_string(rg.checked) + " entries"));
      }
    }
  });
}

SuiteResult flops_exact_suite(const SuiteOptions& options) {
  return timed("flops-exact", [&](std::vector<CheckResult>& checks) {
    for (std::size_t r : {1, 2, 4, 7, 9})
      for (std::size_t d : {1, 2, 4})
        for (std::size_t n : {8, 64})
          for (std::size_t c : {4, 16, 64}) {
            std::mt19937_64 rng(options.seed + r * 1000 + d * 100 + n + c);
            auto g = regular_graph(n, r, d);
            auto z = random_tensor<float>(rng, {n, c});
            auto conv = RGConvParams<float>::init(rng, c, c, r);
            auto grmp = GRMPParams<float>::init(rng, c, c, r);
            OpCounter conv_count({op_kind::kBiasAdd}), grmp_count({op_kind::kBiasAdd});
            {
              NoGradGuard no_grad;
              CounterScope scope(conv_count);
              rgconv_forward(g, z, conv);
            }
            {
              NoGradGuard no_grad;
              CounterScope scope(grmp_count);
              grmp_forward(g, z, grmp);
            }
            const CostParams p{r, static_cast<double>(d), n, c};
            const std::string at = "/R" + std::to_string(r) + "_d" + std::to_string(d) + "_V" + std::to_string(n) +
                                   "_C" + std::to_string(c);
            checks.push_back(exact("rgconv/total" + at, conv_count.total(), rgconv_flops(p)));
            checks.push_back(exact("grmp/total" + at, grmp_count.total(), grmp_flops(p, options.formula)));
            const auto conv_steps = rgconv_breakdown(p).steps;
            for (std::size_t i = 0; i < conv_steps.size(); ++i) {
              checks.push_back(exact("rgconv/step" + std::to_string(i + 1) + at, conv_count.step(kRgconvSteps[i]),
                                     conv_steps[i]));
            }
            const auto grmp_steps = grmp_breakdown(p, options.formula).steps;
            for (std::size_t i = 0; i < grmp_steps.size(); ++i) {
              checks.push_back(exact("grmp/step" + std::to_string(i + 1) + at, grmp_count.step(kGrmpSteps[i]),
                                     grmp_steps[i]));
            }
          }
  });
}

SuiteResult e3_suite(const SuiteOptions& options) {
  return timed("e3", [&](std::vector<CheckResult>& checks) {
    std::mt19937_64 rng(options.seed + 77);
    const ProteinGraphOptions graph_options;
    auto chain = random_chain(rng, options.e3_residues);
    std::size_t draws = 1;
    while (protein_threshold_margin(chain, graph_options) < 1e-3) {
      chain = random_chain(rng, options.e3_residues);
      ++draws;
    }
    ProteinEncoderConfig cfg;
    cfg.hidden = 64;
    cfg.head_hidden = 64;
    cfg.graph = graph_options;
    const auto model = ProteinModel<float>::init(cfg, options.seed);
    const auto base_graph = protein_edges(chain, graph_options);
    const auto base_rep = to_double(protein_forward(chain, model).representation);

    std::size_t graph_mismatches = 0;
    double worst = 0;
    for (std::size_t i = 0; i < options.e3_transforms; ++i) {
      ProteinChain moved{chain.sequence, random_e3_transform(rng, chain.coords, i % 2 == 1)};
      if (!(protein_edges(moved, graph_options).graph == base_graph.graph)) ++graph_mismatches;
      worst = std::max(worst, max_rel_diff(to_double(protein_forward(moved, model).representation), base_rep, 1e-12));
    }
    const std::string detail = std::to_string(options.e3_transforms) + " transforms of a " +
                               std::to_string(options.e3_residues) + "-residue chain (draw " + std::to_string(draws) +
                               ")";
    checks.push_back({"graph-edges-identical", graph_mismatches == 0 && options.e3_transforms > 0,
                      static_cast<double>(graph_mismatches), 0, detail});
    checks.push_back(bound("representation-rel-diff", worst, 1e-5, detail));
  });
}

SuiteResult oracle_suite(const SuiteOptions& options) {
  return timed("oracles", [&](std::vector<CheckResult>& checks) {
    const std::uint64_t s0 = options.seed;
    double worst = 0;
    for (std::uint64_t seed = s0; seed < s0 + 20; ++seed) {
      std::mt19937_64 rng(seed);
      const std::size_t n = 2 + seed % 15;
      auto g = random_graph(rng, n, 1 + seed % 4, 0.3);
      auto z = random_tensor<double>(rng, {n, 5});
      worst = std::max(worst, max_abs_diff(rel_aggregate(g, z).values(), dense_rel_aggregate(g, z)));
    }
    checks.push_back(bound("rel_aggregate-vs-dense", worst, 1e-12, "20 graphs, 2..16 nodes"));

    worst = 0;
    for (std::uint64_t seed = s0; seed < s0 + 10; ++seed) {
      std::mt19937_64 rng(seed);
      auto g = random_graph(rng, 6, 2, 0.35, true);
      auto p = RGConvParams<float>::init(rng, 4, 5, 2);
      randomize(params_of(p), rng, 0.5);
      auto z = random_tensor<float>(rng, {6, 4});
      worst = std::max(worst, max_abs_diff(to_double(rgconv_forward(g, z, p)), rgconv_loop_oracle(g, z, p)));
    }
    checks.push_back(bound("rgconv-vs-loop", worst, 1e-6, "32-bit, 10 seeds"));

    worst = 0;
    for (const auto& variant : kVariants) {
      for (std::uint64_t seed = s0; seed < s0 + 6; ++seed) {
        std::mt19937_64 rng(seed);
        auto g = random_graph(rng, 6, 3, 0.3, true);
        const std::size_t in = 4, out = (!variant.use_w_in && !variant.use_w_out) ? in : 5;
        auto p = GRMPParams<float>::init(rng, in, out, 3, variant);
        randomize(params_of(p), rng, 0.5);
        auto z = random_tensor<float>(rng, {6, in});
        worst = std::max(worst, max_abs_diff(to_double(grmp_forward(g, z, p, variant)),
                                             grmp_loop_oracle(g, z, p, variant)));
      }
    }
    checks.push_back(bound("grmp-vs-loop", worst, 1e-6, "32-bit, 6 variants × 6 seeds"));

    std::size_t mismatches = 0;
    for (std::uint64_t seed = s0; seed < s0 + 10; ++seed) {
      std::mt19937_64 rng(seed);
      const std::size_t h = 3 + seed % 3, w = 4 + seed % 2, k = 1 + seed % 5;
      PatchGrid<double> grid{h, w, random_tensor<double>(rng, {h * w, 4})};
      auto edges = image_medium_edges(grid, k, 0);
      mismatches += std::set<Edge>(edges.begin(), edges.end()) != brute_force_image_medium(grid, k, 0);
    }
    checks.push_back({"image-medium-vs-brute-force", mismatches == 0, static_cast<double>(mismatches), 0, "10 grids"});

    mismatches = 0;
    for (std::uint64_t seed = s0; seed < s0 + 5; ++seed) {
      std::mt19937_64 rng(seed);
      auto chain = random_chain(rng, 40);
      ProteinGraphOptions po;
      auto pg = protein_edges(chain, po);
      const auto a = pg.registry.id("medium.rank_first"), b = pg.registry.id("medium.rank_second");
      std::set<Edge> got;
      for (const Edge& e : pg.graph.edges())
        if (e.rel == a || e.rel == b) got.insert(e);
      mismatches += got != brute_force_protein_medium(chain, po, a, b);
    }
    checks.push_back(
        {"protein-medium-vs-brute-force", mismatches == 0, static_cast<double>(mismatches), 0, "5 chains of 40"});

    mismatches = 0;
    for (std::uint64_t seed = s0; seed < s0 + 10; ++seed) {
      std::mt19937_64 rng(100 + seed);
      auto g = random_graph(rng, 6, 2, 0.35, true);
      auto coords = random_tensor<double>(rng, {6, 3}, 5.0);
      auto line = build_line_graph(g, coords);
      auto got = line.edges();
      mismatches += std::set<Edge>(got.begin(), got.end()) != brute_force_line_edges(g, coords, 8, true);
    }
    checks.push_back({"line-graph-vs-brute-force", mismatches == 0, static_cast<double>(mismatches), 0, "10 graphs"});
  });
}

}  // namespace eurnet::verify
