#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "eurnet/checkpoint.hpp"
#include "eurnet/costmodel.hpp"
#include "eurnet/training.hpp"
#include "eurnet_verify/suites.hpp"
#include "json.hpp"

namespace eurnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::uint64_t seed = 0;
  int threads = 1;
  bool f64 = false;

  // build-graph
  std::string domain;
  std::string input;
  std::size_t k = 12;

  // bench-flops
  std::uint64_t k_min = 1, k_max = 24;
  double degree = 1;

  // verify
  std::string suite = "all";
  bool fault_inject = false;
  std::size_t e3_transforms = 100;

  // train-kg / eval / gen-toy-kg
  std::string data;
  bool toy = false;
  std::size_t people = 100;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 5e-3;
  double clip = 0;
  bool cosine = true;
  std::size_t layers = 6;
  std::size_t channels = 32;
  std::size_t negatives = 32;
  std::string checkpoint;
  std::string split = "test";

  // fmax
  std::string scores, labels;

  std::string out;
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  return f;
}

/// Writes to --out when given, else to stdout.
template <typename F>
void emit(const Options& o, std::ostream& out, F&& write) {
  if (o.out.empty()) {
    write(out);
  } else {
    auto f = open_out(o.out);
    write(f);
  }
}

KnowledgeGraph load_kg(const fs::path& path) {
  if (fs::is_directory(path)) {
    for (const char* name : {"train.txt", "valid.txt", "test.txt"}) {
      if (!fs::exists(path / name)) throw DataError("missing " + (path / name).string());
    }
    return load_triplets(path / "train.txt", path / "valid.txt", path / "test.txt");
  }
  std::ifstream train(path);
  if (!train) throw DataError("cannot open " + path.string());
  std::istringstream none;
  std::istringstream none2;
  return load_triplets(train, none, none2);
}

json registry_json(const RelationRegistry& reg) {
  json rels = json::array();
  for (std::size_t i = 0; i < reg.entries().size(); ++i) {
    const auto& e = reg.entries()[i];
    rels.push_back({{"id", i}, {"name", e.name}, {"group", std::string(to_string(e.group))}});
  }
  return rels;
}

void write_graph(const fs::path& dir, std::span<const Edge> edges, const json& registry) {
  fs::create_directories(dir);
  auto edge_file = open_out(dir / "edges.tsv");
  write_edge_list(edge_file, edges);
  auto reg_file = open_out(dir / "registry.json");
  reg_file << registry.dump(2) << '\n';
}

int cmd_build_graph(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw ConfigError("build-graph needs --out");
  std::vector<Edge> edges;
  json reg;
  if (o.domain == "image") {
    std::ifstream in(o.input, std::ios::binary);
    if (!in) throw DataError("cannot open " + o.input);
    const auto grid = read_patch_grid(in);
    const auto g = build_image_graph(grid, {o.k, o.k > 0});
    const auto long_ids = g.registry.ids(RangeGroup::kLong);
    for (const Edge& e : g.graph.edges()) {
      if (std::find(long_ids.begin(), long_ids.end(), e.rel) == long_ids.end()) edges.push_back(e);
    }
    const auto& s = g.long_spec;
    reg = {{"domain", "image"},
           {"height", grid.height},
           {"width", grid.width},
           {"num_nodes", grid.num_patches()},
           {"k", o.k},
           {"relations", registry_json(g.registry)},
           {"long_edges",
            {{"materialized", false},
             {"global_node", s.global_node()},
             {"global_edges", s.global_edges},
             {"context_nodes", s.context_nodes},
             {"context_edges", s.context_edges},
             {"context_node_offset", s.context_node(0)},
             {"total_nodes", s.total_nodes()}}}};
  } else if (o.domain == "protein") {
    std::ifstream in(o.input);
    if (!in) throw DataError("cannot open " + o.input);
    const auto chain = read_protein_chain(in);
    const auto g = protein_edges(chain);
    edges = g.graph.edges();
    reg = {{"domain", "protein"},
           {"num_residues", g.num_residues},
           {"num_nodes", g.graph.num_nodes()},
           {"virtual_node", g.virtual_node()},
           {"relations", registry_json(g.registry)}};
  } else if (o.domain == "kg") {
    const auto kg = load_kg(o.input);
    edges = kg.fact_graph.edges();
    json rels = json::array();
    for (std::size_t r = 0; r < kg.num_relations(); ++r) {
      const auto& base = kg.relation_names[r % kg.base_relations()];
      rels.push_back({{"id", r}, {"name", r < kg.base_relations() ? base : base + "^-1"}});
    }
    reg = {{"domain", "kg"},
           {"num_nodes", kg.num_entities()},
           {"entities", kg.entity_names},
           {"relations", rels},
           {"triplets", {{"train", kg.train.triplets.size()},
                         {"valid", kg.valid.triplets.size()},
                         {"test", kg.test.triplets.size()}}}};
  } else {
    throw ConfigError("unknown domain " + o.domain);
  }
  reg["num_edges"] = edges.size();
  write_graph(o.out, edges, reg);
  out << "wrote " << edges.size() << " edges to " << (fs::path(o.out) / "edges.tsv").string() << '\n';
  return kOk;
}

int cmd_bench_flops(const Options& o, std::ostream& out) {
  auto cfg = eurnet_t_sweep_config();
  cfg.degree_per_relation = o.degree;
  const GrmpFormula formula{o.fault_inject ? 8u : 7u};
  const auto rows = sweep_knn_relations(cfg, o.k_min, o.k_max, formula);
  emit(o, out, [&](std::ostream& s) { write_sweep_csv(s, rows); });
  return kOk;
}

int cmd_verify(const Options& o, std::ostream& out) {
  verify::SuiteOptions so;
  so.seed = o.seed;
  so.e3_transforms = o.e3_transforms;
  if (o.fault_inject) so.formula.per_relation_linear = 8;
  std::vector<std::string> names;
  if (o.suite == "all") {
    names = verify::suite_names();
  } else {
    names = {o.suite};
  }
  json report{{"seed", o.seed}, {"fault_inject", o.fault_inject}, {"suites", json::array()}};
  bool all = true;
  for (const auto& name : names) {
    const auto r = verify::run_suite(name, so);
    json checks = json::array();
    for (const auto& c : r.checks) {
      checks.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"limit", c.limit},
                        {"detail", c.detail}});
    }
    report["suites"].push_back({{"suite", name},
                                {"passed", r.passed()},
                                {"checks_run", r.checks.size()},
                                {"failures", r.failures()},
                                {"seconds", r.seconds},
                                {"checks", checks}});
    all = all && r.passed();
  }
  report["passed"] = all;
  emit(o, out, [&](std::ostream& s) { s << report.dump(2) << '\n'; });
  return all ? kOk : kVerifyFailed;
}

int cmd_gen_toy_kg(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw ConfigError("gen-toy-kg needs --out");
  const auto data = generate_kinship(o.seed, {.num_people = o.people});
  const fs::path dir = o.out;
  fs::create_directories(dir);
  for (auto [name, split] : {std::pair{"train.txt", &data.train}, {"valid.txt", &data.valid}, {"test.txt", &data.test}}) {
    auto f = open_out(dir / name);
    write_triplets(f, *split);
  }
  out << "wrote " << data.train.size() << '/' << data.valid.size() << '/' << data.test.size()
      << " train/valid/test triplets to " << dir.string() << '\n';
  return kOk;
}

KGModelConfig model_config(const Options& o) {
  KGModelConfig m;
  m.num_layers = o.layers;
  m.channels = o.channels;
  m.scorer_hidden = o.channels;
  m.negatives = o.negatives;
  return m;
}

template <typename T>
void train_and_write(const KnowledgeGraph& kg, const Options& o, const std::string& resolved, std::ostream& out) {
  KGTrainConfig cfg;
  cfg.model = model_config(o);
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.lr = o.lr;
  cfg.clip_norm = o.clip;
  cfg.cosine_decay = o.cosine;
  cfg.seed = o.seed;
  const auto result = train_kg<T>(kg, cfg);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "metrics.csv");
    write_metrics_csv(f, result.history);
  }
  {
    auto f = open_out(dir / "config.toml");
    f << resolved;
  }
  const CheckpointMeta meta{{"num_layers", std::to_string(cfg.model.num_layers)},
                            {"channels", std::to_string(cfg.model.channels)},
                            {"scorer_hidden", std::to_string(cfg.model.scorer_hidden)},
                            {"negatives", std::to_string(cfg.model.negatives)},
                            {"num_entities", std::to_string(kg.num_entities())},
                            {"base_relations", std::to_string(kg.base_relations())},
                            {"epochs", std::to_string(cfg.epochs)},
                            {"seed", std::to_string(cfg.seed)}};
  save_checkpoint(dir / "model.ckpt", result.model.parameters(), meta);
  out << "test mrr " << result.test.mrr << " (random " << result.test.random_mrr << "), hits@10 "
      << result.test.hits10 << '\n';
}

int cmd_train_kg(const Options& o, const std::string& resolved, std::ostream& out) {
  if (o.out.empty()) throw ConfigError("train-kg needs --out");
  if (o.toy == !o.data.empty()) throw ConfigError("train-kg needs exactly one of --data or --toy");
  const auto kg = o.toy ? to_knowledge_graph(generate_kinship(o.seed, {.num_people = o.people})) : load_kg(o.data);
  if (o.f64) {
    train_and_write<double>(kg, o, resolved, out);
  } else {
    train_and_write<float>(kg, o, resolved, out);
  }
  return kOk;
}

std::size_t meta_count(const CheckpointMeta& meta, const std::string& key) {
  const auto it = meta.find(key);
  if (it == meta.end()) throw DataError("checkpoint metadata lacks " + key);
  return std::stoull(it->second);
}

template <typename T>
RankingMetrics evaluate_checkpoint(const KnowledgeGraph& kg, const CheckpointMeta& meta, const Options& o) {
  KGModelConfig m;
  m.num_layers = meta_count(meta, "num_layers");
  m.channels = meta_count(meta, "channels");
  m.scorer_hidden = meta_count(meta, "scorer_hidden");
  m.negatives = meta_count(meta, "negatives");
  if (meta_count(meta, "num_entities") != kg.num_entities() ||
      meta_count(meta, "base_relations") != kg.base_relations()) {
    throw DataError("checkpoint was trained on a graph with different vocabularies");
  }
  auto model = KGModel<T>::init(m, kg.num_entities(), kg.base_relations(), 0);
  load_checkpoint(o.checkpoint, model.parameters());
  const TripletStore* split = o.split == "test" ? &kg.test : o.split == "valid" ? &kg.valid : &kg.train;
  return evaluate_kg(model, kg, *split);
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto kg = load_kg(o.data);
  const auto info = read_checkpoint_info(o.checkpoint);
  const bool wide = o.f64 || info.dtype == "f64";
  const auto metrics = wide ? evaluate_checkpoint<double>(kg, info.meta, o) : evaluate_checkpoint<float>(kg, info.meta, o);
  std::vector<MetricRow> rows;
  const auto epoch = info.meta.contains("epochs") ? meta_count(info.meta, "epochs") : 0;
  append_ranking_rows(rows, epoch, o.split, metrics);
  emit(o, out, [&](std::ostream& s) { write_metrics_csv(s, rows); });
  return kOk;
}

int cmd_fmax(const Options& o, std::ostream& out) {
  std::ifstream sf(o.scores), lf(o.labels);
  if (!sf) throw DataError("cannot open " + o.scores);
  if (!lf) throw DataError("cannot open " + o.labels);
  const auto scores = read_score_table(sf);
  const auto labels = align_score_table(read_score_table(lf), scores);
  const double value = fmax(scores.values, labels.values, scores.tasks.size());
  json result{{"fmax", value}, {"proteins", scores.proteins.size()}, {"tasks", scores.tasks.size()}};
  emit(o, out, [&](std::ostream& s) { s << result.dump(2) << '\n'; });
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"EurNet graph models: graph building, FLOPs sweeps, verification and KG training", "eurnet"};
  app.set_config("--config", "", "TOML file of option defaults; [command] sections apply to that command");
  app.option_defaults()->always_capture_default();
  app.add_option("--seed", o.seed, "Random seed");
  app.add_option("--threads", o.threads, "Worker cap (all kernels run on one thread)")->check(CLI::PositiveNumber);
  app.add_flag("--f64", o.f64, "Compute in 64-bit");
  app.require_subcommand(1);
  app.fallthrough();

  auto* build = app.add_subcommand("build-graph", "Write an edge list and relation registry");
  build->add_option("--domain", o.domain, "image, protein or kg")
      ->required()
      ->check(CLI::IsMember({"image", "protein", "kg"}));
  build->add_option("--input", o.input, "Patch grid, chain file, or KG directory/file")->required();
  build->add_option("--k", o.k, "Medium-range neighbors for images (0: none)");
  build->add_option("--out", o.out, "Output directory");

  auto* bench = app.add_subcommand("bench-flops", "FLOPs of RGConv and GRMP models for K kNN relations");
  bench->add_option("--k-min", o.k_min)->check(CLI::PositiveNumber);
  bench->add_option("--k-max", o.k_max)->check(CLI::PositiveNumber);
  bench->add_option("--degree", o.degree, "In-edges per node per relation");
  bench->add_flag("--fault-inject", o.fault_inject, "Use a wrong GRMP constant (test hook)");
  bench->add_option("--out", o.out, "CSV path (default stdout)");

  auto* ver = app.add_subcommand("verify", "Run verification suites and print a JSON report");
  std::vector<std::string> suites{"all"};
  for (const auto& n : verify::suite_names()) suites.push_back(n);
  ver->add_option("--suite", o.suite)->check(CLI::IsMember(suites));
  ver->add_flag("--fault-inject", o.fault_inject, "Perturb the GRMP cost formula (must fail flops-exact)");
  ver->add_option("--e3-transforms", o.e3_transforms);
  ver->add_option("--out", o.out, "Report path (default stdout)");

  auto* train = app.add_subcommand("train-kg", "Train the KG scorer; writes metrics.csv, model.ckpt, config.toml");
  train->add_option("--data", o.data, "Directory with train.txt, valid.txt, test.txt");
  train->add_flag("--toy", o.toy, "Use the generated kinship graph");
  train->add_option("--people", o.people, "People in the toy graph");
  train->add_option("--epochs", o.epochs);
  train->add_option("--batch-size", o.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--lr", o.lr);
  train->add_option("--clip", o.clip, "Global gradient norm bound (0: off)");
  train->add_option("--cosine", o.cosine, "Cosine learning-rate decay");
  train->add_option("--layers", o.layers);
  train->add_option("--channels", o.channels);
  train->add_option("--negatives", o.negatives);
  train->add_option("--out", o.out, "Output directory");

  auto* ev = app.add_subcommand("eval", "Filtered ranking metrics of a checkpoint");
  ev->add_option("--data", o.data)->required();
  ev->add_option("--checkpoint", o.checkpoint)->required();
  ev->add_option("--split", o.split)->check(CLI::IsMember({"train", "valid", "test"}));
  ev->add_option("--out", o.out, "CSV path (default stdout)");

  auto* fm = app.add_subcommand("fmax", "Protein-centric Fmax of a score table against labels");
  fm->add_option("--scores", o.scores, "protein_id,task_id,score CSV")->required();
  fm->add_option("--labels", o.labels, "protein_id,task_id,label CSV (0/1)")->required();
  fm->add_option("--out", o.out, "JSON path (default stdout)");

  auto* gen = app.add_subcommand("gen-toy-kg", "Write the seeded kinship graph as TSV splits");
  gen->add_option("--people", o.people);
  gen->add_option("--out", o.out, "Output directory");

  for (auto* sub : app.get_subcommands({})) sub->configurable();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*build) return cmd_build_graph(o, out);
    if (*bench) return cmd_bench_flops(o, out);
    if (*ver) return cmd_verify(o, out);
    if (*train) {
      const std::string resolved = "seed=" + std::to_string(o.seed) + "\nthreads=" + std::to_string(o.threads) +
                                   "\nf64=" + (o.f64 ? "true" : "false") + "\n[train-kg]\n" +
                                   train->config_to_str(true, false);
      return cmd_train_kg(o, resolved, out);
    }
    if (*ev) return cmd_eval(o, out);
    if (*fm) return cmd_fmax(o, out);
    if (*gen) return cmd_gen_toy_kg(o, out);
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::out_of_range& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const DimensionError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace eurnet::cli
