#include "eurnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <numeric>
#include <set>
#include <sstream>

namespace eurnet {

// ---------------------------------------------------------------------------
// Optimizer

template <typename T>
Adam<T>::Adam(ParamList<T> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

template <typename T>
void Adam<T>::step() {
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2, lr = config_.lr, wd = config_.weight_decay;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor<T>& p = params_[k].second;
    const bool has = p.has_grad();
    auto theta = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      double x = static_cast<double>(theta[i]);
      double g = has ? static_cast<double>(p.grad()[i]) : 0.0;
      if (config_.decoupled) {
        x -= lr * wd * x;
      } else {
        g += wd * x;
      }
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      x -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
      theta[i] = static_cast<T>(x);
    }
  }
}

template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm) {
  double sq = 0;
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& [name, p] : params) {
      if (!p.has_grad()) continue;
      Tensor<T> handle = p;
      for (T& g : handle.mutable_grad()) g = static_cast<T>(g * factor);
    }
  }
  return norm;
}

void ScheduleConfig::validate() const {
  if (total_epochs <= 0 || warmup_epochs < 0 || warmup_epochs > total_epochs) {
    throw ConfigError("schedule needs 0 ≤ warmup ≤ total and total > 0");
  }
}

double lr_at(double fraction, const ScheduleConfig& config) {
  config.validate();
  fraction = std::clamp(fraction, 0.0, 1.0);
  const double epoch = fraction * config.total_epochs;
  if (epoch < config.warmup_epochs) {
    return config.warmup_start_lr + (config.base_lr - config.warmup_start_lr) * epoch / config.warmup_epochs;
  }
  const double span = config.total_epochs - config.warmup_epochs;
  const double progress = span > 0 ? (epoch - config.warmup_epochs) / span : 1.0;
  if (progress <= 0.0) return config.base_lr;
  if (progress >= 1.0) return config.min_lr;
  return config.min_lr + 0.5 * (config.base_lr - config.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------
// Toy kinship data

KinshipDataset generate_kinship(std::uint64_t seed, const KinshipOptions& options) {
  if (options.num_people < 4) throw ConfigError("kinship data needs at least 4 people");
  std::mt19937_64 rng(seed);
  const std::size_t n = options.num_people;
  std::vector<std::vector<std::size_t>> parents(n);
  std::vector<std::size_t> family(n, 0);  // family id: parents' couple index
  std::vector<std::pair<std::size_t, std::size_t>> couples;
  std::size_t people = 0;
  auto add_person = [&](std::size_t fam) {
    family[people] = fam;
    return people++;
  };

  const std::size_t founders = std::max<std::size_t>(2, n / 12);
  std::vector<std::size_t> generation;
  for (std::size_t c = 0; c < founders && people + 2 <= n; ++c) {
    const std::size_t a = add_person(static_cast<std::size_t>(-1) - 2 * c);
    const std::size_t b = add_person(static_cast<std::size_t>(-2) - 2 * c);
    couples.emplace_back(a, b);
  }
  std::size_t first_new = 0;
  std::uniform_int_distribution<int> kids_dist(2, 4);
  while (people < n) {
    // Children of the couples formed in the previous round.
    const std::size_t round_end = couples.size();
    generation.clear();
    for (std::size_t c = first_new; c < round_end && people < n; ++c) {
      const int kids = kids_dist(rng);
      for (int k = 0; k < kids && people < n; ++k) {
        const std::size_t child = add_person(c);
        parents[child] = {couples[c].first, couples[c].second};
        generation.push_back(child);
      }
    }
    first_new = round_end;
    // Marry within the new generation across families; leftovers marry newcomers.
    std::shuffle(generation.begin(), generation.end(), rng);
    std::vector<char> married(n, 0);
    for (std::size_t i = 0; i < generation.size(); ++i) {
      const std::size_t a = generation[i];
      if (married[a]) continue;
      for (std::size_t j = i + 1; j < generation.size(); ++j) {
        const std::size_t b = generation[j];
        if (!married[b] && family[a] != family[b]) {
          couples.emplace_back(a, b);
          married[a] = married[b] = 1;
          break;
        }
      }
      if (!married[a] && people < n) {
        const std::size_t outsider = add_person(static_cast<std::size_t>(-1000000) - people);
        couples.emplace_back(a, outsider);
        married[a] = 1;
      }
    }
    if (couples.size() == first_new) break;  // nobody left to have children
  }

  auto name = [](std::size_t p) {
    std::string digits = std::to_string(p);
    return "person_" + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits;
  };
  std::vector<TripletText> all;
  auto emit = [&](std::size_t h, const char* r, std::size_t t) { all.push_back({name(h), r, name(t)}); };
  for (const auto& [a, b] : couples) {
    emit(a, "spouse_of", b);
    emit(b, "spouse_of", a);
  }
  for (std::size_t c = 0; c < people; ++c) {
    for (std::size_t p : parents[c]) {
      emit(p, "parent_of", c);
      emit(c, "child_of", p);
      for (std::size_t g : parents[p]) {
        emit(g, "grandparent_of", c);
        emit(c, "grandchild_of", g);
      }
    }
    for (std::size_t s = 0; s < people; ++s) {
      if (s != c && !parents[c].empty() && parents[s] == parents[c]) emit(c, "sibling_of", s);
    }
  }

  std::shuffle(all.begin(), all.end(), rng);
  const auto n_valid = static_cast<std::size_t>(std::llround(options.valid_fraction * all.size()));
  const auto n_test = static_cast<std::size_t>(std::llround(options.test_fraction * all.size()));
  KinshipDataset data;
  data.valid.assign(all.begin(), all.begin() + n_valid);
  data.test.assign(all.begin() + n_valid, all.begin() + n_valid + n_test);
  data.train.assign(all.begin() + n_valid + n_test, all.end());
  return data;
}

void write_triplets(std::ostream& out, const std::vector<TripletText>& triplets) {
  for (const auto& t : triplets) out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
}

KnowledgeGraph to_knowledge_graph(const KinshipDataset& data) {
  std::stringstream train, valid, test;
  write_triplets(train, data.train);
  write_triplets(valid, data.valid);
  write_triplets(test, data.test);
  return load_triplets(train, valid, test);
}

// ---------------------------------------------------------------------------
// KG training loop

void append_ranking_rows(std::vector<MetricRow>& rows, std::size_t epoch, const std::string& split,
                         const RankingMetrics& m) {
  rows.push_back({epoch, split, "mr", m.mr});
  rows.push_back({epoch, split, "mrr", m.mrr});
  rows.push_back({epoch, split, "hits@1", m.hits1});
  rows.push_back({epoch, split, "hits@3", m.hits3});
  rows.push_back({epoch, split, "hits@10", m.hits10});
  rows.push_back({epoch, split, "random_mrr", m.random_mrr});
}

namespace {

RelGraph without_triplets(const KnowledgeGraph& kg, std::span<const Triplet> hidden) {
  const auto base = static_cast<std::uint32_t>(kg.base_relations());
  std::set<Edge> drop;
  for (const auto& t : hidden) {
    drop.insert({t.head, t.tail, t.rel});
    drop.insert({t.tail, t.head, t.rel + base});
  }
  std::vector<Edge> kept;
  for (const Edge& e : kg.fact_graph.edges()) {
    if (!drop.contains(e)) kept.push_back(e);
  }
  return RelGraph::from_edges(kg.num_entities(), kg.num_relations(), kept);
}

}  // namespace

template <typename T>
KGTrainResult<T> train_kg(const KnowledgeGraph& kg, const KGTrainConfig& config) {
  if (kg.train.triplets.empty()) throw DataError("training split is empty");
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");
  KGTrainResult<T> result{KGModel<T>::init(config.model, kg.num_entities(), kg.base_relations(), config.seed),
                          {}, {}, {}};
  auto& model = result.model;
  const auto params = model.parameters();
  Adam<T> optimizer(params, {config.lr, 0.9, 0.999, 1e-8, 0.0, false});
  std::mt19937_64 rng(config.seed + 1);
  std::uniform_int_distribution<std::uint32_t> entity(0, static_cast<std::uint32_t>(kg.num_entities() - 1));
  std::bernoulli_distribution corrupt_head(0.5);

  if (!kg.valid.triplets.empty()) append_ranking_rows(result.history, 0, "valid", evaluate_kg(model, kg, kg.valid));

  std::vector<std::size_t> order(kg.train.triplets.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t steps_per_epoch = (order.size() + config.batch_size - 1) / config.batch_size;
  const double total_steps = static_cast<double>(steps_per_epoch * config.epochs);
  const ScheduleConfig schedule{config.lr, config.lr, 0, 1, config.min_lr};
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Triplet> batch, negatives;
      for (std::size_t i = start; i < end; ++i) batch.push_back(kg.train.triplets[order[i]]);
      for (const auto& t : batch) {
        for (std::size_t k = 0; k < config.model.negatives; ++k) {
          Triplet neg = t;
          (corrupt_head(rng) ? neg.head : neg.tail) = entity(rng);
          negatives.push_back(neg);
        }
      }
      const RelGraph graph = config.hide_batch_edges ? without_triplets(kg, batch) : kg.fact_graph;
      auto z = kg_encode(model, graph);
      auto pos = kg_score(model, z, batch);
      auto neg = kg_score(model, z, negatives);
      auto loss = add(bce_with_logits(pos, Tensor<T>::ones(pos.shape())),
                      bce_with_logits(neg, Tensor<T>::zeros(neg.shape())));
      if (config.cosine_decay) optimizer.set_lr(lr_at(static_cast<double>(step) / total_steps, schedule));
      ++step;
      optimizer.zero_grad();
      backward(loss);
      if (config.clip_norm > 0) clip_grad_norm(params, config.clip_norm);
      optimizer.step();
      loss_sum += static_cast<double>(loss.item());
      ++batches;
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(batches));
    result.history.push_back({epoch, "train", "loss", result.epoch_losses.back()});
    if (!kg.valid.triplets.empty()) {
      append_ranking_rows(result.history, epoch, "valid", evaluate_kg(model, kg, kg.valid));
    }
  }
  if (!kg.test.triplets.empty()) {
    result.test = evaluate_kg(model, kg, kg.test);
    append_ranking_rows(result.history, config.epochs, "test", result.test);
  }
  return result;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "epoch,split,metric,value\n";
  const auto old_precision = out.precision(17);
  for (const auto& r : rows) out << r.epoch << ',' << r.split << ',' << r.metric << ',' << r.value << '\n';
  out.precision(old_precision);
}

std::vector<double> smooth(const std::vector<double>& values, std::size_t window) {
  std::vector<double> out;
  if (window == 0) window = 1;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double s = 0;
    for (std::size_t j = lo; j <= i; ++j) s += values[j];
    out.push_back(s / static_cast<double>(i + 1 - lo));
  }
  return out;
}

template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm(const ParamList<float>&, double);
template double clip_grad_norm(const ParamList<double>&, double);
template KGTrainResult<float> train_kg<float>(const KnowledgeGraph&, const KGTrainConfig&);
template KGTrainResult<double> train_kg<double>(const KnowledgeGraph&, const KGTrainConfig&);

}  // namespace eurnet
