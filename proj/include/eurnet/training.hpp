#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "eurnet/graphbuild.hpp"
#include "eurnet/layers.hpp"
#include "eurnet/models.hpp"

namespace eurnet {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  /// true: AdamW, θ ← θ − lr·λ·θ before the adaptive step.
  /// false: classic Adam, λ·θ is added to the gradient.
  bool decoupled = true;
};

/// Adam / AdamW over a fixed parameter list. Parameters without a gradient
/// are treated as having a zero gradient.
template <typename T>
class Adam {
 public:
  Adam(ParamList<T> params, AdamConfig config);

  void step();
  void zero_grad();

  void set_lr(double lr) { config_.lr = lr; }
  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  ParamList<T> params_;
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Global L2 norm of all gradients; rescales them to `max_norm` when larger.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(const ParamList<T>& params, double max_norm);

struct ScheduleConfig {
  double base_lr = 1e-3;
  double warmup_start_lr = 0.0;
  double warmup_epochs = 0;
  double total_epochs = 1;
  double min_lr = 0.0;

  void validate() const;
};

/// Linear warmup from warmup_start_lr to base_lr, then half-cosine to min_lr.
/// `fraction` is elapsed training in [0, 1].
double lr_at(double fraction, const ScheduleConfig& config);

// ---------------------------------------------------------------------------
// Knowledge graph training

struct KinshipOptions {
  std::size_t num_people = 100;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
};

/// Seeded family trees. Relations: parent_of, child_of, sibling_of,
/// spouse_of, grandparent_of, grandchild_of. Triplets are shuffled and split.
struct TripletText {
  std::string head, relation, tail;
};
struct KinshipDataset {
  std::vector<TripletText> train, valid, test;
};
KinshipDataset generate_kinship(std::uint64_t seed, const KinshipOptions& options = {});

void write_triplets(std::ostream& out, const std::vector<TripletText>& triplets);
KnowledgeGraph to_knowledge_graph(const KinshipDataset& data);

struct KGTrainConfig {
  KGModelConfig model;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 5e-3;
  double clip_norm = 0;  // 0: no clipping
  /// Half-cosine decay of lr to min_lr over all steps, no warmup.
  bool cosine_decay = true;
  double min_lr = 0;
  /// Drop the batch's own triplets (and inverses) from the fact graph while
  /// scoring them, so the encoder cannot read off the answer.
  bool hide_batch_edges = true;
  std::uint64_t seed = 0;
};

struct MetricRow {
  std::size_t epoch = 0;
  std::string split;
  std::string metric;
  double value = 0;
};

template <typename T>
struct KGTrainResult {
  KGModel<T> model;
  std::vector<double> epoch_losses;  // mean training loss of each epoch
  std::vector<MetricRow> history;
  RankingMetrics test;
};

/// Adam (no weight decay) with uniform head-or-tail corruption.
/// Loss is mean BCE over positives plus mean BCE over negatives. Validation
/// metrics are logged before training (epoch 0) and after every epoch;
/// test metrics at the end.
template <typename T>
KGTrainResult<T> train_kg(const KnowledgeGraph& kg, const KGTrainConfig& config);

/// `epoch,split,metric,value`.
void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);
void append_ranking_rows(std::vector<MetricRow>& rows, std::size_t epoch, const std::string& split,
                         const RankingMetrics& metrics);

/// Trailing moving average with the given window (shorter at the start).
std::vector<double> smooth(const std::vector<double>& values, std::size_t window);

}  // namespace eurnet
