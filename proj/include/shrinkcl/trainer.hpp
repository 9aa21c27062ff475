#pragma once

#include "shrinkcl/augment.hpp"
#include "shrinkcl/clusterer.hpp"
#include "shrinkcl/contrastive.hpp"
#include "shrinkcl/dataio.hpp"
#include "shrinkcl/encoder.hpp"
#include "shrinkcl/metrics.hpp"
#include "shrinkcl/shrinkage.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace shrinkcl {

/// Which of the three loss terms participate in the objective. Disabled
/// terms are not evaluated at all; their recorded value is 0.
struct LossSet {
  bool sure = true;
  bool ins = true;
  bool clu = true;

  void validate() const;  // at least one term
  std::string name() const;  // e.g. "sure+ins+clu"
};

LossSet loss_set_from_string(const std::string& s);

struct TrainConfig {
  Index k = 2;              // number of clusters
  int epochs = 400;
  Index batch_size = 256;   // clamped to N at runtime
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double alpha = 1.0;       // instance-loss weight
  double beta = 1.0;        // cluster-loss weight
  double momentum = 0.99;   // key-encoder EMA coefficient

  // Architecture: hidden/output widths appended after the data-driven
  // input width. The cluster head always ends in k logits.
  std::vector<Index> encoder_widths = {256, 64};
  std::vector<Index> instance_head_widths = {64, 32};
  std::vector<Index> cluster_head_widths = {};

  AugmentConfig augment;
  ContrastConfig contrast;
  KmeansConfig kmeans;      // k is overridden by this->k
  LossSet losses;
  std::uint64_t seed = 1;
  int eval_every = 10;

  void validate() const;
};

/// One optimization step's (or one epoch's mean) loss components; the
/// recombination total = l_sure + alpha * l_ins + beta * l_clu holds
/// exactly for every record.
struct LossBreakdown {
  double l_sure = 0.0;
  double l_ins = 0.0;
  double l_clu = 0.0;
  double total = 0.0;
  int epoch = 0;
  int step = 0;
};

/// Metrics of one trained model on one dataset. The argmax readout uses
/// the cluster head directly; the kmeans readout re-clusters the encoder
/// features with a seed derived from the model's training seed, so it is
/// reproducible from the checkpoint alone. The cosine gap is measured on
/// a deterministic evaluation augmentation pair.
struct EvalResult {
  std::vector<Index> labels_argmax;
  std::vector<Index> labels_kmeans;
  CosineGap cos_gap;
  std::optional<double> ari_argmax, nmi_argmax;
  std::optional<double> ari_kmeans, nmi_kmeans;
};

EvalResult evaluate_model(const Model& m, const ExpressionMatrix& x);

struct EpochRecord {
  int epoch = 0;
  int steps = 0;
  // Means over the epoch's steps. l_sure is the per-batch aggregate sum
  // (each cell contributes once per epoch), the contrastive terms are
  // per-anchor means, matching their definitions.
  double l_sure = 0.0;
  double l_ins = 0.0;
  double l_clu = 0.0;
  double total = 0.0;
  /// Full-dataset shrinkage loss of this epoch's final parameters against
  /// this epoch's frozen statistics, measured at the next epoch boundary;
  /// the checkpoint criterion.
  double monitored_sure = 0.0;
  /// Residual of the telescoping identity: the shrinkage loss evaluated
  /// against statistics freshly computed from the same features.
  double sure_identity = 0.0;
  double cos_gap = 0.0;
  std::optional<double> ari, nmi;  // argmax readout, every eval_every epochs
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_monitored_sure = 0.0;
  double cos_gap_mean = 0.0;  // over epochs
  double cos_gap_var = 0.0;   // sample variance over epochs
  EvalResult final_eval;      // best checkpoint on the training data
  double wall_clock_seconds = 0.0;
  Index n_cells = 0;
  Index n_genes = 0;
  Index k = 0;
  std::uint64_t seed = 0;
  LossSet losses;
  double alpha = 1.0;
  double beta = 1.0;
};

struct TrainResult {
  Model best;  // parameters at the minimum monitored shrinkage loss
  TrainReport report;
};

/// Full training loop. Per epoch: draw the two augmented views for every
/// cell (fresh randomness keyed on (seed, epoch, cell) only), measure the
/// previous epoch's monitored shrinkage loss and checkpoint on a new
/// minimum, re-cluster the query features and freeze per-cluster
/// statistics, then sweep shuffled minibatches taking one optimizer step
/// each followed by the key-encoder momentum update. Purely sequential
/// and deterministic for a given (data, config) pair.
TrainResult train(const ExpressionMatrix& x, const TrainConfig& cfg);

struct AblationRun {
  std::string arm;
  std::uint64_t seed = 0;
  EvalResult final_eval;
  double cos_gap_mean = 0.0;
  double cos_gap_var = 0.0;
  int best_epoch = 0;
};

/// Trains every (variant, seed) combination with otherwise identical
/// configuration; arms run under parallel_runs but each run is internally
/// deterministic, so the table does not depend on scheduling.
std::vector<AblationRun> ablate(const ExpressionMatrix& x, const TrainConfig& base,
                                const std::vector<LossSet>& variants,
                                const std::vector<std::uint64_t>& seeds);

struct NoiseToggleReport {
  EvalResult with_noise;
  EvalResult without_noise;
  /// Argmax NMI difference (with - without); absent when x has no labels.
  std::optional<double> nmi_difference;
};

/// Two runs differing only in augment.noise_enabled, same seed.
NoiseToggleReport noise_toggle_experiment(const ExpressionMatrix& x,
                                          const TrainConfig& cfg);

void write_report_json(const TrainReport& r, const std::string& path);
void write_curves_csv(const TrainReport& r, const std::string& path);
void write_assignments_csv(const ExpressionMatrix& x, const EvalResult& eval,
                           const std::string& path);
void write_ablation_json(const std::vector<AblationRun>& runs, const std::string& path);
void write_noise_toggle_json(const NoiseToggleReport& r, const std::string& path);

}  // namespace shrinkcl
