#pragma once

#include "shrinkcl/augment.hpp"
#include "shrinkcl/common.hpp"
#include "shrinkcl/rng.hpp"
#include "shrinkcl/tape.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace shrinkcl {

enum class Activation { Identity, Relu };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

/// Fully connected feed-forward architecture; widths[0] is the input
/// dimension and the activation is applied between layers, never after
/// the last one.
struct MlpSpec {
  std::vector<Index> widths;
  Activation activation = Activation::Relu;

  Index input_dim() const { return widths.front(); }
  Index output_dim() const { return widths.back(); }
  void validate() const;
};

struct DenseLayer {
  Matrix w;     // in x out
  RowVector b;  // 1 x out
};

struct MlpParams {
  MlpSpec spec;
  std::vector<DenseLayer> layers;
};

/// Glorot-uniform weights (+- sqrt(6 / (fan_in + fan_out))), zero biases.
MlpParams init_mlp(const MlpSpec& spec, Pcg32& rng);

/// Batch forward pass; rows of x are samples.
Matrix forward_features(const MlpParams& p, const Eigen::Ref<const Matrix>& x);

/// Tape-recorded forward pass through differentiable parameter leaves.
struct MlpVars {
  std::vector<std::pair<ad::Var, ad::Var>> layers;  // (w, b) per layer
  Activation activation = Activation::Relu;
};
MlpVars register_params(ad::Tape& tape, const MlpParams& p);
ad::Var forward_features(ad::Tape& tape, const MlpVars& vars, const ad::Var& x);

/// Query/key encoder pair; the key trails the query by an exponential
/// moving average and never takes gradient steps.
struct EncoderPair {
  MlpParams query;  // trained
  MlpParams key;    // EMA copy
  double momentum = 0.99;
};

EncoderPair init_encoder_pair(const MlpSpec& spec, double momentum, Pcg32& rng);

/// key <- momentum * key + (1 - momentum) * query, elementwise.
void momentum_update(EncoderPair& enc);

struct Heads {
  MlpParams instance;  // g_I
  MlpParams cluster;   // g_C, logits; softmax applied by project_cluster
};

Matrix project_instance(const MlpParams& g_i, const Eigen::Ref<const Matrix>& h);
/// Row-stochastic cluster assignment probabilities.
Matrix project_cluster(const MlpParams& g_c, const Eigen::Ref<const Matrix>& h);

ad::Var project_instance(ad::Tape& tape, const MlpVars& g_i, const ad::Var& h);
ad::Var project_cluster(ad::Tape& tape, const MlpVars& g_c, const ad::Var& h);

/// Full trainable state plus enough metadata to re-create the evaluation
/// pipeline. JSON serialization stores row-major weights with shortest
/// round-trip formatting, so save -> load -> save is byte-identical.
struct Model {
  EncoderPair encoder;
  Heads heads;
  Index k = 0;
  AugmentConfig augment;
  std::uint64_t train_seed = 0;
  int best_epoch = 0;
};

void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace shrinkcl
