#include "shrinkcl/encoder.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>

namespace shrinkcl {

using nlohmann::json;

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "identity") return Activation::Identity;
  fail("unknown activation '" + s + "' (expected relu or identity)");
}

std::string to_string(Activation a) {
  return a == Activation::Relu ? "relu" : "identity";
}

void MlpSpec::validate() const {
  ensure(widths.size() >= 2, "MlpSpec: need at least input and output widths");
  for (Index w : widths) {
    ensure(w >= 1, "MlpSpec: layer widths must be >= 1");
  }
}

MlpParams init_mlp(const MlpSpec& spec, Pcg32& rng) {
  spec.validate();
  MlpParams p;
  p.spec = spec;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const Index fan_in = spec.widths[l];
    const Index fan_out = spec.widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer;
    layer.w.resize(fan_in, fan_out);
    for (Index i = 0; i < fan_in; ++i) {
      for (Index j = 0; j < fan_out; ++j) {
        layer.w(i, j) = bound * (2.0 * rng.next_double() - 1.0);
      }
    }
    layer.b = RowVector::Zero(fan_out);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

Matrix forward_features(const MlpParams& p, const Eigen::Ref<const Matrix>& x) {
  ensure(x.cols() == p.spec.input_dim(),
         "forward_features: input has " + std::to_string(x.cols()) +
             " columns, expected " + std::to_string(p.spec.input_dim()));
  Matrix a = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    a = (a * p.layers[l].w).rowwise() + p.layers[l].b;
    if (l + 1 < p.layers.size() && p.spec.activation == Activation::Relu) {
      a = a.cwiseMax(0.0);
    }
  }
  ensure_finite(a, "forward_features: output");
  return a;
}

MlpVars register_params(ad::Tape& tape, const MlpParams& p) {
  MlpVars vars;
  vars.activation = p.spec.activation;
  for (const DenseLayer& layer : p.layers) {
    vars.layers.emplace_back(tape.input(layer.w), tape.input(Matrix(layer.b)));
  }
  return vars;
}

ad::Var forward_features(ad::Tape& tape, const MlpVars& vars, const ad::Var& x) {
  ad::Var a = x;
  for (std::size_t l = 0; l < vars.layers.size(); ++l) {
    a = ad::add_row_broadcast(ad::matmul(a, vars.layers[l].first), vars.layers[l].second);
    if (l + 1 < vars.layers.size() && vars.activation == Activation::Relu) {
      a = ad::relu(a);
    }
  }
  (void)tape;
  return a;
}

EncoderPair init_encoder_pair(const MlpSpec& spec, double momentum, Pcg32& rng) {
  ensure(momentum >= 0.0 && momentum <= 1.0,
         "EncoderPair: momentum must lie in [0, 1], got " + std::to_string(momentum));
  EncoderPair enc;
  enc.query = init_mlp(spec, rng);
  enc.key = enc.query;
  enc.momentum = momentum;
  return enc;
}

void momentum_update(EncoderPair& enc) {
  const double m = enc.momentum;
  for (std::size_t l = 0; l < enc.key.layers.size(); ++l) {
    enc.key.layers[l].w = m * enc.key.layers[l].w + (1.0 - m) * enc.query.layers[l].w;
    enc.key.layers[l].b = m * enc.key.layers[l].b + (1.0 - m) * enc.query.layers[l].b;
  }
}

Matrix project_instance(const MlpParams& g_i, const Eigen::Ref<const Matrix>& h) {
  return forward_features(g_i, h);
}

Matrix project_cluster(const MlpParams& g_c, const Eigen::Ref<const Matrix>& h) {
  return row_softmax(forward_features(g_c, h));
}

ad::Var project_instance(ad::Tape& tape, const MlpVars& g_i, const ad::Var& h) {
  return forward_features(tape, g_i, h);
}

ad::Var project_cluster(ad::Tape& tape, const MlpVars& g_c, const ad::Var& h) {
  return ad::row_softmax(forward_features(tape, g_c, h));
}

// ---- checkpoint serialization -------------------------------------------

namespace {

json layer_to_json(const DenseLayer& layer) {
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(layer.w.size()));
  for (Index i = 0; i < layer.w.rows(); ++i) {
    for (Index j = 0; j < layer.w.cols(); ++j) w.push_back(layer.w(i, j));
  }
  std::vector<double> b(layer.b.data(), layer.b.data() + layer.b.size());
  return json{{"rows", layer.w.rows()}, {"cols", layer.w.cols()}, {"w", w}, {"b", b}};
}

DenseLayer layer_from_json(const json& j) {
  DenseLayer layer;
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto w = j.at("w").get<std::vector<double>>();
  const auto b = j.at("b").get<std::vector<double>>();
  ensure(static_cast<Index>(w.size()) == rows * cols &&
             static_cast<Index>(b.size()) == cols,
         "checkpoint: layer payload does not match its declared shape");
  layer.w.resize(rows, cols);
  std::size_t idx = 0;
  for (Index i = 0; i < rows; ++i) {
    for (Index j2 = 0; j2 < cols; ++j2) layer.w(i, j2) = w[idx++];
  }
  layer.b = Eigen::Map<const RowVector>(b.data(), static_cast<Index>(b.size()));
  return layer;
}

json mlp_to_json(const MlpParams& p) {
  json layers = json::array();
  for (const DenseLayer& l : p.layers) layers.push_back(layer_to_json(l));
  return json{{"widths", p.spec.widths},
              {"activation", to_string(p.spec.activation)},
              {"layers", layers}};
}

MlpParams mlp_from_json(const json& j) {
  MlpParams p;
  p.spec.widths = j.at("widths").get<std::vector<Index>>();
  p.spec.activation = activation_from_string(j.at("activation").get<std::string>());
  p.spec.validate();
  for (const json& l : j.at("layers")) p.layers.push_back(layer_from_json(l));
  ensure(p.layers.size() + 1 == p.spec.widths.size(),
         "checkpoint: layer count does not match widths");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    ensure(p.layers[l].w.rows() == p.spec.widths[l] &&
               p.layers[l].w.cols() == p.spec.widths[l + 1],
           "checkpoint: layer " + std::to_string(l) + " shape mismatch");
  }
  return p;
}

}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
  json j{{"format", "shrinkcl-checkpoint-v1"},
         {"k", m.k},
         {"momentum", m.encoder.momentum},
         {"augment",
          {{"mask_fraction", m.augment.mask_fraction},
           {"noise_std", m.augment.noise_std},
           {"noise_enabled", m.augment.noise_enabled}}},
         {"train_seed", m.train_seed},
         {"best_epoch", m.best_epoch},
         {"f_q", mlp_to_json(m.encoder.query)},
         {"f_k", mlp_to_json(m.encoder.key)},
         {"g_i", mlp_to_json(m.heads.instance)},
         {"g_c", mlp_to_json(m.heads.cluster)}};
  std::ofstream out(path, std::ios::binary);
  ensure(out.good(), "save_checkpoint: cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  ensure(out.good(), "save_checkpoint: write to '" + path + "' failed");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  ensure(in.good(), "load_checkpoint: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail("load_checkpoint: '" + path + "' is not valid JSON: " + e.what());
  }
  try {
    ensure(j.at("format").get<std::string>() == "shrinkcl-checkpoint-v1",
           "load_checkpoint: unsupported format tag");
    Model m;
    m.k = j.at("k").get<Index>();
    m.encoder.momentum = j.at("momentum").get<double>();
    const json& aug = j.at("augment");
    m.augment.mask_fraction = aug.at("mask_fraction").get<double>();
    m.augment.noise_std = aug.at("noise_std").get<double>();
    m.augment.noise_enabled = aug.at("noise_enabled").get<bool>();
    m.train_seed = j.at("train_seed").get<std::uint64_t>();
    m.best_epoch = j.at("best_epoch").get<int>();
    m.encoder.query = mlp_from_json(j.at("f_q"));
    m.encoder.key = mlp_from_json(j.at("f_k"));
    m.heads.instance = mlp_from_json(j.at("g_i"));
    m.heads.cluster = mlp_from_json(j.at("g_c"));
    ensure(m.heads.cluster.spec.output_dim() == m.k,
           "load_checkpoint: cluster head output does not match k");
    return m;
  } catch (const json::exception& e) {
    fail("load_checkpoint: '" + path + "' has malformed contents: " + e.what());
  }
}

}  // namespace shrinkcl
