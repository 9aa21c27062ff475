#include "shrinkcl/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <vector>

namespace shrinkcl {

namespace {

using json = nlohmann::ordered_json;

/// Pulls typed values out of one section object and tracks which keys
/// were recognized, so leftovers can be reported as errors.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (root.contains(name)) {
      ensure(root.at(name).is_object(), "config: section '" + name + "' must be an object");
      obj_ = &root.at(name);
    }
  }

  template <typename T>
  void get(const char* key, T& target) {
    if (!obj_ || !obj_->contains(key)) return;
    seen_.insert(key);
    try {
      target = obj_->at(key).get<T>();
    } catch (const json::exception&) {
      fail("config: bad value type for '" + name_ + "." + key + "'");
    }
  }

  void get_widths(const char* key, std::vector<Index>& target) {
    if (!obj_ || !obj_->contains(key)) return;
    seen_.insert(key);
    const json& arr = obj_->at(key);
    ensure(arr.is_array(), "config: '" + name_ + "." + key + "' must be an array");
    std::vector<Index> widths;
    for (const auto& v : arr) {
      ensure(v.is_number_integer(),
             "config: '" + name_ + "." + key + "' entries must be integers");
      widths.push_back(v.get<Index>());
    }
    target = std::move(widths);
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& [key, value] : obj_->items()) {
      ensure(seen_.count(key) > 0,
             "config: unknown key '" + key + "' in section '" + name_ + "'");
    }
  }

 private:
  const json* obj_ = nullptr;
  std::string name_;
  std::set<std::string> seen_;
};

CliConfig parse(const json& root) {
  ensure(root.is_object(), "config: top level must be a JSON object");
  static const std::set<std::string> kSections = {"data",   "preprocess", "augment",
                                                  "model",  "losses",     "kmeans",
                                                  "train",  "output"};
  for (const auto& [key, value] : root.items()) {
    ensure(kSections.count(key) > 0, "config: unknown section '" + key + "'");
  }

  CliConfig c;

  Section data(root, "data");
  data.get("path", c.data_path);
  data.get("genes", c.genes_path);
  data.get("cells", c.cells_path);
  data.get("labels", c.labels_path);
  data.finish();

  Section prep(root, "preprocess");
  prep.get("normalize_library_size", c.preprocess.normalize_library_size);
  prep.get("log1p", c.preprocess.log1p);
  prep.get("n_top_genes", c.preprocess.n_top_genes);
  prep.get("standardize", c.preprocess.standardize);
  prep.finish();

  Section aug(root, "augment");
  aug.get("mask_fraction", c.train.augment.mask_fraction);
  aug.get("noise_std", c.train.augment.noise_std);
  aug.get("noise_enabled", c.train.augment.noise_enabled);
  aug.finish();

  Section model(root, "model");
  model.get("k", c.train.k);
  model.get_widths("encoder_widths", c.train.encoder_widths);
  model.get_widths("instance_head_widths", c.train.instance_head_widths);
  model.get_widths("cluster_head_widths", c.train.cluster_head_widths);
  model.get("momentum", c.train.momentum);
  model.finish();

  Section losses(root, "losses");
  losses.get("sure", c.train.losses.sure);
  losses.get("ins", c.train.losses.ins);
  losses.get("clu", c.train.losses.clu);
  losses.get("alpha", c.train.alpha);
  losses.get("beta", c.train.beta);
  losses.get("tau_instance", c.train.contrast.tau_instance);
  losses.get("tau_cluster", c.train.contrast.tau_cluster);
  losses.get("exclude_self", c.train.contrast.exclude_self);
  losses.get("strict_entropy_sign", c.train.contrast.strict_entropy_sign);
  losses.get("entropy_eps", c.train.contrast.entropy_eps);
  losses.finish();

  Section km(root, "kmeans");
  km.get("max_iters", c.train.kmeans.max_iters);
  km.get("tol", c.train.kmeans.tol);
  km.get("n_init", c.train.kmeans.n_init);
  std::string init = c.train.kmeans.init == KmeansConfig::Init::KmeansPlusPlus
                         ? "kmeans++"
                         : "random";
  km.get("init", init);
  if (init == "kmeans++") {
    c.train.kmeans.init = KmeansConfig::Init::KmeansPlusPlus;
  } else if (init == "random") {
    c.train.kmeans.init = KmeansConfig::Init::Random;
  } else {
    fail("config: kmeans.init must be 'kmeans++' or 'random', got '" + init + "'");
  }
  km.finish();

  Section train(root, "train");
  train.get("epochs", c.train.epochs);
  train.get("batch_size", c.train.batch_size);
  train.get("learning_rate", c.train.learning_rate);
  train.get("adam_beta1", c.train.adam_beta1);
  train.get("adam_beta2", c.train.adam_beta2);
  train.get("adam_eps", c.train.adam_eps);
  train.get("seed", c.train.seed);
  train.get("eval_every", c.train.eval_every);
  train.finish();

  Section output(root, "output");
  output.get("dir", c.out_dir);
  output.finish();

  return c;
}

json widths_to_json(const std::vector<Index>& widths) {
  json arr = json::array();
  for (Index w : widths) arr.push_back(w);
  return arr;
}

}  // namespace

CliConfig config_from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("config: invalid JSON: ") + e.what());
  }
  return parse(root);
}

CliConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  ensure(in.good(), "config: cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return config_from_json_text(buffer.str());
}

std::string config_to_json_text(const CliConfig& c) {
  json j;
  j["data"] = {{"path", c.data_path},
               {"genes", c.genes_path},
               {"cells", c.cells_path},
               {"labels", c.labels_path}};
  j["preprocess"] = {{"normalize_library_size", c.preprocess.normalize_library_size},
                     {"log1p", c.preprocess.log1p},
                     {"n_top_genes", c.preprocess.n_top_genes},
                     {"standardize", c.preprocess.standardize}};
  j["augment"] = {{"mask_fraction", c.train.augment.mask_fraction},
                  {"noise_std", c.train.augment.noise_std},
                  {"noise_enabled", c.train.augment.noise_enabled}};
  j["model"] = {{"k", c.train.k},
                {"encoder_widths", widths_to_json(c.train.encoder_widths)},
                {"instance_head_widths", widths_to_json(c.train.instance_head_widths)},
                {"cluster_head_widths", widths_to_json(c.train.cluster_head_widths)},
                {"momentum", c.train.momentum}};
  j["losses"] = {{"sure", c.train.losses.sure},
                 {"ins", c.train.losses.ins},
                 {"clu", c.train.losses.clu},
                 {"alpha", c.train.alpha},
                 {"beta", c.train.beta},
                 {"tau_instance", c.train.contrast.tau_instance},
                 {"tau_cluster", c.train.contrast.tau_cluster},
                 {"exclude_self", c.train.contrast.exclude_self},
                 {"strict_entropy_sign", c.train.contrast.strict_entropy_sign},
                 {"entropy_eps", c.train.contrast.entropy_eps}};
  j["kmeans"] = {{"max_iters", c.train.kmeans.max_iters},
                 {"tol", c.train.kmeans.tol},
                 {"n_init", c.train.kmeans.n_init},
                 {"init", c.train.kmeans.init == KmeansConfig::Init::KmeansPlusPlus
                              ? "kmeans++"
                              : "random"}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"adam_beta1", c.train.adam_beta1},
                {"adam_beta2", c.train.adam_beta2},
                {"adam_eps", c.train.adam_eps},
                {"seed", c.train.seed},
                {"eval_every", c.train.eval_every}};
  j["output"] = {{"dir", c.out_dir}};
  return j.dump(2) + "\n";
}

ExpressionMatrix load_dataset(const CliConfig& c) {
  ensure(!c.data_path.empty(), "config: data.path is required");
  ExpressionMatrix x;
  const bool mtx = c.data_path.size() >= 4 &&
                   c.data_path.compare(c.data_path.size() - 4, 4, ".mtx") == 0;
  if (mtx) {
    ensure(!c.genes_path.empty() && !c.cells_path.empty(),
           "config: matrix-market input needs data.genes and data.cells");
    x = load_matrix_market(c.data_path, c.genes_path, c.cells_path, c.labels_path);
  } else {
    CsvOptions opts;
    opts.allow_negative = true;  // standardized or synthetic inputs are signed
    x = load_csv(c.data_path, opts);
    if (!c.labels_path.empty()) attach_labels_file(x, c.labels_path);
  }
  return preprocess(x, c.preprocess);
}

}  // namespace shrinkcl
