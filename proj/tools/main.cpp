// Command-line surface: dataset synthesis and preprocessing, training,
// checkpoint evaluation, estimator risk benchmarks, loss ablations and
// downsampling, all reading the same JSON config schema. Flags beat config
// file values, which beat built-in defaults.

#include "shrinkcl/config.hpp"
#include "shrinkcl/dataio.hpp"
#include "shrinkcl/rng.hpp"
#include "shrinkcl/shrinkage.hpp"
#include "shrinkcl/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace shrinkcl;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  ensure(out.good(), "cannot open '" + path + "' for writing");
  out << text;
  ensure(out.good(), "write to '" + path + "' failed");
}

// Options shared by train and ablate; resolve() folds parsed flags over
// the config file over the defaults, in that precedence order.
struct TrainArgs {
  std::string config_path, data, genes, cells, labels, out_dir, loss_set;
  Index k = 0, batch_size = 0;
  int epochs = 0, eval_every = 0;
  double lr = 0, alpha = 0, beta = 0, mask = 0, noise_std = 0, momentum = 0;
  std::uint64_t seed = 0;
  bool no_noise = false;

  CLI::Option *o_data = nullptr, *o_genes = nullptr, *o_cells = nullptr,
              *o_labels = nullptr, *o_out = nullptr, *o_k = nullptr,
              *o_epochs = nullptr, *o_batch = nullptr, *o_lr = nullptr,
              *o_alpha = nullptr, *o_beta = nullptr, *o_mask = nullptr,
              *o_noise_std = nullptr, *o_momentum = nullptr, *o_seed = nullptr,
              *o_eval_every = nullptr, *o_loss_set = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    o_data = cmd->add_option("--data", data, "expression matrix (.csv/.tsv or .mtx)");
    o_genes = cmd->add_option("--genes", genes, "gene id file (matrix market input)");
    o_cells = cmd->add_option("--cells", cells, "cell id file (matrix market input)");
    o_labels = cmd->add_option("--labels", labels, "ground-truth label file");
    o_out = cmd->add_option("--out", out_dir, "output directory [out]");
    o_k = cmd->add_option("--k", k, "number of clusters [2]");
    o_epochs = cmd->add_option("--epochs", epochs, "training epochs [400]");
    o_batch = cmd->add_option("--batch-size", batch_size, "minibatch size [256]");
    o_lr = cmd->add_option("--lr", lr, "learning rate [1e-3]");
    o_alpha = cmd->add_option("--alpha", alpha, "instance-loss weight [1]");
    o_beta = cmd->add_option("--beta", beta, "cluster-loss weight [1]");
    o_mask = cmd->add_option("--mask", mask, "augmentation mask fraction [0.2]");
    o_noise_std = cmd->add_option("--noise-std", noise_std, "augmentation noise std [0.15]");
    o_momentum = cmd->add_option("--momentum", momentum, "key-encoder momentum [0.99]");
    o_seed = cmd->add_option("--seed", seed, "random seed [1]");
    o_eval_every = cmd->add_option("--eval-every", eval_every, "epochs between metric evals [10]");
    o_loss_set = cmd->add_option("--loss-set", loss_set,
                                 "enabled loss terms, e.g. sure+ins+clu or ins");
    cmd->add_flag("--no-noise", no_noise, "disable additive augmentation noise");
  }

  CliConfig resolve() const {
    CliConfig c = config_path.empty() ? CliConfig{} : load_config_file(config_path);
    if (o_data->count()) c.data_path = data;
    if (o_genes->count()) c.genes_path = genes;
    if (o_cells->count()) c.cells_path = cells;
    if (o_labels->count()) c.labels_path = labels;
    if (o_out->count()) c.out_dir = out_dir;
    if (o_k->count()) c.train.k = k;
    if (o_epochs->count()) c.train.epochs = epochs;
    if (o_batch->count()) c.train.batch_size = batch_size;
    if (o_lr->count()) c.train.learning_rate = lr;
    if (o_alpha->count()) c.train.alpha = alpha;
    if (o_beta->count()) c.train.beta = beta;
    if (o_mask->count()) c.train.augment.mask_fraction = mask;
    if (o_noise_std->count()) c.train.augment.noise_std = noise_std;
    if (o_momentum->count()) c.train.momentum = momentum;
    if (o_seed->count()) c.train.seed = seed;
    if (o_eval_every->count()) c.train.eval_every = eval_every;
    if (o_loss_set->count()) c.train.losses = loss_set_from_string(loss_set);
    if (no_noise) c.train.augment.noise_enabled = false;
    return c;
  }
};

json eval_json(const EvalResult& r, const std::optional<std::vector<Index>>& truth,
               const std::vector<Index>& argmax, const std::vector<Index>& km) {
  json j;
  if (r.ari_argmax) {
    j["ari_argmax"] = *r.ari_argmax;
    j["nmi_argmax"] = *r.nmi_argmax;
    j["nmi_argmax_geometric"] = nmi(*truth, argmax, NmiNorm::Geometric);
    j["ari_kmeans"] = *r.ari_kmeans;
    j["nmi_kmeans"] = *r.nmi_kmeans;
    j["nmi_kmeans_geometric"] = nmi(*truth, km, NmiNorm::Geometric);
  }
  j["cos_gap"] = {{"mean_pos", r.cos_gap.mean_pos},
                  {"mean_neg", r.cos_gap.mean_neg},
                  {"gap", r.cos_gap.gap}};
  return j;
}

void run_synth(const SynthConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  Pcg32 rng(seed);
  const ExpressionMatrix x = synth(cfg, rng);
  fs::create_directories(out_dir);
  write_csv(x, out_dir + "/matrix.csv");
  write_labels(x, out_dir + "/labels.csv");
  std::cout << "wrote " << x.n_cells() << " cells x " << x.n_genes() << " genes ("
            << cfg.n_clusters << " clusters, seed " << seed << ") to " << out_dir
            << "/{matrix,labels}.csv\n";
}

void run_train(const TrainArgs& args) {
  const CliConfig c = args.resolve();
  const ExpressionMatrix x = load_dataset(c);
  fs::create_directories(c.out_dir);
  const TrainResult res = train(x, c.train);

  save_checkpoint(res.best, c.out_dir + "/checkpoint.json");
  write_report_json(res.report, c.out_dir + "/report.json");
  write_curves_csv(res.report, c.out_dir + "/curves.csv");
  write_assignments_csv(x, res.report.final_eval, c.out_dir + "/assignments.csv");
  write_text(c.out_dir + "/config.json", config_to_json_text(c));

  const auto& fin = res.report.final_eval;
  std::cout << "trained " << res.report.epochs.size() << " epochs on " << x.n_cells()
            << " cells x " << x.n_genes() << " genes (losses " << c.train.losses.name()
            << ")\n";
  std::cout << "best epoch " << res.report.best_epoch << " (monitored shrinkage loss "
            << format_double(res.report.best_monitored_sure) << ")\n";
  if (fin.ari_argmax) {
    std::cout << "final ARI " << format_double(*fin.ari_argmax) << " (argmax) / "
              << format_double(*fin.ari_kmeans) << " (kmeans), NMI "
              << format_double(*fin.nmi_argmax) << " (argmax) / "
              << format_double(*fin.nmi_kmeans) << " (kmeans)\n";
  }
  std::cout << "cosine gap " << format_double(fin.cos_gap.gap) << ", outputs in "
            << c.out_dir << "\n";
}

void run_eval(const std::string& checkpoint_path, const TrainArgs& args,
              const std::string& out_path) {
  CliConfig c = args.resolve();
  const Model m = load_checkpoint(checkpoint_path);
  const ExpressionMatrix x = load_dataset(c);
  const EvalResult r = evaluate_model(m, x);
  if (!x.has_labels()) {
    std::cerr << "note: no ground-truth labels; ARI/NMI omitted\n";
  }
  const json j = eval_json(r, x.labels, r.labels_argmax, r.labels_kmeans);
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!out_path.empty()) write_text(out_path, text);
}

json risk_to_json(const RiskBenchReport& report) {
  json j;
  for (const auto& [name, risk] : report) {
    json e;
    e["empirical_mse"] = risk.empirical_mse;
    e["ci95"] = risk.ci95;
    if (risk.closed_form) e["closed_form"] = *risk.closed_form;
    e["trials"] = risk.trials;
    j[name] = std::move(e);
  }
  return j;
}

void run_bench(const std::vector<Index>& ps, const std::vector<double>& sigmas,
               const std::vector<double>& taus, const std::vector<double>& theta_norms,
               long trials, std::uint64_t seed, const std::string& out_path) {
  ensure(trials >= 1000, "bench-estimators: --trials minimum is 1000");
  json grid = json::array();
  std::uint64_t entry = 0;
  for (Index p : ps) {
    for (double sigma : sigmas) {
      for (double tau : taus) {
        RiskBenchConfig cfg;
        cfg.p = p;
        cfg.sigma = sigma;
        cfg.tau = tau;
        cfg.trials = trials;
        cfg.seed = mix64(seed, ++entry);
        json e = {{"p", p}, {"sigma", sigma}, {"mode", "hierarchical"}, {"tau", tau}};
        e["estimators"] = risk_to_json(risk_bench(cfg));
        grid.push_back(std::move(e));
      }
      for (double norm : theta_norms) {
        RiskBenchConfig cfg;
        cfg.p = p;
        cfg.sigma = sigma;
        cfg.theta_norm = norm;
        cfg.trials = trials;
        cfg.seed = mix64(seed, ++entry);
        json e = {{"p", p}, {"sigma", sigma}, {"mode", "fixed"}, {"theta_norm", norm}};
        e["estimators"] = risk_to_json(risk_bench(cfg));
        grid.push_back(std::move(e));
      }
    }
  }
  json j;
  j["format"] = "shrinkcl-bench-v1";
  j["trials"] = trials;
  j["grid"] = std::move(grid);
  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!out_path.empty()) write_text(out_path, text);
}

void run_ablate(const TrainArgs& args, const std::string& variants_arg,
                const std::vector<std::uint64_t>& seeds, bool noise_toggle) {
  const CliConfig c = args.resolve();
  const ExpressionMatrix x = load_dataset(c);
  fs::create_directories(c.out_dir);

  if (noise_toggle) {
    const NoiseToggleReport r = noise_toggle_experiment(x, c.train);
    write_noise_toggle_json(r, c.out_dir + "/noise_toggle.json");
    std::cout << "noise toggle (seed " << c.train.seed << "): with "
              << (r.with_noise.nmi_argmax ? format_double(*r.with_noise.nmi_argmax) : "-")
              << " NMI, without "
              << (r.without_noise.nmi_argmax ? format_double(*r.without_noise.nmi_argmax)
                                             : "-")
              << " NMI -> " << c.out_dir << "/noise_toggle.json\n";
    return;
  }

  std::vector<LossSet> variants;
  std::string token;
  for (char ch : variants_arg + ",") {
    if (ch == ',') {
      if (!token.empty()) variants.push_back(loss_set_from_string(token));
      token.clear();
    } else {
      token += ch;
    }
  }
  std::vector<std::uint64_t> seed_list = seeds;
  if (seed_list.empty()) seed_list = {c.train.seed};

  const auto runs = ablate(x, c.train, variants, seed_list);
  write_ablation_json(runs, c.out_dir + "/ablation.json");
  for (const auto& r : runs) {
    std::cout << r.arm << " seed " << r.seed;
    if (r.final_eval.nmi_argmax) {
      std::cout << ": NMI " << format_double(*r.final_eval.nmi_argmax) << " (argmax) / "
                << format_double(*r.final_eval.nmi_kmeans) << " (kmeans)";
    }
    std::cout << ", cosine gap mean " << format_double(r.cos_gap_mean) << "\n";
  }
  std::cout << "wrote " << c.out_dir << "/ablation.json\n";
}

void run_downsample(const std::string& data, const std::string& labels, double rate,
                    const std::string& mode, std::uint64_t seed,
                    const std::string& out_dir) {
  CsvOptions opts;
  opts.allow_negative = true;  // typically runs on already-processed matrices
  ExpressionMatrix x = load_csv(data, opts);
  if (!labels.empty()) attach_labels_file(x, labels);
  Pcg32 rng(seed);
  const ExpressionMatrix kept = downsample(x, rate, downsample_mode_from_string(mode), rng);
  fs::create_directories(out_dir);
  write_csv(kept, out_dir + "/matrix.csv");
  if (kept.has_labels()) write_labels(kept, out_dir + "/labels.csv");
  std::cout << "kept " << kept.n_cells() << " of " << x.n_cells() << " cells (" << mode
            << ", rate " << format_double(rate) << ") -> " << out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shrinkage-regularized contrastive clustering for expression matrices"};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a clustered synthetic dataset");
  SynthConfig synth_cfg;
  std::uint64_t synth_seed = 1;
  std::string synth_out = "out";
  std::vector<double> synth_weights;
  synth_cmd->add_option("--cells", synth_cfg.n_cells, "number of cells [1000]");
  synth_cmd->add_option("--genes", synth_cfg.n_genes, "number of genes [200]");
  synth_cmd->add_option("--clusters", synth_cfg.n_clusters, "number of clusters [5]");
  synth_cmd->add_option("--centroid-scale", synth_cfg.centroid_scale,
                        "std of centroid coordinates [1]");
  synth_cmd->add_option("--within-std", synth_cfg.within_std,
                        "within-cluster std [0.3]");
  synth_cmd->add_option("--dropout", synth_cfg.dropout_rate,
                        "probability of zeroing an entry [0]");
  auto* o_weights = synth_cmd->add_option("--weights", synth_weights,
                                          "cluster weights summing to 1 (comma separated)")
                        ->delimiter(',');
  synth_cmd->add_option("--seed", synth_seed, "random seed [1]");
  synth_cmd->add_option("--out", synth_out, "output directory [out]");
  synth_cmd->callback([&] {
    if (o_weights->count()) synth_cfg.cluster_weights = synth_weights;
    run_synth(synth_cfg, synth_seed, synth_out);
  });

  // preprocess
  auto* prep_cmd = app.add_subcommand("preprocess", "normalize/select/standardize a matrix");
  std::string prep_data, prep_labels, prep_out = "preprocessed.csv";
  PreprocessConfig prep_cfg;
  prep_cmd->add_option("--data", prep_data, "input matrix (.csv/.tsv)")->required();
  prep_cmd->add_option("--labels", prep_labels, "label sidecar to carry through");
  prep_cmd->add_option("--out", prep_out, "output csv [preprocessed.csv]");
  prep_cmd->add_flag("--normalize", prep_cfg.normalize_library_size,
                     "scale cells to the median library size");
  prep_cmd->add_flag("--log1p", prep_cfg.log1p, "apply log(1 + x)");
  prep_cmd->add_option("--top-genes", prep_cfg.n_top_genes,
                       "keep this many highest-variance genes (0 keeps all) [0]");
  prep_cmd->add_flag("--standardize", prep_cfg.standardize, "per-gene z-score");
  prep_cmd->callback([&] {
    ExpressionMatrix x = load_csv(prep_data);
    if (!prep_labels.empty()) attach_labels_file(x, prep_labels);
    const ExpressionMatrix y = preprocess(x, prep_cfg);
    write_csv(y, prep_out, true);
    std::cout << "preprocessed " << x.n_cells() << " x " << x.n_genes() << " -> "
              << y.n_cells() << " x " << y.n_genes() << " (" << prep_out << ")\n";
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "train the contrastive clustering model");
  TrainArgs train_args;
  train_args.attach(train_cmd);
  train_cmd->callback([&] { run_train(train_args); });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  TrainArgs eval_args;
  std::string eval_checkpoint, eval_out;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint.json from train")
      ->required();
  eval_args.attach(eval_cmd);
  eval_cmd->add_option("--report-out", eval_out, "also write the JSON report here");
  eval_cmd->callback([&] { run_eval(eval_checkpoint, eval_args, eval_out); });

  // bench-estimators
  auto* bench_cmd = app.add_subcommand(
      "bench-estimators", "Monte-Carlo risk of MLE/JS/MAP estimators vs closed forms");
  std::vector<Index> bench_p = {3, 10, 50};
  std::vector<double> bench_sigma = {1.0};
  std::vector<double> bench_tau = {2.0};
  std::vector<double> bench_norms = {0.0, 1.0, 10.0};
  long bench_trials = 10000;
  std::uint64_t bench_seed = 1;
  std::string bench_out;
  bench_cmd->add_option("--p", bench_p, "dimensions [3,10,50]")->delimiter(',');
  bench_cmd->add_option("--sigma", bench_sigma, "observation stds [1]")->delimiter(',');
  bench_cmd->add_option("--tau", bench_tau, "prior stds, hierarchical mode [2]")
      ->delimiter(',');
  bench_cmd->add_option("--theta-norm", bench_norms,
                        "fixed-truth norms, fixed mode [0,1,10]")
      ->delimiter(',');
  bench_cmd->add_option("--trials", bench_trials, "Monte-Carlo trials, minimum 1000 [10000]");
  bench_cmd->add_option("--seed", bench_seed, "random seed [1]");
  bench_cmd->add_option("--out", bench_out, "also write the JSON report here");
  bench_cmd->callback([&] {
    run_bench(bench_p, bench_sigma, bench_tau, bench_norms, bench_trials, bench_seed,
              bench_out);
  });

  // ablate
  auto* ablate_cmd =
      app.add_subcommand("ablate", "train loss-set variants (or a noise toggle) and compare");
  TrainArgs ablate_args;
  ablate_args.attach(ablate_cmd);
  std::string ablate_variants = "sure+ins+clu,ins";
  std::vector<std::uint64_t> ablate_seeds;
  bool ablate_noise_toggle = false;
  ablate_cmd->add_option("--variants", ablate_variants,
                         "comma-separated loss sets [sure+ins+clu,ins]");
  ablate_cmd->add_option("--seeds", ablate_seeds, "seeds, comma separated [--seed]")
      ->delimiter(',');
  ablate_cmd->add_flag("--noise-toggle", ablate_noise_toggle,
                       "run the augmentation-noise on/off experiment instead");
  ablate_cmd->callback(
      [&] { run_ablate(ablate_args, ablate_variants, ablate_seeds, ablate_noise_toggle); });

  // downsample
  auto* down_cmd = app.add_subcommand("downsample", "remove a fraction of cells");
  std::string down_data, down_labels, down_mode = "stratified", down_out = "out";
  double down_rate = 0.5;
  std::uint64_t down_seed = 1;
  down_cmd->add_option("--data", down_data, "input matrix (.csv/.tsv)")->required();
  down_cmd->add_option("--labels", down_labels, "label sidecar (required for stratified)");
  down_cmd->add_option("--rate", down_rate, "fraction of cells to remove [0.5]");
  down_cmd->add_option("--mode", down_mode, "random or stratified [stratified]");
  down_cmd->add_option("--seed", down_seed, "random seed [1]");
  down_cmd->add_option("--out", down_out, "output directory [out]");
  down_cmd->callback(
      [&] { run_downsample(down_data, down_labels, down_rate, down_mode, down_seed, down_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
