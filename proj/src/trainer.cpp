#include "shrinkcl/trainer.hpp"

#include "shrinkcl/parallel.hpp"
#include "shrinkcl/rng.hpp"
#include "shrinkcl/tape.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <utility>

namespace shrinkcl {

namespace {

// Sub-stream tags; every random decision in a run hangs off (seed, tag)
// or (seed, epoch, tag) so runs are reproducible and ablation arms sharing
// a seed see identical augmentations and batch orders.
constexpr std::uint64_t kInitTag = 0x1217;
constexpr std::uint64_t kShuffleTag = 0x5346;
constexpr std::uint64_t kKmeansTag = 0x4b4d;
constexpr std::uint64_t kViewATag = 0xA;
constexpr std::uint64_t kViewBTag = 0xB;
constexpr std::uint64_t kEvalKmeansTag = 0xE01;
constexpr std::uint64_t kEvalAugTag = 0xE02;

std::vector<Index> with_input(Index input, const std::vector<Index>& rest,
                              Index output = -1) {
  std::vector<Index> widths;
  widths.push_back(input);
  widths.insert(widths.end(), rest.begin(), rest.end());
  if (output >= 0) widths.push_back(output);
  return widths;
}

// Uniform view over a trainable parameter block (weight matrix or bias
// row); both are contiguous, so a Map works for either.
struct ParamView {
  double* data = nullptr;
  Index rows = 0;
  Index cols = 0;
};

void collect_views(MlpParams& p, std::vector<ParamView>& out) {
  for (auto& layer : p.layers) {
    out.push_back({layer.w.data(), layer.w.rows(), layer.w.cols()});
    out.push_back({layer.b.data(), Index{1}, layer.b.cols()});
  }
}

void collect_vars(const MlpVars& v, std::vector<ad::Var>& out) {
  for (const auto& [w, b] : v.layers) {
    out.push_back(w);
    out.push_back(b);
  }
}

struct AdamState {
  std::vector<Matrix> m, v;
  long t = 0;
};

void adam_step(const TrainConfig& cfg, AdamState& adam,
               const std::vector<ParamView>& params, const std::vector<Matrix>& grads) {
  ensure(params.size() == grads.size(), "optimizer: parameter/gradient count mismatch");
  if (adam.m.empty()) {
    adam.m.resize(params.size());
    adam.v.resize(params.size());
  }
  adam.t += 1;
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam.t));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    ensure(g.rows() == params[i].rows && g.cols() == params[i].cols,
           "optimizer: gradient shape mismatch");
    Matrix& m = adam.m[i];
    Matrix& v = adam.v[i];
    if (m.size() == 0) {
      m = Matrix::Zero(g.rows(), g.cols());
      v = Matrix::Zero(g.rows(), g.cols());
    }
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
    Eigen::Map<Matrix> p(params[i].data, params[i].rows, params[i].cols);
    p.array() -= cfg.learning_rate * (m.array() / c1) /
                 ((v.array() / c2).sqrt() + cfg.adam_eps);
  }
}

using json = nlohmann::ordered_json;

json eval_to_json(const EvalResult& e) {
  json j;
  if (e.ari_argmax) j["ari_argmax"] = *e.ari_argmax;
  if (e.nmi_argmax) j["nmi_argmax"] = *e.nmi_argmax;
  if (e.ari_kmeans) j["ari_kmeans"] = *e.ari_kmeans;
  if (e.nmi_kmeans) j["nmi_kmeans"] = *e.nmi_kmeans;
  j["cos_gap"] = {{"mean_pos", e.cos_gap.mean_pos},
                  {"mean_neg", e.cos_gap.mean_neg},
                  {"gap", e.cos_gap.gap}};
  return j;
}

void write_json_file(const json& j, const std::string& path, const char* what) {
  std::ofstream out(path);
  ensure(out.good(), std::string(what) + ": cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  ensure(out.good(), std::string(what) + ": write to '" + path + "' failed");
}

}  // namespace

void LossSet::validate() const {
  ensure(sure || ins || clu, "loss set: at least one term must be enabled");
}

std::string LossSet::name() const {
  std::string out;
  auto append = [&out](const char* part) {
    if (!out.empty()) out += '+';
    out += part;
  };
  if (sure) append("sure");
  if (ins) append("ins");
  if (clu) append("clu");
  return out;
}

LossSet loss_set_from_string(const std::string& s) {
  LossSet set{false, false, false};
  std::string token;
  auto take = [&set](const std::string& t) {
    if (t == "sure") {
      set.sure = true;
    } else if (t == "ins") {
      set.ins = true;
    } else if (t == "clu") {
      set.clu = true;
    } else if (t == "full") {
      set.sure = set.ins = set.clu = true;
    } else {
      fail("unknown loss term '" + t + "' (expected sure, ins, clu or full)");
    }
  };
  for (char c : s) {
    if (c == ',' || c == '+') {
      if (!token.empty()) take(token);
      token.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      token += c;
    }
  }
  if (!token.empty()) take(token);
  set.validate();
  return set;
}

void TrainConfig::validate() const {
  ensure(k >= 2, "train config: k must be at least 2");
  ensure(epochs >= 1, "train config: epochs must be at least 1");
  ensure(batch_size >= 2, "train config: batch_size must be at least 2");
  ensure(learning_rate >= 0.0, "train config: learning_rate must be nonnegative");
  ensure(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "train config: adam_beta1 must lie in [0, 1)");
  ensure(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "train config: adam_beta2 must lie in [0, 1)");
  ensure(adam_eps > 0.0, "train config: adam_eps must be positive");
  ensure(alpha >= 0.0 && beta >= 0.0, "train config: loss weights must be nonnegative");
  ensure(momentum >= 0.0 && momentum <= 1.0, "train config: momentum must lie in [0, 1]");
  ensure(eval_every >= 1, "train config: eval_every must be at least 1");
  ensure(!encoder_widths.empty(), "train config: encoder needs at least one layer width");
  for (Index w : encoder_widths) ensure(w >= 1, "train config: encoder widths must be positive");
  ensure(!instance_head_widths.empty(),
         "train config: instance head needs at least one layer width");
  for (Index w : instance_head_widths)
    ensure(w >= 1, "train config: instance head widths must be positive");
  for (Index w : cluster_head_widths)
    ensure(w >= 1, "train config: cluster head widths must be positive");
  augment.validate();
  contrast.validate();
  KmeansConfig km = kmeans;
  km.k = k;
  km.validate();
  losses.validate();
}

EvalResult evaluate_model(const Model& m, const ExpressionMatrix& x) {
  x.validate();
  ensure(m.encoder.query.spec.input_dim() == x.n_genes(),
         "evaluate: checkpoint expects " + std::to_string(m.encoder.query.spec.input_dim()) +
             " genes, data has " + std::to_string(x.n_genes()));
  const Matrix h = forward_features(m.encoder.query, x.values);

  EvalResult r;
  r.labels_argmax = assign_final(project_cluster(m.heads.cluster, h));

  KmeansConfig km;
  km.k = m.k;
  Pcg32 km_rng(mix64(m.train_seed, kEvalKmeansTag));
  r.labels_kmeans = kmeans(h, km, km_rng).labels;

  const std::uint64_t aug_seed = mix64(m.train_seed, kEvalAugTag);
  const Matrix va = augment_view(x.values, m.augment, aug_seed, kViewATag);
  const Matrix vb = augment_view(x.values, m.augment, aug_seed, kViewBTag);
  const Matrix za = project_instance(m.heads.instance, forward_features(m.encoder.query, va));
  const Matrix zb = project_instance(m.heads.instance, forward_features(m.encoder.key, vb));
  r.cos_gap = cosine_gap(za, zb);

  if (x.has_labels()) {
    r.ari_argmax = ari(*x.labels, r.labels_argmax);
    r.nmi_argmax = nmi(*x.labels, r.labels_argmax);
    r.ari_kmeans = ari(*x.labels, r.labels_kmeans);
    r.nmi_kmeans = nmi(*x.labels, r.labels_kmeans);
  }
  return r;
}

TrainResult train(const ExpressionMatrix& x, const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  x.validate();
  cfg.validate();
  const Index n = x.n_cells();
  const Index g = x.n_genes();
  ensure(n >= 2, "train: need at least 2 cells");
  ensure(g >= 3, "train: need at least 3 genes");
  ensure(cfg.k <= n, "train: k exceeds the number of cells");
  const Index batch = std::min(cfg.batch_size, n);

  MlpSpec enc_spec{with_input(g, cfg.encoder_widths), Activation::Relu};
  const Index embed = enc_spec.output_dim();
  MlpSpec ins_spec{with_input(embed, cfg.instance_head_widths), Activation::Relu};
  MlpSpec clu_spec{with_input(embed, cfg.cluster_head_widths, cfg.k), Activation::Relu};

  Pcg32 init_rng(mix64(cfg.seed, kInitTag));
  Model model;
  model.encoder = init_encoder_pair(enc_spec, cfg.momentum, init_rng);
  model.heads.instance = init_mlp(ins_spec, init_rng);
  model.heads.cluster = init_mlp(clu_spec, init_rng);
  model.k = cfg.k;
  model.augment = cfg.augment;
  model.train_seed = cfg.seed;

  KmeansConfig km = cfg.kmeans;
  km.k = cfg.k;

  TrainReport report;
  report.epochs.reserve(static_cast<std::size_t>(cfg.epochs));
  report.n_cells = n;
  report.n_genes = g;
  report.k = cfg.k;
  report.seed = cfg.seed;
  report.losses = cfg.losses;
  report.alpha = cfg.alpha;
  report.beta = cfg.beta;

  AdamState adam;
  Model best = model;
  double best_monitored = std::numeric_limits<double>::infinity();
  std::vector<Index> labels_prev;
  ClusterStats stats_prev;
  bool have_prev = false;

  for (int epoch = 1; epoch <= cfg.epochs + 1; ++epoch) {
    // The pass at epochs + 1 only closes the books: it scores the final
    // parameters against the last frozen statistics.
    const bool boundary_only = epoch == cfg.epochs + 1;
    const std::uint64_t seed_e = mix64(cfg.seed, static_cast<std::uint64_t>(epoch));
    const Matrix view_a = augment_view(x.values, cfg.augment, seed_e, kViewATag);
    const Matrix h_full = forward_features(model.encoder.query, view_a);

    if (have_prev) {
      const double monitored =
          sure_loss(h_full, labels_prev, stats_prev, DegeneratePolicy::Skip);
      report.epochs[static_cast<std::size_t>(epoch - 2)].monitored_sure = monitored;
      if (monitored < best_monitored) {
        best_monitored = monitored;
        best = model;
        best.best_epoch = epoch - 1;
      }
    }
    if (boundary_only) break;

    EpochRecord rec;
    rec.epoch = epoch;
    const Matrix view_b = augment_view(x.values, cfg.augment, seed_e, kViewBTag);

    KmeansResult kr;
    ClusterStats stats;
    try {
      Pcg32 km_rng(mix64(seed_e, kKmeansTag));
      kr = kmeans(h_full, km, km_rng);
      stats = cluster_stats(h_full, kr.labels, cfg.k);
      rec.sure_identity = sure_loss(h_full, kr.labels, stats, DegeneratePolicy::Skip);
      ensure(std::abs(rec.sure_identity) <=
                 1e-8 * static_cast<double>(n) * static_cast<double>(embed),
             "telescoping shrinkage-loss identity violated (residual " +
                 std::to_string(rec.sure_identity) + ")");
    } catch (const Error& e) {
      fail("epoch " + std::to_string(epoch) + ": " + e.what());
    }

    Pcg32 shuffle_rng(mix64(seed_e, kShuffleTag));
    const auto order = shuffled_indices(n, shuffle_rng);

    // Consecutive chunks of the shuffled order; a trailing singleton is
    // folded into the previous chunk so every step sees at least 2 cells.
    std::vector<std::pair<Index, Index>> chunks;
    for (Index start = 0; start < n; start += batch) {
      chunks.emplace_back(start, std::min(batch, n - start));
    }
    if (chunks.size() >= 2 && chunks.back().second == 1) {
      chunks.pop_back();
      chunks.back().second += 1;
    }

    double sum_sure = 0.0, sum_ins = 0.0, sum_clu = 0.0, sum_gap = 0.0;
    int steps = 0;
    for (const auto& [start, b] : chunks) {
      ++steps;
      try {
        Matrix xa(b, g), xb(b, g);
        std::vector<Index> batch_labels(static_cast<std::size_t>(b));
        for (Index r = 0; r < b; ++r) {
          const Index idx = order[static_cast<std::size_t>(start + r)];
          xa.row(r) = view_a.row(idx);
          xb.row(r) = view_b.row(idx);
          batch_labels[static_cast<std::size_t>(r)] = kr.labels[static_cast<std::size_t>(idx)];
        }

        ad::Tape tape;
        MlpVars fq = register_params(tape, model.encoder.query);
        MlpVars gi = register_params(tape, model.heads.instance);
        MlpVars gc = register_params(tape, model.heads.cluster);
        const ad::Var xa_const = tape.constant(xa);
        const ad::Var h_a = forward_features(tape, fq, xa_const);
        const Matrix h_b = forward_features(model.encoder.key, xb);
        const ad::Var h_b_const = tape.constant(h_b);

        // Representation diagnostic, measured on pre-step parameters and
        // identically across loss arms.
        sum_gap += cosine_gap(project_instance(model.heads.instance, h_a.value()),
                              project_instance(model.heads.instance, h_b))
                       .gap;

        double l_sure = 0.0, l_ins = 0.0, l_clu = 0.0;
        std::optional<ad::Var> objective;
        auto add_term = [&objective](const ad::Var& term) {
          objective = objective ? *objective + term : term;
        };
        if (cfg.losses.sure) {
          const ad::Var ls =
              sure_loss(tape, h_a, batch_labels, stats, DegeneratePolicy::Skip);
          l_sure = ls.scalar();
          add_term(ls);
        }
        if (cfg.losses.ins) {
          const ad::Var za = project_instance(tape, gi, h_a);
          const ad::Var zb = project_instance(tape, gi, h_b_const);
          const ad::Var li = instance_loss(tape, za, zb, cfg.contrast);
          l_ins = li.scalar();
          add_term(cfg.alpha * li);
        }
        if (cfg.losses.clu) {
          const ad::Var ya = project_cluster(tape, gc, h_a);
          const ad::Var yb = project_cluster(tape, gc, h_b_const);
          const ad::Var lc = cluster_loss(tape, ya, yb, cfg.contrast);
          l_clu = lc.scalar();
          add_term(cfg.beta * lc);
        }
        tape.backward(*objective);

        std::vector<ad::Var> vars;
        collect_vars(fq, vars);
        collect_vars(gi, vars);
        collect_vars(gc, vars);
        std::vector<Matrix> grads;
        grads.reserve(vars.size());
        for (const auto& v : vars) grads.push_back(tape.grad(v));

        std::vector<ParamView> params;
        collect_views(model.encoder.query, params);
        collect_views(model.heads.instance, params);
        collect_views(model.heads.cluster, params);
        adam_step(cfg, adam, params, grads);
        momentum_update(model.encoder);

        const LossBreakdown step_loss{l_sure, l_ins, l_clu,
                                      (l_sure + cfg.alpha * l_ins) + cfg.beta * l_clu,
                                      epoch, steps};
        sum_sure += step_loss.l_sure;
        sum_ins += step_loss.l_ins;
        sum_clu += step_loss.l_clu;
      } catch (const Error& e) {
        fail("epoch " + std::to_string(epoch) + ", step " + std::to_string(steps) + ": " +
             e.what());
      }
    }

    rec.steps = steps;
    const double d = static_cast<double>(steps);
    rec.l_sure = sum_sure / d;
    rec.l_ins = sum_ins / d;
    rec.l_clu = sum_clu / d;
    rec.total = (rec.l_sure + cfg.alpha * rec.l_ins) + cfg.beta * rec.l_clu;
    rec.cos_gap = sum_gap / d;

    if (x.has_labels() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      const Matrix h_clean = forward_features(model.encoder.query, x.values);
      const auto pred = assign_final(project_cluster(model.heads.cluster, h_clean));
      rec.ari = ari(*x.labels, pred);
      rec.nmi = nmi(*x.labels, pred);
    }

    report.epochs.push_back(std::move(rec));
    labels_prev = std::move(kr.labels);
    stats_prev = std::move(stats);
    have_prev = true;
  }

  report.best_epoch = best.best_epoch;
  report.best_monitored_sure = best_monitored;

  double gap_sum = 0.0;
  for (const auto& rec : report.epochs) gap_sum += rec.cos_gap;
  report.cos_gap_mean = gap_sum / static_cast<double>(report.epochs.size());
  if (report.epochs.size() > 1) {
    double ss = 0.0;
    for (const auto& rec : report.epochs) {
      const double dgap = rec.cos_gap - report.cos_gap_mean;
      ss += dgap * dgap;
    }
    report.cos_gap_var = ss / static_cast<double>(report.epochs.size() - 1);
  }

  report.final_eval = evaluate_model(best, x);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(best), std::move(report)};
}

std::vector<AblationRun> ablate(const ExpressionMatrix& x, const TrainConfig& base,
                                const std::vector<LossSet>& variants,
                                const std::vector<std::uint64_t>& seeds) {
  ensure(!variants.empty(), "ablate: need at least one loss-set variant");
  ensure(!seeds.empty(), "ablate: need at least one seed");
  for (const auto& v : variants) v.validate();

  std::vector<AblationRun> runs(variants.size() * seeds.size());
  parallel_runs(runs.size(), [&](std::size_t i) {
    const std::size_t vi = i / seeds.size();
    const std::size_t si = i % seeds.size();
    TrainConfig cfg = base;
    cfg.losses = variants[vi];
    cfg.seed = seeds[si];
    TrainResult tr = train(x, cfg);
    runs[i] = {variants[vi].name(), seeds[si],        tr.report.final_eval,
               tr.report.cos_gap_mean, tr.report.cos_gap_var, tr.report.best_epoch};
  });
  return runs;
}

NoiseToggleReport noise_toggle_experiment(const ExpressionMatrix& x,
                                          const TrainConfig& cfg) {
  NoiseToggleReport out;
  std::vector<EvalResult> arms(2);
  parallel_runs(2, [&](std::size_t i) {
    TrainConfig c = cfg;
    c.augment.noise_enabled = i == 0;
    arms[i] = train(x, c).report.final_eval;
  });
  out.with_noise = std::move(arms[0]);
  out.without_noise = std::move(arms[1]);
  if (out.with_noise.nmi_argmax && out.without_noise.nmi_argmax) {
    out.nmi_difference = *out.with_noise.nmi_argmax - *out.without_noise.nmi_argmax;
  }
  return out;
}

void write_report_json(const TrainReport& r, const std::string& path) {
  json j;
  j["format"] = "shrinkcl-report-v1";
  j["n_cells"] = r.n_cells;
  j["n_genes"] = r.n_genes;
  j["k"] = r.k;
  j["seed"] = r.seed;
  j["losses"] = {{"sure", r.losses.sure}, {"ins", r.losses.ins}, {"clu", r.losses.clu}};
  j["alpha"] = r.alpha;
  j["beta"] = r.beta;
  j["best_epoch"] = r.best_epoch;
  j["best_monitored_sure"] = r.best_monitored_sure;
  j["cos_gap_mean"] = r.cos_gap_mean;
  j["cos_gap_var"] = r.cos_gap_var;
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    json je;
    je["epoch"] = e.epoch;
    je["steps"] = e.steps;
    je["l_sure"] = e.l_sure;
    je["l_ins"] = e.l_ins;
    je["l_clu"] = e.l_clu;
    je["total"] = e.total;
    je["monitored_sure"] = e.monitored_sure;
    je["sure_identity"] = e.sure_identity;
    je["cos_gap"] = e.cos_gap;
    if (e.ari) je["ari"] = *e.ari;
    if (e.nmi) je["nmi"] = *e.nmi;
    epochs.push_back(std::move(je));
  }
  j["epochs"] = std::move(epochs);
  j["final"] = eval_to_json(r.final_eval);
  j["wall_clock_seconds"] = r.wall_clock_seconds;
  write_json_file(j, path, "write_report_json");
}

void write_curves_csv(const TrainReport& r, const std::string& path) {
  std::ofstream out(path);
  ensure(out.good(), "write_curves_csv: cannot open '" + path + "' for writing");
  out << "epoch,l_sure,l_ins,l_clu,total,ari,nmi,cos_gap,monitored_sure,sure_identity\n";
  for (const auto& e : r.epochs) {
    out << e.epoch << ',' << format_double(e.l_sure) << ',' << format_double(e.l_ins)
        << ',' << format_double(e.l_clu) << ',' << format_double(e.total) << ','
        << (e.ari ? format_double(*e.ari) : std::string()) << ','
        << (e.nmi ? format_double(*e.nmi) : std::string()) << ','
        << format_double(e.cos_gap) << ',' << format_double(e.monitored_sure) << ','
        << format_double(e.sure_identity) << '\n';
  }
  ensure(out.good(), "write_curves_csv: write to '" + path + "' failed");
}

void write_assignments_csv(const ExpressionMatrix& x, const EvalResult& eval,
                           const std::string& path) {
  ensure(static_cast<Index>(eval.labels_argmax.size()) == x.n_cells() &&
             static_cast<Index>(eval.labels_kmeans.size()) == x.n_cells(),
         "write_assignments_csv: label count does not match cell count");
  std::ofstream out(path);
  ensure(out.good(), "write_assignments_csv: cannot open '" + path + "' for writing");
  out << "cell_id,argmax,kmeans\n";
  for (Index i = 0; i < x.n_cells(); ++i) {
    out << x.cell_ids[static_cast<std::size_t>(i)] << ','
        << eval.labels_argmax[static_cast<std::size_t>(i)] << ','
        << eval.labels_kmeans[static_cast<std::size_t>(i)] << '\n';
  }
  ensure(out.good(), "write_assignments_csv: write to '" + path + "' failed");
}

void write_ablation_json(const std::vector<AblationRun>& runs, const std::string& path) {
  json j;
  j["format"] = "shrinkcl-ablation-v1";
  json rows = json::array();
  for (const auto& r : runs) {
    json row;
    row["arm"] = r.arm;
    row["seed"] = r.seed;
    row["best_epoch"] = r.best_epoch;
    row["cos_gap_mean"] = r.cos_gap_mean;
    row["cos_gap_var"] = r.cos_gap_var;
    row["final"] = eval_to_json(r.final_eval);
    rows.push_back(std::move(row));
  }
  j["runs"] = std::move(rows);
  write_json_file(j, path, "write_ablation_json");
}

void write_noise_toggle_json(const NoiseToggleReport& r, const std::string& path) {
  json j;
  j["format"] = "shrinkcl-noise-toggle-v1";
  j["with"] = eval_to_json(r.with_noise);
  j["without"] = eval_to_json(r.without_noise);
  j["difference"] = r.nmi_difference ? json(*r.nmi_difference) : json(nullptr);
  write_json_file(j, path, "write_noise_toggle_json");
}

}  // namespace shrinkcl
