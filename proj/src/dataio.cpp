#include "shrinkcl/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace shrinkcl {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

std::vector<std::string> read_lines(const std::string& path, const char* what) {
  std::ifstream in(path);
  ensure(in.good(), std::string(what) + ": cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  // A trailing newline produces no phantom record; interior blank lines do.
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

bool parse_double(const std::string& field, double& out) {
  const std::string t = trim(field);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_int(const std::string& field, long long& out) {
  const std::string t = trim(field);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string coord(std::size_t row1, std::size_t col1) {
  return "(row " + std::to_string(row1) + ", col " + std::to_string(col1) + ")";
}

// Label tokens are kept verbatim when every one is a nonnegative integer;
// otherwise they are treated as strings and enumerated by first appearance.
std::vector<Index> labels_from_tokens(const std::vector<std::string>& tokens,
                                      const char* what) {
  std::vector<Index> out;
  out.reserve(tokens.size());
  bool all_int = true;
  for (const auto& tok : tokens) {
    long long v = 0;
    if (!parse_int(tok, v) || v < 0) {
      all_int = false;
      break;
    }
    out.push_back(static_cast<Index>(v));
  }
  if (all_int) return out;
  out.clear();
  std::map<std::string, Index> ids;
  for (const auto& tok : tokens) {
    const std::string t = trim(tok);
    ensure(!t.empty(), std::string(what) + ": empty label");
    auto [it, inserted] = ids.emplace(t, static_cast<Index>(ids.size()));
    out.push_back(it->second);
  }
  return out;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void ExpressionMatrix::validate() const {
  ensure(values.rows() >= 1 && values.cols() >= 1, "expression matrix is empty");
  ensure(static_cast<Index>(cell_ids.size()) == values.rows(),
         "cell id count " + std::to_string(cell_ids.size()) +
             " does not match row count " + std::to_string(values.rows()));
  ensure(static_cast<Index>(gene_ids.size()) == values.cols(),
         "gene id count " + std::to_string(gene_ids.size()) +
             " does not match column count " + std::to_string(values.cols()));
  if (labels) {
    ensure(static_cast<Index>(labels->size()) == values.rows(),
           "label count " + std::to_string(labels->size()) +
               " does not match cell count " + std::to_string(values.rows()));
    for (Index v : *labels) ensure(v >= 0, "negative cluster label");
  }
  ensure_finite(values, "expression matrix");
}

ExpressionMatrix load_csv(const std::string& path, const CsvOptions& options) {
  const auto lines = read_lines(path, "load_csv");
  ensure(lines.size() >= 2, "load_csv: '" + path + "' needs a header and at least one data row");

  char delim = options.delimiter;
  if (delim == 0) delim = lines[0].find('\t') != std::string::npos ? '\t' : ',';

  auto header = split(lines[0], delim);
  ensure(header.size() >= 2, "load_csv: header row has no gene columns");
  const bool has_label_col = trim(header.back()) == "label";
  const std::size_t n_genes = header.size() - 1 - (has_label_col ? 1 : 0);
  ensure(n_genes >= 1, "load_csv: header row has no gene columns");

  ExpressionMatrix x;
  x.gene_ids.reserve(n_genes);
  for (std::size_t j = 0; j < n_genes; ++j) x.gene_ids.push_back(trim(header[j + 1]));

  const std::size_t n_cells = lines.size() - 1;
  x.values.resize(static_cast<Index>(n_cells), static_cast<Index>(n_genes));
  x.cell_ids.reserve(n_cells);
  std::vector<std::string> label_tokens;

  for (std::size_t i = 0; i < n_cells; ++i) {
    const std::size_t row1 = i + 2;  // header is row 1
    auto fields = split(lines[i + 1], delim);
    ensure(fields.size() == header.size(),
           "load_csv: row " + std::to_string(row1) + " has " +
               std::to_string(fields.size()) + " fields, expected " +
               std::to_string(header.size()));
    x.cell_ids.push_back(trim(fields[0]));
    for (std::size_t j = 0; j < n_genes; ++j) {
      double v = 0.0;
      ensure(parse_double(fields[j + 1], v),
             "load_csv: unparseable value '" + trim(fields[j + 1]) + "' at " +
                 coord(row1, j + 2));
      ensure(std::isfinite(v), "load_csv: non-finite value at " + coord(row1, j + 2));
      ensure(options.allow_negative || v >= 0.0,
             "load_csv: negative value at " + coord(row1, j + 2));
      x.values(static_cast<Index>(i), static_cast<Index>(j)) = v;
    }
    if (has_label_col) label_tokens.push_back(fields.back());
  }
  if (has_label_col) x.labels = labels_from_tokens(label_tokens, "load_csv");
  x.validate();
  return x;
}

ExpressionMatrix load_matrix_market(const std::string& mtx_path,
                                    const std::string& genes_path,
                                    const std::string& cells_path,
                                    const std::string& labels_path) {
  const auto lines = read_lines(mtx_path, "load_matrix_market");
  ensure(!lines.empty(), "load_matrix_market: '" + mtx_path + "' is empty");

  std::istringstream banner(lines[0]);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  auto lower = [](std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  ensure(lower(tag) == "%%matrixmarket" && lower(object) == "matrix",
         "load_matrix_market: missing '%%MatrixMarket matrix' banner");
  ensure(lower(format) == "coordinate",
         "load_matrix_market: only coordinate format is supported, got '" + format + "'");
  field = lower(field);
  ensure(field == "real" || field == "integer" || field == "pattern",
         "load_matrix_market: unsupported field type '" + field + "'");
  ensure(lower(symmetry) == "general",
         "load_matrix_market: only general symmetry is supported, got '" + symmetry + "'");
  const bool pattern = field == "pattern";

  std::size_t pos = 1;
  while (pos < lines.size() && (lines[pos].empty() || lines[pos][0] == '%')) ++pos;
  ensure(pos < lines.size(), "load_matrix_market: missing size line");
  long long rows = 0, cols = 0, nnz = 0;
  {
    std::istringstream size_line(lines[pos]);
    size_line >> rows >> cols >> nnz;
    ensure(!size_line.fail() && rows > 0 && cols > 0 && nnz >= 0,
           "load_matrix_market: bad size line '" + lines[pos] + "'");
  }
  ++pos;

  Matrix stored = Matrix::Zero(static_cast<Index>(rows), static_cast<Index>(cols));
  long long seen = 0;
  for (; pos < lines.size() && seen < nnz; ++pos) {
    if (trim(lines[pos]).empty() || lines[pos][0] == '%') continue;
    std::istringstream entry(lines[pos]);
    long long i = 0, j = 0;
    double v = 1.0;
    entry >> i >> j;
    if (!pattern) entry >> v;
    ensure(!entry.fail(), "load_matrix_market: bad entry on line " + std::to_string(pos + 1));
    ensure(i >= 1 && i <= rows && j >= 1 && j <= cols,
           "load_matrix_market: index (" + std::to_string(i) + ", " + std::to_string(j) +
               ") out of bounds for " + std::to_string(rows) + " x " +
               std::to_string(cols) + " on line " + std::to_string(pos + 1));
    // Duplicate coordinates accumulate.
    stored(static_cast<Index>(i - 1), static_cast<Index>(j - 1)) += v;
    ++seen;
  }
  ensure(seen == nnz, "load_matrix_market: expected " + std::to_string(nnz) +
                          " entries, found " + std::to_string(seen));

  ExpressionMatrix x;
  x.gene_ids = read_lines(genes_path, "load_matrix_market genes");
  x.cell_ids = read_lines(cells_path, "load_matrix_market cells");
  for (auto& s : x.gene_ids) s = trim(s);
  for (auto& s : x.cell_ids) s = trim(s);
  const auto n_genes = static_cast<long long>(x.gene_ids.size());
  const auto n_cells = static_cast<long long>(x.cell_ids.size());

  if (rows == n_cells && cols == n_genes) {
    x.values = std::move(stored);
  } else if (rows == n_genes && cols == n_cells) {
    x.values = stored.transpose();
  } else {
    fail("load_matrix_market: matrix is " + std::to_string(rows) + " x " +
         std::to_string(cols) + " but companion files describe " +
         std::to_string(n_cells) + " cells and " + std::to_string(n_genes) + " genes");
  }
  ensure(x.values.minCoeff() >= 0.0, "load_matrix_market: negative value after densifying");

  if (!labels_path.empty()) attach_labels_file(x, labels_path);
  x.validate();
  return x;
}

void attach_labels_file(ExpressionMatrix& x, const std::string& path) {
  const auto lines = read_lines(path, "attach_labels_file");
  ensure(static_cast<Index>(lines.size()) == x.n_cells(),
         "attach_labels_file: " + std::to_string(lines.size()) + " labels for " +
             std::to_string(x.n_cells()) + " cells");
  x.labels = labels_from_tokens(lines, "attach_labels_file");
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  ensure(ec == std::errc(), "format_double failed");
  return std::string(buf, ptr);
}

void write_csv(const ExpressionMatrix& x, const std::string& path, bool include_labels) {
  x.validate();
  const bool with_labels = include_labels && x.has_labels();
  std::ofstream out(path);
  ensure(out.good(), "write_csv: cannot open '" + path + "' for writing");
  out << "cell_id";
  for (const auto& g : x.gene_ids) out << ',' << g;
  if (with_labels) out << ",label";
  out << '\n';
  for (Index i = 0; i < x.n_cells(); ++i) {
    out << x.cell_ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < x.n_genes(); ++j) out << ',' << format_double(x.values(i, j));
    if (with_labels) out << ',' << (*x.labels)[static_cast<std::size_t>(i)];
    out << '\n';
  }
  ensure(out.good(), "write_csv: write to '" + path + "' failed");
}

void write_labels(const ExpressionMatrix& x, const std::string& path) {
  ensure(x.has_labels(), "write_labels: matrix carries no labels");
  std::ofstream out(path);
  ensure(out.good(), "write_labels: cannot open '" + path + "' for writing");
  for (Index v : *x.labels) out << v << '\n';
  ensure(out.good(), "write_labels: write to '" + path + "' failed");
}

void PreprocessConfig::validate(Index n_genes) const {
  ensure(n_top_genes >= 0, "preprocess: n_top_genes must be nonnegative");
  ensure(n_top_genes <= n_genes,
         "preprocess: n_top_genes " + std::to_string(n_top_genes) + " exceeds gene count " +
             std::to_string(n_genes));
}

ExpressionMatrix preprocess(const ExpressionMatrix& x, const PreprocessConfig& cfg) {
  x.validate();
  cfg.validate(x.n_genes());
  ExpressionMatrix out = x;

  if (cfg.normalize_library_size) {
    std::vector<double> totals(static_cast<std::size_t>(out.n_cells()));
    for (Index i = 0; i < out.n_cells(); ++i) {
      const double t = out.values.row(i).sum();
      ensure(t > 0.0, "preprocess: cell '" + out.cell_ids[static_cast<std::size_t>(i)] +
                          "' (row " + std::to_string(i) + ") has nonpositive total count");
      totals[static_cast<std::size_t>(i)] = t;
    }
    const double target = median_of(totals);
    for (Index i = 0; i < out.n_cells(); ++i) {
      out.values.row(i) *= target / totals[static_cast<std::size_t>(i)];
    }
  }

  if (cfg.log1p) {
    ensure(out.values.minCoeff() > -1.0, "preprocess: log1p needs values > -1");
    out.values = out.values.array().log1p();
  }

  if (cfg.n_top_genes > 0 && cfg.n_top_genes < out.n_genes()) {
    const Index n = out.n_cells();
    ensure(n >= 2, "preprocess: variance ranking needs at least 2 cells");
    Vector var(out.n_genes());
    for (Index j = 0; j < out.n_genes(); ++j) {
      const double mean = out.values.col(j).mean();
      var(j) = (out.values.col(j).array() - mean).square().sum() / static_cast<double>(n - 1);
    }
    std::vector<Index> order(static_cast<std::size_t>(out.n_genes()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return var(a) > var(b); });
    std::vector<Index> keep(order.begin(), order.begin() + cfg.n_top_genes);
    std::sort(keep.begin(), keep.end());

    Matrix kept(out.n_cells(), cfg.n_top_genes);
    std::vector<std::string> kept_ids;
    kept_ids.reserve(static_cast<std::size_t>(cfg.n_top_genes));
    for (Index j = 0; j < cfg.n_top_genes; ++j) {
      kept.col(j) = out.values.col(keep[static_cast<std::size_t>(j)]);
      kept_ids.push_back(out.gene_ids[static_cast<std::size_t>(keep[static_cast<std::size_t>(j)])]);
    }
    out.values = std::move(kept);
    out.gene_ids = std::move(kept_ids);
  }

  if (cfg.standardize) {
    const Index n = out.n_cells();
    ensure(n >= 2, "preprocess: standardization needs at least 2 cells");
    for (Index j = 0; j < out.n_genes(); ++j) {
      const double mean = out.values.col(j).mean();
      out.values.col(j).array() -= mean;
      const double sd =
          std::sqrt(out.values.col(j).squaredNorm() / static_cast<double>(n - 1));
      if (sd > 0.0) out.values.col(j) /= sd;
    }
  }

  out.validate();
  return out;
}

void SynthConfig::validate() const {
  ensure(n_cells >= 2, "synth: need at least 2 cells");
  ensure(n_genes >= 1, "synth: need at least 1 gene");
  ensure(n_clusters >= 1, "synth: need at least 1 cluster");
  ensure(n_clusters <= n_cells,
         "synth: n_clusters " + std::to_string(n_clusters) + " exceeds n_cells " +
             std::to_string(n_cells));
  ensure(centroid_scale >= 0.0, "synth: centroid_scale must be nonnegative");
  ensure(within_std >= 0.0, "synth: within_std must be nonnegative");
  ensure(dropout_rate >= 0.0 && dropout_rate <= 1.0, "synth: dropout_rate must be in [0, 1]");
  if (cluster_weights) {
    ensure(static_cast<Index>(cluster_weights->size()) == n_clusters,
           "synth: cluster_weights size must equal n_clusters");
    double total = 0.0;
    for (double w : *cluster_weights) {
      ensure(w >= 0.0, "synth: cluster weights must be nonnegative");
      total += w;
    }
    ensure(std::abs(total - 1.0) <= 1e-9, "synth: cluster weights must sum to 1");
  }
}

ExpressionMatrix synth(const SynthConfig& cfg, Pcg32& rng) {
  cfg.validate();
  const Index n = cfg.n_cells, g = cfg.n_genes, k = cfg.n_clusters;

  const Matrix centroids = gaussian_sample(rng, k, g, 0.0, cfg.centroid_scale);

  // Largest-remainder allocation of cells to clusters, then a shuffle so
  // class blocks are not contiguous in row order.
  std::vector<double> weights =
      cfg.cluster_weights ? *cfg.cluster_weights
                          : std::vector<double>(static_cast<std::size_t>(k),
                                                1.0 / static_cast<double>(k));
  std::vector<Index> counts(static_cast<std::size_t>(k), 0);
  std::vector<std::pair<double, Index>> remainders;
  Index assigned = 0;
  for (Index c = 0; c < k; ++c) {
    const double quota = weights[static_cast<std::size_t>(c)] * static_cast<double>(n);
    counts[static_cast<std::size_t>(c)] = static_cast<Index>(std::floor(quota));
    assigned += counts[static_cast<std::size_t>(c)];
    remainders.emplace_back(quota - std::floor(quota), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (Index extra = 0; extra < n - assigned; ++extra) {
    counts[static_cast<std::size_t>(remainders[static_cast<std::size_t>(extra)].second)] += 1;
  }

  std::vector<Index> labels;
  labels.reserve(static_cast<std::size_t>(n));
  for (Index c = 0; c < k; ++c) {
    labels.insert(labels.end(), static_cast<std::size_t>(counts[static_cast<std::size_t>(c)]), c);
  }
  shuffle(labels, rng);

  ExpressionMatrix x;
  x.values.resize(n, g);
  for (Index i = 0; i < n; ++i) {
    const auto row = centroids.row(labels[static_cast<std::size_t>(i)]);
    if (cfg.within_std > 0.0) {
      for (Index j = 0; j < g; ++j) x.values(i, j) = row(j) + rng.normal(0.0, cfg.within_std);
    } else {
      x.values.row(i) = row;
    }
  }
  if (cfg.dropout_rate > 0.0) {
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < g; ++j) {
        if (rng.next_double() < cfg.dropout_rate) x.values(i, j) = 0.0;
      }
    }
  }

  x.cell_ids.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) x.cell_ids.push_back("cell_" + std::to_string(i));
  x.gene_ids.reserve(static_cast<std::size_t>(g));
  for (Index j = 0; j < g; ++j) x.gene_ids.push_back("gene_" + std::to_string(j));
  x.labels = std::move(labels);
  x.validate();
  return x;
}

DownsampleMode downsample_mode_from_string(const std::string& s) {
  if (s == "random") return DownsampleMode::Random;
  if (s == "stratified") return DownsampleMode::Stratified;
  fail("unknown downsample mode '" + s + "' (expected random or stratified)");
}

std::string to_string(DownsampleMode mode) {
  return mode == DownsampleMode::Random ? "random" : "stratified";
}

ExpressionMatrix downsample(const ExpressionMatrix& x, double rate, DownsampleMode mode,
                            Pcg32& rng) {
  x.validate();
  ensure(rate > 0.0 && rate < 1.0, "downsample: rate must lie strictly between 0 and 1");
  const Index n = x.n_cells();
  const auto m = static_cast<Index>(
      std::ceil((1.0 - rate) * static_cast<double>(n) - 1e-12));
  ensure(m >= 1, "downsample: nothing would remain");

  std::vector<Index> kept;
  if (mode == DownsampleMode::Random) {
    auto perm = shuffled_indices(n, rng);
    kept.assign(perm.begin(), perm.begin() + m);
  } else {
    ensure(x.has_labels(), "downsample: stratified mode requires labels");
    Index k = 0;
    for (Index v : *x.labels) k = std::max(k, v + 1);
    std::vector<std::vector<Index>> members(static_cast<std::size_t>(k));
    for (Index i = 0; i < n; ++i) {
      members[static_cast<std::size_t>((*x.labels)[static_cast<std::size_t>(i)])].push_back(i);
    }

    std::vector<Index> alloc(static_cast<std::size_t>(k), 0);
    std::vector<std::pair<double, Index>> remainders;
    Index assigned = 0;
    for (Index c = 0; c < k; ++c) {
      const double quota = static_cast<double>(m) *
                           static_cast<double>(members[static_cast<std::size_t>(c)].size()) /
                           static_cast<double>(n);
      alloc[static_cast<std::size_t>(c)] = static_cast<Index>(std::floor(quota));
      assigned += alloc[static_cast<std::size_t>(c)];
      remainders.emplace_back(quota - std::floor(quota), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (Index extra = 0; extra < m - assigned; ++extra) {
      alloc[static_cast<std::size_t>(remainders[static_cast<std::size_t>(extra)].second)] += 1;
    }
    // Keep every class with >= 2 members represented: move one slot from the
    // best-served class whenever rounding dropped such a class to zero.
    for (Index c = 0; c < k; ++c) {
      if (alloc[static_cast<std::size_t>(c)] > 0 ||
          members[static_cast<std::size_t>(c)].size() < 2) {
        continue;
      }
      Index donor = -1;
      for (Index d = 0; d < k; ++d) {
        if (alloc[static_cast<std::size_t>(d)] >= 2 &&
            (donor < 0 ||
             alloc[static_cast<std::size_t>(d)] > alloc[static_cast<std::size_t>(donor)])) {
          donor = d;
        }
      }
      if (donor < 0) break;  // too few kept cells to represent everyone
      alloc[static_cast<std::size_t>(donor)] -= 1;
      alloc[static_cast<std::size_t>(c)] += 1;
    }

    for (Index c = 0; c < k; ++c) {
      auto& pool = members[static_cast<std::size_t>(c)];
      shuffle(pool, rng);
      kept.insert(kept.end(), pool.begin(),
                  pool.begin() + alloc[static_cast<std::size_t>(c)]);
    }
  }
  std::sort(kept.begin(), kept.end());

  ExpressionMatrix out;
  out.values.resize(static_cast<Index>(kept.size()), x.n_genes());
  out.cell_ids.reserve(kept.size());
  std::vector<Index> new_labels;
  if (x.has_labels()) new_labels.reserve(kept.size());
  for (std::size_t r = 0; r < kept.size(); ++r) {
    out.values.row(static_cast<Index>(r)) = x.values.row(kept[r]);
    out.cell_ids.push_back(x.cell_ids[static_cast<std::size_t>(kept[r])]);
    if (x.has_labels()) new_labels.push_back((*x.labels)[static_cast<std::size_t>(kept[r])]);
  }
  out.gene_ids = x.gene_ids;
  if (x.has_labels()) out.labels = std::move(new_labels);
  out.validate();
  return out;
}

}  // namespace shrinkcl
