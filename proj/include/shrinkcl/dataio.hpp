#pragma once

#include "shrinkcl/common.hpp"
#include "shrinkcl/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace shrinkcl {

/// Cells-by-genes expression data plus row/column identifiers and, when
/// known, a ground-truth cluster label per cell.
///
/// File loaders reject negative entries (counts and normalized expression
/// are nonnegative); matrices produced downstream of preprocessing or by
/// the Gaussian synthesizer may carry signed values.
struct ExpressionMatrix {
  Matrix values;  // N x G
  std::vector<std::string> cell_ids;
  std::vector<std::string> gene_ids;
  std::optional<std::vector<Index>> labels;

  Index n_cells() const { return values.rows(); }
  Index n_genes() const { return values.cols(); }
  bool has_labels() const { return labels.has_value(); }

  /// Internal-consistency check: id vectors match the matrix shape, labels
  /// (when present) match N and are nonnegative, values are finite.
  void validate() const;
};

struct CsvOptions {
  // 0 auto-detects: tab when the header line contains one, comma otherwise.
  char delimiter = 0;
  // Accept negative entries. Off for raw counts; the training/evaluation
  // input paths turn it on so standardized or synthesized (signed,
  // Gaussian) matrices load back in.
  bool allow_negative = false;
};

/// Parse a delimited text matrix. Layout: header row of gene ids with the
/// first field naming the cell-id column, one row per cell, optional final
/// `label` column (integers kept as-is when all are nonnegative integers,
/// otherwise values are enumerated in first-appearance order). Errors cite
/// 1-based file coordinates with the header as row 1 and the cell-id field
/// as column 1. No quoting support: ids must not contain the delimiter.
ExpressionMatrix load_csv(const std::string& path, const CsvOptions& options = {});

/// Read a coordinate-format sparse matrix (real, integer or pattern field,
/// general symmetry, 1-based indices, duplicate entries summed) and densify
/// it. The companion newline-delimited id files decide orientation: when
/// the stored shape is genes x cells the matrix is transposed so cells are
/// rows; a square file is taken as cells x genes as stored.
ExpressionMatrix load_matrix_market(const std::string& mtx_path,
                                    const std::string& genes_path,
                                    const std::string& cells_path,
                                    const std::string& labels_path = "");

/// Attach ground-truth labels from a newline-delimited file (same
/// integer-or-string rule as the CSV label column) to an existing matrix.
void attach_labels_file(ExpressionMatrix& x, const std::string& path);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

void write_csv(const ExpressionMatrix& x, const std::string& path,
               bool include_labels = false);
void write_labels(const ExpressionMatrix& x, const std::string& path);

/// Pipeline switches, applied in the fixed order normalize -> log1p ->
/// top-variance gene selection -> per-gene z-score. Defaults are the
/// identity so already-prepared matrices pass through untouched; the usual
/// recipe for raw counts turns everything on with n_top_genes = 2000.
struct PreprocessConfig {
  bool normalize_library_size = false;
  bool log1p = false;
  Index n_top_genes = 0;  // 0 keeps every gene
  bool standardize = false;

  void validate(Index n_genes) const;
};

/// Apply the enabled steps. Library-size normalization scales each cell to
/// the median total count and rejects cells with nonpositive totals. Gene
/// selection ranks by sample variance of the current (post-log1p) values
/// and keeps the winners in their original column order. Standardization
/// centers every gene and divides by the Bessel-corrected std when it is
/// positive, so constant genes become all-zero instead of NaN.
ExpressionMatrix preprocess(const ExpressionMatrix& x, const PreprocessConfig& cfg);

/// Two-level Gaussian generator: per-cluster centroids drawn with std
/// centroid_scale, cells scattered around their centroid with std
/// within_std, then entries zeroed independently with dropout_rate.
struct SynthConfig {
  Index n_cells = 1000;
  Index n_genes = 200;
  Index n_clusters = 5;
  double centroid_scale = 1.0;
  double within_std = 0.3;
  double dropout_rate = 0.0;
  std::optional<std::vector<double>> cluster_weights;  // default uniform

  void validate() const;
};

/// Cluster sizes follow the weights by largest remainder, labels are
/// shuffled so classes are not contiguous, and the true labels ride along
/// on the result. Draw order is fixed (centroids, label shuffle, cell
/// noise, dropout) so one seed pins the whole dataset.
ExpressionMatrix synth(const SynthConfig& cfg, Pcg32& rng);

enum class DownsampleMode { Random, Stratified };

DownsampleMode downsample_mode_from_string(const std::string& s);
std::string to_string(DownsampleMode mode);

/// Remove a `rate` fraction of cells (0 < rate < 1), keeping
/// ceil((1 - rate) * N). Stratified mode requires labels and allocates the
/// kept count across classes by largest remainder (within one cell of
/// proportional), bumping any class with at least two members back to one
/// kept cell when the rounding would drop it entirely. Kept rows appear in
/// their original order.
ExpressionMatrix downsample(const ExpressionMatrix& x, double rate,
                            DownsampleMode mode, Pcg32& rng);

}  // namespace shrinkcl
