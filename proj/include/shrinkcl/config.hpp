#pragma once

#include "shrinkcl/dataio.hpp"
#include "shrinkcl/trainer.hpp"

#include <string>

namespace shrinkcl {

/// Everything the command-line surface reads from a JSON config file,
/// grouped into the sections {data, preprocess, augment, model, losses,
/// kmeans, train, output}. Every field is optional and falls back to the
/// documented default; unknown sections or keys are errors. Serialization
/// always emits every field, so parse -> serialize -> parse is the
/// identity.
struct CliConfig {
  std::string data_path;    // data.path: csv/tsv matrix or matrix-market file
  std::string genes_path;   // data.genes: companion gene ids (matrix market)
  std::string cells_path;   // data.cells: companion cell ids (matrix market)
  std::string labels_path;  // data.labels: sidecar ground-truth labels
  PreprocessConfig preprocess;
  TrainConfig train;        // model, losses, augment, kmeans and train sections
  std::string out_dir = "out";
};

CliConfig config_from_json_text(const std::string& text);
CliConfig load_config_file(const std::string& path);
std::string config_to_json_text(const CliConfig& c);

/// Loads the matrix named by the config: matrix-market when data.path
/// ends in .mtx (companion id files required), delimited text otherwise;
/// attaches data.labels when set; applies the preprocess section.
ExpressionMatrix load_dataset(const CliConfig& c);

}  // namespace shrinkcl
