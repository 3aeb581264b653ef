#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dpwav/data.hpp"
#include "dpwav/federation.hpp"

namespace dpwav::cli {

// Spec-file problem with the offending line number (0 = file-level).
struct SpecParseError : std::runtime_error {
  SpecParseError(int line_number, const std::string& message)
      : std::runtime_error(message), line(line_number) {}
  int line;
};

struct DatasetSpec {
  std::string kind = "blobs"; // blobs | idx
  // blobs
  std::size_t train_examples = 1000;
  std::size_t test_examples = 200;
  std::size_t dim = 10;
  int classes = 2;
  double spread = 0.5;
  // idx
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t train_take = 0; // 0 = all
  std::size_t test_take = 0;
};

struct ModelSpec {
  std::string kind = "logistic"; // logistic | mlp
  std::vector<std::size_t> hidden;
};

// One federation run per named arm; dataset, model and seed are shared
// unless an arm overrides the seed.
struct ExperimentSpec {
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  ModelSpec model;
  std::vector<std::pair<std::string, fed::FederationConfig>> arms;
};

ExperimentSpec parse_spec_file(const std::string& path);

// Materializes train/test per the dataset spec (model dims still unset in
// the arm configs at parse time; this fills them in).
std::pair<data::Dataset, data::Dataset> build_datasets(const DatasetSpec& spec,
                                                       std::uint64_t seed);

// Runs every arm and writes <out>/<arm>/metrics.csv plus
// <out>/<arm>/manifest.json. CSV files appear atomically (write-then-
// rename). Returns a process exit code: 0 ok, 1 spec error, 2 runtime
// error.
int run_experiment(const std::string& spec_path, const std::string& out_override,
                   bool parallel, std::ostream& err);

// Prints final-round accuracy per metrics directory and pairwise deltas in
// percentage points. Needs at least two inputs.
int report_compare(const std::vector<std::string>& metrics_dirs, std::ostream& out,
                   std::ostream& err);

// CSV helpers shared with tests.
std::string metrics_csv_header();
std::string format_metrics_row(const fed::RoundMetrics& m);

} // namespace dpwav::cli
