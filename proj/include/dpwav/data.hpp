#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dpwav/rng.hpp"

namespace dpwav::data {

// Dense feature matrix (row-major) with integer class labels.
struct Dataset {
  std::vector<double> features; // n * dim, row-major
  std::vector<int> labels;
  std::size_t dim = 0;
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }
};

// Gaussian clusters around seeded class centers; class labels balanced to
// within one example.
Dataset synthetic_blobs(std::size_t n, std::size_t dim, int classes, double spread,
                        std::uint64_t seed);

// IDX readers (big-endian): images magic 0x00000803 with (count, rows, cols)
// dimensions and row-major pixel bytes scaled to [0,1]; labels magic
// 0x00000801. Image and label counts must match.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Writes a dataset back to the IDX pair; pixel doubles are rounded to the
// nearest byte after scaling by 255. Re-reading yields an identical Dataset
// when features are multiples of 1/255. rows*cols must equal dim.
void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols,
               const std::string& images_path, const std::string& labels_path);

// First n examples (deterministic prefix, used for desk-scale subsets).
Dataset take_prefix(const Dataset& ds, std::size_t n);

// Splits into (first n, remainder). Train/test pairs drawn from one blob
// sample share class centers this way.
std::pair<Dataset, Dataset> split_at(const Dataset& ds, std::size_t n);

} // namespace dpwav::data
