#include "dpwav/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace dpwav::data {

Dataset synthetic_blobs(std::size_t n, std::size_t dim, int classes, double spread,
                        std::uint64_t seed) {
  if (classes < 1 || dim == 0) throw std::invalid_argument("invalid blob dimensions");
  if (n < static_cast<std::size_t>(classes))
    throw std::invalid_argument("need at least one example per class");
  if (spread < 0.0) throw std::invalid_argument("spread must be non-negative");

  Rng rng(seed);
  std::vector<double> centers(static_cast<std::size_t>(classes) * dim);
  for (double& c : centers) c = standard_normal(rng);

  Dataset ds;
  ds.dim = dim;
  ds.class_count = classes;
  ds.features.resize(n * dim);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    int label = static_cast<int>(i % static_cast<std::size_t>(classes));
    ds.labels[i] = label;
    const double* center = &centers[static_cast<std::size_t>(label) * dim];
    for (std::size_t j = 0; j < dim; ++j)
      ds.features[i * dim + j] = center[j] + spread * standard_normal(rng);
  }
  return ds;
}

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::ifstream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() != 4) throw std::runtime_error("truncated file: " + path);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  std::array<unsigned char, 4> b = {static_cast<unsigned char>(v >> 24),
                                    static_cast<unsigned char>(v >> 16),
                                    static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw std::runtime_error("cannot open file: " + images_path);
  if (read_be32(images, images_path) != kImagesMagic)
    throw std::runtime_error("bad magic: " + images_path);
  std::uint32_t count = read_be32(images, images_path);
  std::uint32_t rows = read_be32(images, images_path);
  std::uint32_t cols = read_be32(images, images_path);

  std::size_t dim = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(count) * dim);
  images.read(reinterpret_cast<char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
  if (images.gcount() != static_cast<std::streamsize>(pixels.size()))
    throw std::runtime_error("truncated file: " + images_path);

  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw std::runtime_error("cannot open file: " + labels_path);
  if (read_be32(labels, labels_path) != kLabelsMagic)
    throw std::runtime_error("bad magic: " + labels_path);
  std::uint32_t label_count = read_be32(labels, labels_path);
  if (label_count != count)
    throw std::runtime_error("count mismatch: " + images_path + " has " +
                             std::to_string(count) + " images, " + labels_path + " has " +
                             std::to_string(label_count) + " labels");
  std::vector<unsigned char> raw_labels(label_count);
  labels.read(reinterpret_cast<char*>(raw_labels.data()),
              static_cast<std::streamsize>(raw_labels.size()));
  if (labels.gcount() != static_cast<std::streamsize>(raw_labels.size()))
    throw std::runtime_error("truncated file: " + labels_path);

  Dataset ds;
  ds.dim = dim;
  ds.features.resize(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    ds.features[i] = static_cast<double>(pixels[i]) / 255.0;
  ds.labels.resize(label_count);
  int max_label = 0;
  for (std::size_t i = 0; i < raw_labels.size(); ++i) {
    ds.labels[i] = static_cast<int>(raw_labels[i]);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = max_label + 1;
  return ds;
}

void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols,
               const std::string& images_path, const std::string& labels_path) {
  if (rows * cols != ds.dim) throw std::invalid_argument("rows*cols must equal feature dim");

  std::ofstream images(images_path, std::ios::binary);
  if (!images) throw std::runtime_error("cannot open file: " + images_path);
  write_be32(images, kImagesMagic);
  write_be32(images, static_cast<std::uint32_t>(ds.size()));
  write_be32(images, static_cast<std::uint32_t>(rows));
  write_be32(images, static_cast<std::uint32_t>(cols));
  for (double v : ds.features) {
    auto byte = static_cast<unsigned char>(std::lround(v * 255.0));
    images.write(reinterpret_cast<const char*>(&byte), 1);
  }

  std::ofstream labels(labels_path, std::ios::binary);
  if (!labels) throw std::runtime_error("cannot open file: " + labels_path);
  write_be32(labels, kLabelsMagic);
  write_be32(labels, static_cast<std::uint32_t>(ds.size()));
  for (int l : ds.labels) {
    auto byte = static_cast<unsigned char>(l);
    labels.write(reinterpret_cast<const char*>(&byte), 1);
  }
}

Dataset take_prefix(const Dataset& ds, std::size_t n) {
  if (n > ds.size()) throw std::invalid_argument("prefix longer than dataset");
  Dataset out;
  out.dim = ds.dim;
  out.class_count = ds.class_count;
  out.features.assign(ds.features.begin(), ds.features.begin() + n * ds.dim);
  out.labels.assign(ds.labels.begin(), ds.labels.begin() + n);
  return out;
}

std::pair<Dataset, Dataset> split_at(const Dataset& ds, std::size_t n) {
  if (n > ds.size()) throw std::invalid_argument("split point beyond dataset");
  Dataset tail;
  tail.dim = ds.dim;
  tail.class_count = ds.class_count;
  tail.features.assign(ds.features.begin() + n * ds.dim, ds.features.end());
  tail.labels.assign(ds.labels.begin() + n, ds.labels.end());
  return {take_prefix(ds, n), std::move(tail)};
}

} // namespace dpwav::data
