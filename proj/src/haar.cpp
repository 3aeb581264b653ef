#include "dpwav/haar.hpp"

#include <bit>
#include <stdexcept>

namespace dpwav::haar {

bool is_power_of_two(std::size_t m) { return m > 0 && std::has_single_bit(m); }

std::size_t next_power_of_two(std::size_t n) {
  if (n == 0) return 1;
  return std::bit_ceil(n);
}

std::size_t level_count(std::size_t m) {
  if (!is_power_of_two(m)) throw std::invalid_argument("m is not a power of two");
  return static_cast<std::size_t>(std::countr_zero(m));
}

std::size_t level_offset(std::size_t m, std::size_t level) {
  // Level 1 starts right after the base; level l+1 follows level l's m/2^l
  // entries, so offset(l) = 1 + m - m/2^(l-1).
  return 1 + m - (m >> (level - 1));
}

std::pair<std::vector<double>, std::size_t> pad_to_pow2(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("empty vector");
  std::size_t m = next_power_of_two(v.size());
  std::vector<double> padded(v);
  padded.resize(m, 0.0);
  return {std::move(padded), v.size()};
}

WaveletDecomposition haar_forward(const std::vector<double>& v) {
  auto [work, original_len] = pad_to_pow2(v);
  std::size_t m = work.size();

  WaveletDecomposition d;
  d.coeffs.resize(m);
  d.m = m;
  d.original_len = original_len;

  std::size_t n = level_count(m);
  std::size_t len = m;
  for (std::size_t level = 1; level <= n; ++level) {
    std::size_t half = len / 2;
    std::size_t offset = level_offset(m, level);
    for (std::size_t i = 0; i < half; ++i) {
      double left = work[2 * i];
      double right = work[2 * i + 1];
      d.coeffs[offset + i] = (left - right) / 2.0;
      work[i] = (left + right) / 2.0;
    }
    len = half;
  }
  d.coeffs[0] = work[0]; // final mean = base coefficient
  return d;
}

void validate(const WaveletDecomposition& d) {
  if (!is_power_of_two(d.m)) throw std::invalid_argument("m is not a power of two");
  if (d.coeffs.size() != d.m) throw std::invalid_argument("coefficient count does not equal m");
  if (d.original_len == 0 || d.original_len > d.m)
    throw std::invalid_argument("original_len out of range");
}

std::vector<double> haar_inverse(const WaveletDecomposition& d) {
  validate(d);
  std::size_t n = level_count(d.m);

  // Expand means from the base down: pair mean u and detail c recover the
  // pair as (u + c, u - c).
  std::vector<double> cur(1, d.coeffs[0]);
  std::vector<double> next;
  for (std::size_t level = n; level >= 1; --level) {
    std::size_t offset = level_offset(d.m, level);
    next.resize(cur.size() * 2);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      double detail = d.coeffs[offset + i];
      next[2 * i] = cur[i] + detail;
      next[2 * i + 1] = cur[i] - detail;
    }
    cur.swap(next);
  }
  cur.resize(d.original_len);
  return cur;
}

std::vector<double> haar_weights(std::size_t m) {
  if (!is_power_of_two(m)) throw std::invalid_argument("m is not a power of two");
  std::vector<double> w(m);
  w[0] = static_cast<double>(m);
  std::size_t n = level_count(m);
  for (std::size_t level = 1; level <= n; ++level) {
    std::size_t offset = level_offset(m, level);
    std::size_t count = m >> level;
    double weight = static_cast<double>(std::size_t{1} << level);
    for (std::size_t i = 0; i < count; ++i) w[offset + i] = weight;
  }
  return w;
}

AncestorChain ancestor_chain(std::size_t m, std::size_t i) {
  if (!is_power_of_two(m)) throw std::invalid_argument("m is not a power of two");
  if (i >= m) throw std::out_of_range("element index out of range");

  AncestorChain chain;
  std::size_t n = level_count(m);
  chain.entries.reserve(n + 1);
  chain.entries.push_back({0, +1});
  for (std::size_t level = n; level >= 1; --level) {
    std::size_t block = i >> level;
    int sign = ((i >> (level - 1)) & 1) == 0 ? +1 : -1;
    chain.entries.push_back({level_offset(m, level) + block, sign});
  }
  return chain;
}

std::vector<double> variance_propagation(std::size_t m,
                                         const std::vector<double>& per_coeff_std) {
  if (!is_power_of_two(m)) throw std::invalid_argument("m is not a power of two");
  if (per_coeff_std.size() != m)
    throw std::invalid_argument("per_coeff_std length does not equal m");

  // Signs square away; each element's variance is the plain sum of the
  // squared stds along its ancestor chain.
  std::vector<double> var(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double sum = 0.0;
    for (const auto& e : ancestor_chain(m, i).entries) {
      double s = per_coeff_std[e.coeff_index];
      sum += s * s;
    }
    var[i] = sum;
  }
  return var;
}

} // namespace dpwav::haar
