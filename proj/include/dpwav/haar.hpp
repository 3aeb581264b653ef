#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace dpwav::haar {

// One-dimensional Haar decomposition of a zero-padded vector.
//
// Coefficient ordering is fixed: index 0 holds the base coefficient (the
// overall mean); indices 1..m/2 hold the level-1 (finest) detail
// coefficients in left-to-right pair order; then level-2 details, and so
// on up to the single coarsest detail at the last index. A detail
// coefficient is (L - R) / 2 of the pair of means it was computed from.
struct WaveletDecomposition {
  std::vector<double> coeffs;
  std::size_t m = 0;            // padded length, a power of two
  std::size_t original_len = 0; // length before zero-padding
};

// One (coefficient index, sign) entry per chain member. The base comes
// first with sign +1, then details from the coarsest level down to the
// finest. Element i of the input reconstructs as the signed sum of the
// chain's coefficients.
struct AncestorChain {
  struct Entry {
    std::size_t coeff_index;
    int sign; // +1 when the element lies in the left subtree, -1 when right
  };
  std::vector<Entry> entries;
};

bool is_power_of_two(std::size_t m);
std::size_t next_power_of_two(std::size_t n);
// log2 of a power of two; the number of detail levels.
std::size_t level_count(std::size_t m);

// Zero-pads v to the smallest power-of-two length >= len(v). Returns the
// padded vector and the original length. Throws on empty input.
std::pair<std::vector<double>, std::size_t> pad_to_pow2(const std::vector<double>& v);

// Iterative pairwise transform, O(m). Pads internally.
WaveletDecomposition haar_forward(const std::vector<double>& v);

// Exact inverse; output truncated to original_len. Throws if the
// decomposition is structurally invalid.
std::vector<double> haar_inverse(const WaveletDecomposition& d);

// Per-coefficient weights aligned with the decomposition ordering: m for
// the base, 2^l for a level-l detail (level 1 = finest).
std::vector<double> haar_weights(std::size_t m);

// Chain of coefficients that reconstruct element i (0 <= i < m).
AncestorChain ancestor_chain(std::size_t m, std::size_t i);

// Exact per-element variance of inverse-transformed independent zero-mean
// noise with the given per-coefficient standard deviations. Serves as the
// independent oracle for the reconstructed-noise variance bound.
std::vector<double> variance_propagation(std::size_t m,
                                         const std::vector<double>& per_coeff_std);

// Offset of level l's details in the coefficient vector (l in 1..log2(m)).
std::size_t level_offset(std::size_t m, std::size_t level);

void validate(const WaveletDecomposition& d);

} // namespace dpwav::haar
