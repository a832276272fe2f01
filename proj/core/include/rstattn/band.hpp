#ifndef RSTATTN_BAND_HPP
#define RSTATTN_BAND_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <vector>

#include "rstattn/config.hpp"
#include "rstattn/corpus.hpp"
#include "rstattn/ldd.hpp"

namespace rstattn {

using Matrix = Eigen::MatrixXd;

/// Dense banded layout for sliding-window attention. Slot k of row t
/// addresses target token j = t + (k - w/2) * dilation, k in [0, w]; the
/// center slot k = w/2 is the token itself. Slots whose target falls outside
/// [0, T) are masked and hold a NaN sentinel so stale finite values can never
/// leak through; compute kernels skip them by index arithmetic and never read
/// the sentinel.
struct BandTensor {
  int heads = 0;
  int seq_len = 0;
  int window = 0;  // even
  int dilation = 1;
  std::vector<double> values;  // heads * seq_len * (window+1), row-major

  static constexpr double kMaskedSlot = std::numeric_limits<double>::quiet_NaN();

  BandTensor() = default;
  BandTensor(int heads, int seq_len, int window, int dilation);

  int slots() const { return window + 1; }

  /// Target token index addressed by (t, k); may fall outside [0, seq_len).
  int target(int t, int k) const { return t + (k - window / 2) * dilation; }

  bool slot_valid(int t, int k) const {
    int j = target(t, k);
    return j >= 0 && j < seq_len;
  }

  double& at(int head, int t, int k) {
    return values[(static_cast<std::size_t>(head) * seq_len + t) * slots() + k];
  }
  double at(int head, int t, int k) const {
    return values[(static_cast<std::size_t>(head) * seq_len + t) * slots() + k];
  }

  bool same_shape(const BandTensor& other) const {
    return heads == other.heads && seq_len == other.seq_len &&
           window == other.window && dilation == other.dilation;
  }

  /// Fills every valid slot with `value`; masked slots keep the sentinel.
  void fill_valid(double value);
};

/// Q.K^T / sqrt(d) restricted to the band. Q and K hold one T x d matrix per
/// head. Non-finite inputs raise NumericError.
BandTensor banded_scores(const std::vector<Matrix>& Q,
                         const std::vector<Matrix>& K, int window, int dilation);

/// Element-wise product S (.) ldd_band on valid slots. Shapes must match.
BandTensor inject_ldd(const BandTensor& S, const BandTensor& ldd_band);

/// Max-subtracted softmax per (head, row) over valid slots.
BandTensor band_softmax(const BandTensor& S);

/// out[t] = sum_k N[t,k] * V[target(t,k)] per head. N must be row-normalized.
std::vector<Matrix> band_value_product(const BandTensor& N,
                                       const std::vector<Matrix>& V);

/// Spreads the EDU-level distribution over token pairs in the band: slot
/// (head, t, k) gets prob(edu(t), edu(j), category[head]) when an entry
/// exists; within-EDU pairs (including the self slot) and pairs without a
/// parsed relation get `config.ldd_fill`.
BandTensor project_ldd_to_band(const LddTensor& ldd, const Document& doc,
                               const ModelConfig& config,
                               const std::vector<RelationCategory>& head_map);

/// Band with every valid slot equal to `value` (the multiplicative identity
/// band for value = 1).
BandTensor uniform_band(int heads, int seq_len, int window, int dilation,
                        double value);

/// Seeded band of fixed random values in [0,1] on valid slots.
BandTensor random_band(int heads, int seq_len, int window, int dilation,
                       std::uint64_t seed);

}  // namespace rstattn

#endif
