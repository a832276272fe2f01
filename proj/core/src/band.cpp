#include "rstattn/band.hpp"

#include <cmath>

#include "rstattn/errors.hpp"
#include "rstattn/rng.hpp"

namespace rstattn {

BandTensor::BandTensor(int heads, int seq_len, int window, int dilation)
    : heads(heads), seq_len(seq_len), window(window), dilation(dilation) {
  if (heads < 1 || seq_len < 0 || window < 0 || window % 2 != 0 || dilation < 1)
    throw ContractError("invalid band tensor shape");
  values.assign(static_cast<std::size_t>(heads) * seq_len * (window + 1),
                kMaskedSlot);
}

void BandTensor::fill_valid(double value) {
  for (int h = 0; h < heads; ++h)
    for (int t = 0; t < seq_len; ++t)
      for (int k = 0; k <= window; ++k)
        if (slot_valid(t, k)) at(h, t, k) = value;
}

BandTensor banded_scores(const std::vector<Matrix>& Q,
                         const std::vector<Matrix>& K, int window,
                         int dilation) {
  if (Q.empty() || Q.size() != K.size())
    throw ContractError("banded_scores: Q and K must hold one matrix per head");
  const int heads = static_cast<int>(Q.size());
  const int T = static_cast<int>(Q[0].rows());
  const int d = static_cast<int>(Q[0].cols());
  for (int h = 0; h < heads; ++h) {
    if (Q[h].rows() != T || K[h].rows() != T || Q[h].cols() != d || K[h].cols() != d)
      throw ContractError("banded_scores: per-head shapes disagree");
    if (!Q[h].allFinite() || !K[h].allFinite())
      throw NumericError("banded_scores: non-finite projection values");
  }

  BandTensor S(heads, T, window, dilation);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (int h = 0; h < heads; ++h) {
    for (int t = 0; t < T; ++t) {
      for (int k = 0; k <= window; ++k) {
        int j = S.target(t, k);
        if (j < 0 || j >= T) continue;
        S.at(h, t, k) = Q[h].row(t).dot(K[h].row(j)) * inv_sqrt_d;
      }
    }
  }
  return S;
}

BandTensor inject_ldd(const BandTensor& S, const BandTensor& ldd_band) {
  if (!S.same_shape(ldd_band))
    throw ContractError("inject_ldd: shape mismatch between scores and band");
  BandTensor out = S;
  for (int h = 0; h < S.heads; ++h)
    for (int t = 0; t < S.seq_len; ++t)
      for (int k = 0; k <= S.window; ++k)
        if (S.slot_valid(t, k)) out.at(h, t, k) = S.at(h, t, k) * ldd_band.at(h, t, k);
  return out;
}

BandTensor band_softmax(const BandTensor& S) {
  BandTensor out(S.heads, S.seq_len, S.window, S.dilation);
  for (int h = 0; h < S.heads; ++h) {
    for (int t = 0; t < S.seq_len; ++t) {
      double max_val = -std::numeric_limits<double>::infinity();
      int n_valid = 0;
      for (int k = 0; k <= S.window; ++k) {
        if (!S.slot_valid(t, k)) continue;
        ++n_valid;
        max_val = std::max(max_val, S.at(h, t, k));
      }
      if (n_valid == 0)
        throw ContractError("band_softmax: row without valid slots");
      if (!std::isfinite(max_val))
        throw NumericError("band_softmax: non-finite score row");
      double denom = 0.0;
      for (int k = 0; k <= S.window; ++k) {
        if (!S.slot_valid(t, k)) continue;
        double e = std::exp(S.at(h, t, k) - max_val);
        out.at(h, t, k) = e;
        denom += e;
      }
      for (int k = 0; k <= S.window; ++k)
        if (S.slot_valid(t, k)) out.at(h, t, k) /= denom;
    }
  }
  return out;
}

std::vector<Matrix> band_value_product(const BandTensor& N,
                                       const std::vector<Matrix>& V) {
  if (static_cast<int>(V.size()) != N.heads)
    throw ContractError("band_value_product: head count mismatch");
  std::vector<Matrix> out(N.heads);
  for (int h = 0; h < N.heads; ++h) {
    if (V[h].rows() != N.seq_len)
      throw ContractError("band_value_product: V rows must equal seq_len");
    out[h] = Matrix::Zero(N.seq_len, V[h].cols());
    for (int t = 0; t < N.seq_len; ++t) {
      for (int k = 0; k <= N.window; ++k) {
        int j = N.target(t, k);
        if (j < 0 || j >= N.seq_len) continue;
        out[h].row(t) += N.at(h, t, k) * V[h].row(j);
      }
    }
  }
  return out;
}

BandTensor project_ldd_to_band(const LddTensor& ldd, const Document& doc,
                               const ModelConfig& config,
                               const std::vector<RelationCategory>& head_map) {
  const int T = doc.n_tokens();
  if (static_cast<int>(head_map.size()) != config.h)
    throw ContractError("project_ldd_to_band: head_map size must equal h");

  std::vector<int> edu_of(T);
  for (int t = 0; t < T; ++t) edu_of[t] = doc.edu_of(t);

  BandTensor band(config.h, T, config.w, config.dilation);
  const double fill = config.ldd_fill;
  for (int h = 0; h < config.h; ++h) {
    for (int t = 0; t < T; ++t) {
      for (int k = 0; k <= config.w; ++k) {
        int j = band.target(t, k);
        if (j < 0 || j >= T) continue;
        int src = edu_of[t], dst = edu_of[j];
        band.at(h, t, k) =
            src == dst ? fill : ldd.prob_or(src, dst, head_map[h], fill);
      }
    }
  }
  return band;
}

BandTensor uniform_band(int heads, int seq_len, int window, int dilation,
                        double value) {
  BandTensor band(heads, seq_len, window, dilation);
  band.fill_valid(value);
  return band;
}

BandTensor random_band(int heads, int seq_len, int window, int dilation,
                       std::uint64_t seed) {
  BandTensor band(heads, seq_len, window, dilation);
  Rng rng(seed);
  for (int h = 0; h < heads; ++h)
    for (int t = 0; t < seq_len; ++t)
      for (int k = 0; k <= window; ++k)
        if (band.slot_valid(t, k)) band.at(h, t, k) = rng.uniform();
  return band;
}

}  // namespace rstattn
