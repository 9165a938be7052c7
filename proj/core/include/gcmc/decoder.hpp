#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gcmc/graph_data.hpp"
#include "gcmc/rng.hpp"
#include "gcmc/tensor.hpp"

namespace gcmc {

/// Bilinear decoder with basis weight sharing: Q_r = sum_s a_rs P_s.
struct DecoderParams {
  std::vector<DenseMatrix> basis;  // P_s, embed x embed
  DenseMatrix coefficients;        // a, levels x num_basis

  std::size_t num_basis() const { return basis.size(); }
  std::size_t num_levels() const { return coefficients.rows(); }
};

/// Glorot-uniform P_s and a. Throws ConfigError unless 1 <= num_basis <= num_levels.
DecoderParams init_decoder_params(std::size_t embed_dim, std::size_t num_levels,
                                  std::size_t num_basis, Rng& rng);

/// Q_r for every level.
std::vector<DenseMatrix> decoder_weights(const DecoderParams& params);

/// Counts multiply-adds spent in bilinear scoring.
struct OpCounter {
  std::uint64_t multiply_adds = 0;
};

/// logit[e][r] = u_i^T Q_r v_j for each requested pair, where pairs index
/// rows of `users` and `items` directly. Only the requested pairs are scored.
DenseMatrix rating_logits(const DenseMatrix& users, const DenseMatrix& items,
                          std::span<const NodePair> pairs, std::span<const DenseMatrix> q,
                          OpCounter* counter = nullptr);

/// Factored evaluation of the same logits through the basis: projected[s] =
/// U P_s, scores[e][s] = projected[s][i] . v_j, logits = scores a^T.
/// This is the form the training path differentiates.
struct BasisLogits {
  std::vector<DenseMatrix> projected;
  DenseMatrix scores;
  DenseMatrix logits;
};

BasisLogits basis_logits(const DenseMatrix& users, const DenseMatrix& items,
                         std::span<const NodePair> pairs, const DecoderParams& params,
                         OpCounter* counter = nullptr);

struct EdgePrediction {
  std::vector<double> probabilities;
  double expected_rating = 0.0;
};

/// Softmax over levels and the expected rating sum_r level_values[r] p_r.
std::vector<EdgePrediction> predict(const DenseMatrix& logits, std::span<const double> level_values);

/// Expected ratings from an already normalized probability matrix.
std::vector<double> expected_ratings(const DenseMatrix& probabilities,
                                     std::span<const double> level_values);

}  // namespace gcmc
