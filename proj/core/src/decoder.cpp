#include "gcmc/decoder.hpp"

#include <cmath>
#include <string>

#include "gcmc/error.hpp"

namespace gcmc {
namespace {

void check_pairs(const DenseMatrix& users, const DenseMatrix& items, std::span<const NodePair> pairs) {
  if (users.cols() != items.cols()) {
    throw ContractViolation("decoder: user and item embeddings differ in width");
  }
  for (const auto& p : pairs) {
    if (p.user >= users.rows() || p.item >= items.rows()) {
      throw ContractViolation("decoder: pair (" + std::to_string(p.user) + ", " +
                              std::to_string(p.item) + ") outside the embedding tables");
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

}  // namespace

DecoderParams init_decoder_params(std::size_t embed_dim, std::size_t num_levels,
                                  std::size_t num_basis, Rng& rng) {
  if (num_basis < 1 || num_basis > num_levels) {
    throw ConfigError("num_basis must lie in [1, " + std::to_string(num_levels) + "], got " +
                      std::to_string(num_basis));
  }
  DecoderParams p;
  const double basis_limit = std::sqrt(6.0 / static_cast<double>(2 * embed_dim));
  for (std::size_t s = 0; s < num_basis; ++s) {
    DenseMatrix m(embed_dim, embed_dim);
    for (double& v : m.values()) v = rng.uniform(-basis_limit, basis_limit);
    p.basis.push_back(std::move(m));
  }
  const double coef_limit = std::sqrt(6.0 / static_cast<double>(num_levels + num_basis));
  p.coefficients = DenseMatrix(num_levels, num_basis);
  for (double& v : p.coefficients.values()) v = rng.uniform(-coef_limit, coef_limit);
  return p;
}

std::vector<DenseMatrix> decoder_weights(const DecoderParams& params) {
  if (params.basis.size() != params.coefficients.cols()) {
    throw ContractViolation("decoder_weights: coefficient columns do not match the basis count");
  }
  std::vector<DenseMatrix> q;
  for (std::size_t r = 0; r < params.num_levels(); ++r) {
    DenseMatrix m(params.basis.front().rows(), params.basis.front().cols());
    for (std::size_t s = 0; s < params.num_basis(); ++s) axpy(params.coefficients(r, s), params.basis[s], m);
    q.push_back(std::move(m));
  }
  return q;
}

DenseMatrix rating_logits(const DenseMatrix& users, const DenseMatrix& items,
                          std::span<const NodePair> pairs, std::span<const DenseMatrix> q,
                          OpCounter* counter) {
  check_pairs(users, items, pairs);
  const std::size_t e = users.cols();
  for (const auto& m : q) {
    if (m.rows() != e || m.cols() != e) throw ContractViolation("rating_logits: Q_r must be E x E");
  }
  DenseMatrix logits(pairs.size(), q.size());
  std::vector<double> qv(e);
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const auto u = users.row(pairs[n].user);
    const auto v = items.row(pairs[n].item);
    for (std::size_t r = 0; r < q.size(); ++r) {
      for (std::size_t a = 0; a < e; ++a) qv[a] = dot(q[r].row(a), v);
      logits(n, r) = dot(u, qv);
    }
  }
  if (counter) counter->multiply_adds += pairs.size() * q.size() * (e * e + e);
  return logits;
}

BasisLogits basis_logits(const DenseMatrix& users, const DenseMatrix& items,
                         std::span<const NodePair> pairs, const DecoderParams& params,
                         OpCounter* counter) {
  check_pairs(users, items, pairs);
  BasisLogits out;
  const std::size_t nb = params.num_basis();
  for (const auto& p : params.basis) out.projected.push_back(matmul(users, p));
  out.scores = DenseMatrix(pairs.size(), nb);
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    const auto v = items.row(pairs[n].item);
    for (std::size_t s = 0; s < nb; ++s) out.scores(n, s) = dot(out.projected[s].row(pairs[n].user), v);
  }
  out.logits = matmul_nt(out.scores, params.coefficients);
  if (counter) {
    const std::size_t e = users.cols();
    counter->multiply_adds += users.rows() * nb * e * e + pairs.size() * nb * (e + params.num_levels());
  }
  return out;
}

std::vector<double> expected_ratings(const DenseMatrix& probabilities,
                                     std::span<const double> level_values) {
  if (probabilities.cols() != level_values.size()) {
    throw ContractViolation("expected_ratings: probability width differs from the level count");
  }
  std::vector<double> out(probabilities.rows());
  for (std::size_t n = 0; n < probabilities.rows(); ++n) out[n] = dot(probabilities.row(n), level_values);
  return out;
}

std::vector<EdgePrediction> predict(const DenseMatrix& logits, std::span<const double> level_values) {
  const DenseMatrix probs = row_softmax(logits);
  const auto expected = expected_ratings(probs, level_values);
  std::vector<EdgePrediction> out(probs.rows());
  for (std::size_t n = 0; n < probs.rows(); ++n) {
    const auto row = probs.row(n);
    out[n].probabilities.assign(row.begin(), row.end());
    out[n].expected_rating = expected[n];
  }
  return out;
}

}  // namespace gcmc
