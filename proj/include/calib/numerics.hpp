#pragma once

#include "calib/linalg.hpp"

namespace calib {

// Probabilities are clamped to [kProbFloor, 1] inside every log and
// division, which keeps one-hot targets finite without perturbing values
// that matter at f64 precision.
constexpr double kProbFloor = 1e-12;

// Numerically stable softmax (max subtraction). Output sums to 1.
Vec softmax(const Vec& logits);

bool is_prob_vector(const Vec& p, double tol = 1e-9);

// Shannon entropy in nats, 0*log(0) treated as 0. Range [0, log K].
double entropy(const Vec& p);

// d(-H(p))/dp
Vec neg_entropy_grad(const Vec& p);

// KL(p || q) in nats, q clamped below by kProbFloor.
double kl_divergence(const Vec& p, const Vec& q);

// d KL(p || q)/dq
Vec kl_divergence_grad_q(const Vec& p, const Vec& q);

// -sum_k y_k log q_k
double cross_entropy(const Vec& y, const Vec& q);

Vec cross_entropy_grad(const Vec& y, const Vec& q);

// 1 - <a/|a|, b/|b|>, in [0, 2]. Errors on zero-norm input.
double cosine_distance(const Vec& a, const Vec& b);

// Gradient of cosine_distance(a, b) with respect to a.
Vec cosine_distance_grad_a(const Vec& a, const Vec& b);

// Raw normalized inner product <a/|a|, b/|b|> and its gradient in a.
// Kept selectable so the similarity reading of the feature metric can be
// exercised next to the distance reading.
double cosine_similarity(const Vec& a, const Vec& b);
Vec cosine_similarity_grad_a(const Vec& a, const Vec& b);

Vec one_hot(std::size_t k, std::size_t num_classes);

}  // namespace calib
