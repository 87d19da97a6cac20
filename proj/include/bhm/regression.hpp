// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bhm {

// Two-layer network with a random, fixed first layer and a closed-form
// least-squares output layer. Inputs are min-max normalized to [0,1] with
// statistics learned on the training set; constant training inputs keep a
// unit denominator and are flagged.
struct ElmModel {
  Eigen::Index input_dim = 0;
  Eigen::Index hidden_dim = 0;
  Eigen::MatrixXd weights;          // hidden_dim x input_dim
  Eigen::VectorXd bias;             // hidden_dim
  Eigen::RowVectorXd output_weights; // 1 x hidden_dim
  Eigen::VectorXd norm_min;         // per input
  Eigen::VectorXd norm_max;
  std::vector<bool> constant_input; // norm_max == norm_min on training data
  double ridge = 0.0;
  std::uint64_t seed = 0;

  std::string to_json() const;
  static ElmModel from_json(const std::string& text);
};

struct WoaConfig {
  std::size_t population = 20;
  std::size_t max_iterations = 30;
  double spiral_b = 1.0;
  std::vector<std::pair<double, double>> bounds;  // per dimension [lo, hi]
  std::uint64_t seed = 0;
  // Positions injected verbatim as the first members of the initial
  // population (at most `population` of them); the rest are drawn uniformly.
  std::vector<std::vector<double>> initial;
};

struct WoaResult {
  std::vector<double> best_position;
  double best_fitness = 0.0;
  std::vector<double> trace;  // best-so-far after each iteration, length max_iterations
};

// First floor(fraction * n) indices chronologically, remainder as test.
// Requires n >= 5 and fraction strictly inside (0, 1).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_train_test(std::size_t n_cycles, double train_fraction);

// Columns of x are samples (input_dim x m). W and b are drawn uniformly from
// [-1, 1] by the seeded generator (row-major W first, then b); the output
// layer solves beta = y Ht (H Ht + ridge I)^-1. ridge == 0 on a singular
// system raises errc::numerical with advice to set a ridge.
ElmModel train_elm(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& y,
                   Eigen::Index hidden_dim, double ridge, std::uint64_t seed);

Eigen::RowVectorXd predict(const ElmModel& model, const Eigen::MatrixXd& x);

double rmse(std::span<const double> y, std::span<const double> y_hat);
double rmse(const Eigen::RowVectorXd& y, const Eigen::RowVectorXd& y_hat);

// Population minimizer alternating encircling/search (p < 0.5: reference is
// a random member while a >= 1, the incumbent best after) and the
// logarithmic spiral around the best (p >= 0.5). a falls linearly from 2 to
// 0 across iterations; positions clamp to the bounds; the returned best is
// the best-so-far over every evaluation ever made.
WoaResult woa_optimize(const std::function<double(std::span<const double>)>& fitness,
                       std::size_t dim, const WoaConfig& config);

// ELM whose first layer is chosen by the minimizer: decision vector =
// flattened (W row-major, then b), bounds [-1,1]^(dh*(di+1)), fitness =
// training RMSE with beta re-solved in closed form per candidate. Whale 0 of
// the initial population is exactly the train_elm(seed) draw, so the
// optimized training RMSE can never exceed the plain ELM's.
ElmModel train_woa_elm(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& y,
                       Eigen::Index hidden_dim, const WoaConfig& woa,
                       double ridge, std::uint64_t seed);

} // namespace bhm
