// SPDX-License-Identifier: Apache-2.0
#include "bhm/regression.hpp"

#include <cmath>
#include <numbers>

#include <json.hpp>

#include "bhm/error.hpp"
#include "bhm/rng.hpp"
#include "textio.hpp"

namespace bhm {

using nlohmann::ordered_json;

namespace {

Eigen::MatrixXd normalize(const Eigen::MatrixXd& x, const ElmModel& m) {
  Eigen::MatrixXd xn(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double lo = m.norm_min(r);
    const double denom = m.constant_input[static_cast<std::size_t>(r)]
                             ? 1.0
                             : m.norm_max(r) - m.norm_min(r);
    xn.row(r) = (x.row(r).array() - lo) / denom;
  }
  return xn;
}

Eigen::MatrixXd hidden_activations(const Eigen::MatrixXd& w, const Eigen::VectorXd& b,
                                   const Eigen::MatrixXd& xn) {
  Eigen::MatrixXd z = w * xn;
  z.colwise() += b;
  return ((-z.array()).exp() + 1.0).inverse().matrix();
}

// beta = y Ht (H Ht + ridge I)^-1, solved rather than inverted.
Eigen::RowVectorXd solve_output_layer(const Eigen::MatrixXd& h,
                                      const Eigen::RowVectorXd& y, double ridge) {
  Eigen::MatrixXd gram = h * h.transpose();
  gram.diagonal().array() += ridge;
  const Eigen::VectorXd rhs = h * y.transpose();
  if (ridge > 0.0) return gram.ldlt().solve(rhs).transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (!lu.isInvertible())
    raise(errc::numerical,
          "hidden-layer Gram matrix is singular with ridge 0; set a positive ridge");
  return lu.solve(rhs).transpose();
}

void draw_first_layer(Eigen::MatrixXd& w, Eigen::VectorXd& b, rng64& g) {
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = uniform(g, -1.0, 1.0);
  for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = uniform(g, -1.0, 1.0);
}

ElmModel model_shell(const Eigen::MatrixXd& x, Eigen::Index hidden_dim, double ridge,
                     std::uint64_t seed) {
  if (hidden_dim < 1) raise(errc::argument, "hidden_dim must be >= 1");
  if (x.cols() < 1) raise(errc::argument, "training set must not be empty");
  if (ridge < 0.0) raise(errc::argument, "ridge must be >= 0");
  ElmModel m;
  m.input_dim = x.rows();
  m.hidden_dim = hidden_dim;
  m.ridge = ridge;
  m.seed = seed;
  m.norm_min = x.rowwise().minCoeff();
  m.norm_max = x.rowwise().maxCoeff();
  m.constant_input.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    m.constant_input[static_cast<std::size_t>(r)] = m.norm_max(r) == m.norm_min(r);
  return m;
}

} // namespace

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_train_test(std::size_t n_cycles, double train_fraction) {
  if (n_cycles < 5) raise(errc::insufficient, "need at least 5 cycles to split");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    raise(errc::argument, "train_fraction must be inside (0, 1)");
  const auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(n_cycles)));
  if (n_train == 0 || n_train == n_cycles)
    raise(errc::argument, "train_fraction leaves an empty split");
  std::vector<std::size_t> train(n_train), test(n_cycles - n_train);
  for (std::size_t i = 0; i < n_train; ++i) train[i] = i;
  for (std::size_t i = n_train; i < n_cycles; ++i) test[i - n_train] = i;
  return {std::move(train), std::move(test)};
}

ElmModel train_elm(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& y,
                   Eigen::Index hidden_dim, double ridge, std::uint64_t seed) {
  if (x.cols() != y.cols())
    raise(errc::argument, "x and y sample counts differ");
  ElmModel m = model_shell(x, hidden_dim, ridge, seed);
  m.weights.resize(hidden_dim, x.rows());
  m.bias.resize(hidden_dim);
  rng64 g(seed);
  draw_first_layer(m.weights, m.bias, g);
  const Eigen::MatrixXd xn = normalize(x, m);
  const Eigen::MatrixXd h = hidden_activations(m.weights, m.bias, xn);
  m.output_weights = solve_output_layer(h, y, ridge);
  return m;
}

Eigen::RowVectorXd predict(const ElmModel& model, const Eigen::MatrixXd& x) {
  if (x.rows() != model.input_dim)
    raise(errc::argument, "input dimension mismatch");
  if (x.cols() == 0) return Eigen::RowVectorXd(0);
  const Eigen::MatrixXd xn = normalize(x, model);
  return model.output_weights * hidden_activations(model.weights, model.bias, xn);
}

double rmse(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) raise(errc::argument, "rmse: length mismatch");
  if (y.empty()) raise(errc::argument, "rmse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - y_hat[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(y.size()));
}

double rmse(const Eigen::RowVectorXd& y, const Eigen::RowVectorXd& y_hat) {
  return rmse(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
              std::span<const double>(y_hat.data(), static_cast<std::size_t>(y_hat.size())));
}

WoaResult woa_optimize(const std::function<double(std::span<const double>)>& fitness,
                       std::size_t dim, const WoaConfig& config) {
  if (dim == 0) raise(errc::argument, "dimension must be >= 1");
  if (config.population < 2) raise(errc::argument, "population must be >= 2");
  if (config.max_iterations < 1) raise(errc::argument, "max_iterations must be >= 1");
  if (config.bounds.size() != dim)
    raise(errc::argument, "bounds must list one [lo, hi] pair per dimension");
  for (const auto& [lo, hi] : config.bounds)
    if (!(lo <= hi)) raise(errc::argument, "bound lower must be <= upper");
  if (config.initial.size() > config.population)
    raise(errc::argument, "more injected positions than population slots");
  for (const auto& p : config.initial)
    if (p.size() != dim) raise(errc::argument, "injected position has wrong dimension");

  const std::size_t s = config.population;
  rng64 g(config.seed);

  std::vector<std::vector<double>> pos(s, std::vector<double>(dim));
  for (std::size_t i = 0; i < s; ++i) {
    if (i < config.initial.size()) {
      pos[i] = config.initial[i];
      for (std::size_t d = 0; d < dim; ++d)
        pos[i][d] = std::clamp(pos[i][d], config.bounds[d].first, config.bounds[d].second);
    } else {
      for (std::size_t d = 0; d < dim; ++d)
        pos[i][d] = uniform(g, config.bounds[d].first, config.bounds[d].second);
    }
  }

  WoaResult result;
  result.best_fitness = std::numeric_limits<double>::infinity();
  std::vector<double> fit(s);
  for (std::size_t i = 0; i < s; ++i) {
    fit[i] = fitness(pos[i]);
    if (fit[i] < result.best_fitness) {
      result.best_fitness = fit[i];
      result.best_position = pos[i];
    }
  }

  const double b = config.spiral_b;
  const std::size_t t_max = config.max_iterations;
  result.trace.reserve(t_max);
  std::vector<std::vector<double>> next(s, std::vector<double>(dim));
  for (std::size_t t = 1; t <= t_max; ++t) {
    const double a =
        t_max == 1 ? 2.0
                   : 2.0 * (1.0 - static_cast<double>(t - 1) / static_cast<double>(t_max - 1));
    // Whole population moves against the same incumbent best.
    const std::vector<double> star = result.best_position;
    for (std::size_t i = 0; i < s; ++i) {
      const double p = uniform01(g);
      if (p < 0.5) {
        const std::vector<double>* ref = &star;
        if (a >= 1.0) {
          const auto pick = std::min<std::size_t>(
              s - 1, static_cast<std::size_t>(uniform01(g) * static_cast<double>(s)));
          ref = &pos[pick];
        }
        for (std::size_t d = 0; d < dim; ++d) {
          const double r1 = uniform01(g);
          const double r2 = uniform01(g);
          const double A = 2.0 * a * r1 - a;
          const double C = 2.0 * r2;
          const double D = std::abs(C * (*ref)[d] - pos[i][d]);
          next[i][d] = (*ref)[d] - A * D;
        }
      } else {
        for (std::size_t d = 0; d < dim; ++d) {
          const double L = uniform(g, -1.0, 1.0);
          next[i][d] = star[d] + std::abs(star[d] - pos[i][d]) * std::exp(b * L) *
                                     std::cos(2.0 * std::numbers::pi * L);
        }
      }
      for (std::size_t d = 0; d < dim; ++d)
        next[i][d] = std::clamp(next[i][d], config.bounds[d].first, config.bounds[d].second);
    }
    pos.swap(next);
    for (std::size_t i = 0; i < s; ++i) {
      fit[i] = fitness(pos[i]);
      if (fit[i] < result.best_fitness) {
        result.best_fitness = fit[i];
        result.best_position = pos[i];
      }
    }
    result.trace.push_back(result.best_fitness);
  }
  return result;
}

ElmModel train_woa_elm(const Eigen::MatrixXd& x, const Eigen::RowVectorXd& y,
                       Eigen::Index hidden_dim, const WoaConfig& woa, double ridge,
                       std::uint64_t seed) {
  if (x.cols() != y.cols())
    raise(errc::argument, "x and y sample counts differ");
  ElmModel m = model_shell(x, hidden_dim, ridge, seed);
  const Eigen::Index di = x.rows();
  const auto dim = static_cast<std::size_t>(hidden_dim * (di + 1));

  // Whale 0 is the plain-ELM first layer for this seed, so the optimized
  // training RMSE is bounded above by the unoptimized one.
  Eigen::MatrixXd w0(hidden_dim, di);
  Eigen::VectorXd b0(hidden_dim);
  rng64 g(seed);
  draw_first_layer(w0, b0, g);
  std::vector<double> x0(dim);
  {
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < hidden_dim; ++r)
      for (Eigen::Index c = 0; c < di; ++c) x0[k++] = w0(r, c);
    for (Eigen::Index r = 0; r < hidden_dim; ++r) x0[k++] = b0(r);
  }

  const Eigen::MatrixXd xn = normalize(x, m);
  auto unpack = [&](std::span<const double> v, Eigen::MatrixXd& w, Eigen::VectorXd& b) {
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < hidden_dim; ++r)
      for (Eigen::Index c = 0; c < di; ++c) w(r, c) = v[k++];
    for (Eigen::Index r = 0; r < hidden_dim; ++r) b(r) = v[k++];
  };
  Eigen::MatrixXd wc(hidden_dim, di);
  Eigen::VectorXd bc(hidden_dim);
  auto fit = [&](std::span<const double> v) {
    unpack(v, wc, bc);
    const Eigen::MatrixXd h = hidden_activations(wc, bc, xn);
    const Eigen::RowVectorXd beta = solve_output_layer(h, y, ridge);
    return rmse(y, beta * h);
  };

  WoaConfig cfg = woa;
  cfg.bounds.assign(dim, {-1.0, 1.0});
  cfg.initial = {std::move(x0)};
  const WoaResult res = woa_optimize(fit, dim, cfg);

  m.weights.resize(hidden_dim, di);
  m.bias.resize(hidden_dim);
  unpack(res.best_position, m.weights, m.bias);
  const Eigen::MatrixXd h = hidden_activations(m.weights, m.bias, xn);
  m.output_weights = solve_output_layer(h, y, ridge);
  return m;
}

std::string ElmModel::to_json() const {
  ordered_json j;
  j["schema_version"] = 1;
  j["input_dim"] = input_dim;
  j["hidden_dim"] = hidden_dim;
  j["ridge"] = ridge;
  j["seed"] = seed;
  auto vec = [](const auto& v) {
    ordered_json a = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
  };
  j["norm_min"] = vec(norm_min);
  j["norm_max"] = vec(norm_max);
  j["constant_input"] = constant_input;
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < weights.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < weights.cols(); ++c) row.push_back(weights(r, c));
    rows.push_back(std::move(row));
  }
  j["weights"] = std::move(rows);
  j["bias"] = vec(bias);
  j["output_weights"] = vec(output_weights);
  return textio::dump_json(j);
}

ElmModel ElmModel::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text, nullptr, false);
  if (j.is_discarded()) raise(errc::format, "model JSON does not parse");
  ElmModel m;
  try {
    if (j.at("schema_version").get<int>() != 1)
      raise(errc::format, "unsupported model schema_version");
    m.input_dim = j.at("input_dim").get<Eigen::Index>();
    m.hidden_dim = j.at("hidden_dim").get<Eigen::Index>();
    m.ridge = j.at("ridge").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    auto load_vec = [](const ordered_json& a, Eigen::Index n, const char* name) {
      if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != n)
        raise(errc::data, std::string("model field ") + name + " has wrong length");
      Eigen::VectorXd v(n);
      for (Eigen::Index i = 0; i < n; ++i) v(i) = a[static_cast<std::size_t>(i)].get<double>();
      return v;
    };
    if (m.input_dim < 1 || m.hidden_dim < 1)
      raise(errc::data, "model dimensions must be >= 1");
    m.norm_min = load_vec(j.at("norm_min"), m.input_dim, "norm_min");
    m.norm_max = load_vec(j.at("norm_max"), m.input_dim, "norm_max");
    m.constant_input = j.at("constant_input").get<std::vector<bool>>();
    if (m.constant_input.size() != static_cast<std::size_t>(m.input_dim))
      raise(errc::data, "model field constant_input has wrong length");
    const auto& rows = j.at("weights");
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != m.hidden_dim)
      raise(errc::data, "model field weights has wrong row count");
    m.weights.resize(m.hidden_dim, m.input_dim);
    for (Eigen::Index r = 0; r < m.hidden_dim; ++r) {
      const auto& row = rows[static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.input_dim)
        raise(errc::data, "model field weights has wrong column count");
      for (Eigen::Index c = 0; c < m.input_dim; ++c)
        m.weights(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    m.bias = load_vec(j.at("bias"), m.hidden_dim, "bias");
    m.output_weights = load_vec(j.at("output_weights"), m.hidden_dim, "output_weights").transpose();
  } catch (const ordered_json::exception& e) {
    raise(errc::format, std::string("model JSON malformed: ") + e.what());
  }
  return m;
}

} // namespace bhm
