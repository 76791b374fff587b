#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "rngaudit/nn.hpp"

namespace rngaudit::nn {

struct GradCheckResult {
  std::vector<std::pair<std::string, double>> rel_errors;

  double max_error() const {
    double m = 0.0;
    for (const auto& [name, e] : rel_errors) m = std::max(m, e);
    return m;
  }
};

/// Mean BCE over batch and labels, written with log-sigmoid so it stays exact.
template <class S>
double mean_bce_from_logits(const Mat<S>& z, const std::vector<sts::LabelVector>& labels) {
  double sum = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    for (Eigen::Index k = 0; k < z.cols(); ++k) {
      const double x = static_cast<double>(z(r, k));
      const double softplus = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
      sum += softplus - (labels[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] ? x : 0.0);
    }
  }
  return sum / static_cast<double>(z.size());
}

/// Analytic gradients of `model` (in its own precision) against central
/// differences on a double-precision copy. Per tensor the error is
/// |g - g_fd| / max(|g|, |g_fd|, floor) with floor = 1e-3 of the whole-model
/// gradient norm, so tensors whose true gradient vanishes are judged on
/// absolute error. Dropout is off.
template <class Model>
GradCheckResult gradient_check(const Model& model, const std::vector<Token>& tokens, std::size_t batch,
                               std::size_t length, const std::vector<sts::LabelVector>& labels, double h = 1e-5) {
  using S = typename Model::Scalar;
  typename Model::Cache cache;
  const Mat<S> z = model.logits(tokens.data(), batch, length, false, nullptr, &cache);
  Mat<S> dz(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    for (Eigen::Index k = 0; k < z.cols(); ++k) {
      const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(z(r, k))));
      const double y = labels[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] ? 1.0 : 0.0;
      dz(r, k) = static_cast<S>((p - y) / static_cast<double>(z.size()));
    }
  }
  auto grads = model.zeros_like();
  model.backward(cache, dz, grads);
  const auto analytic = Model::tensors(grads);

  auto twin = model.template cast<double>();
  const auto params = decltype(twin)::tensors(twin.params());
  auto eval = [&] {
    return mean_bce_from_logits<double>(twin.logits(tokens.data(), batch, length, false, nullptr, nullptr), labels);
  };

  std::vector<Mat<double>> numeric;
  double total = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Mat<double>& p = *params[t].second;
    Mat<double> fd(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + h;
      const double up = eval();
      p.data()[i] = saved - h;
      const double down = eval();
      p.data()[i] = saved;
      fd.data()[i] = (up - down) / (2.0 * h);
    }
    total += fd.squaredNorm();
    numeric.push_back(std::move(fd));
  }
  const double floor = 1e-3 * std::sqrt(total);

  GradCheckResult result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    const Mat<double> a = analytic[t].second->template cast<double>();
    const double denom = std::max({a.norm(), numeric[t].norm(), floor});
    result.rel_errors.emplace_back(params[t].first, (a - numeric[t]).norm() / denom);
  }
  return result;
}

}  // namespace rngaudit::nn
