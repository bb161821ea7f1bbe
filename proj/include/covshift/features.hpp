#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace covshift {

enum class FeatureKind { Intercept, Raw, Quadratic };

inline std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::Intercept: return "intercept";
    case FeatureKind::Raw: return "raw";
    case FeatureKind::Quadratic: return "quadratic";
  }
  return "?";
}

inline FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "intercept") return FeatureKind::Intercept;
  if (s == "raw") return FeatureKind::Raw;
  if (s == "quadratic" || s == "expanded") return FeatureKind::Quadratic;
  throw std::invalid_argument("unknown feature map '" + s + "' (expected intercept|raw|quadratic)");
}

/// Maps a covariate vector to [1] (Intercept), [1, x] (Raw) or
/// [1, x, x^2, x_i x_j (i<j)] (Quadratic). An optional affine standardization (x - center) / scale is
/// applied first; an empty center means identity.
struct FeatureMap {
  FeatureKind kind = FeatureKind::Raw;
  Eigen::Index p_in = 0;
  Eigen::VectorXd center;
  Eigen::VectorXd scale;

  FeatureMap() = default;
  FeatureMap(FeatureKind k, Eigen::Index p) : kind(k), p_in(p) {}

  [[nodiscard]] static Eigen::Index output_dim(FeatureKind k, Eigen::Index p) {
    if (k == FeatureKind::Intercept) return 1;
    if (k == FeatureKind::Raw) return p + 1;
    return 1 + p + p + p * (p - 1) / 2;
  }
  [[nodiscard]] Eigen::Index p_out() const { return output_dim(kind, p_in); }
  [[nodiscard]] bool standardized() const { return center.size() > 0; }

  /// Returns a copy that standardizes by the column means and SDs of `x`.
  [[nodiscard]] FeatureMap standardized_on(const Eigen::MatrixXd& x) const {
    FeatureMap m = *this;
    const Eigen::Index n = x.rows();
    m.center = x.colwise().mean().transpose();
    m.scale.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double ss = (x.col(j).array() - m.center(j)).square().sum();
      const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
      m.scale(j) = sd > 0.0 ? sd : 1.0;
    }
    return m;
  }

  template <typename Derived>
  [[nodiscard]] Eigen::VectorXd operator()(const Eigen::MatrixBase<Derived>& x_in) const {
    if (x_in.size() != p_in)
      throw std::invalid_argument("feature map expects " + std::to_string(p_in) + " inputs, got " +
                                  std::to_string(x_in.size()));
    Eigen::VectorXd x = x_in;
    if (standardized()) x = (x - center).cwiseQuotient(scale);
    Eigen::VectorXd f(p_out());
    f(0) = 1.0;
    if (kind == FeatureKind::Intercept) return f;
    f.segment(1, p_in) = x;
    if (kind == FeatureKind::Quadratic) {
      Eigen::Index k = 1 + p_in;
      for (Eigen::Index j = 0; j < p_in; ++j) f(k++) = x(j) * x(j);
      for (Eigen::Index i = 0; i < p_in; ++i)
        for (Eigen::Index j = i + 1; j < p_in; ++j) f(k++) = x(i) * x(j);
    }
    return f;
  }

  /// Design matrix with one feature row per input row.
  [[nodiscard]] Eigen::MatrixXd design(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(x.rows(), p_out());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = (*this)(x.row(i).transpose()).transpose();
    return out;
  }
};

}  // namespace covshift
