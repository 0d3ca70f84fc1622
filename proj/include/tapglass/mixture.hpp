#ifndef TAPGLASS_MIXTURE_HPP
#define TAPGLASS_MIXTURE_HPP

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "tapglass/error.hpp"

namespace tapglass {

/// The covariance polynomial xi(t) = sum_p c_p t^p of a mixed p-spin model,
/// together with the external field h.
///
/// c_p is the squared coupling amplitude of the degree-p part, so that
/// E H(s1) H(s2) = N xi(R12) with H sampled from fully indexed tensors.
/// Any inverse temperature is absorbed into the c_p.
class MixtureSpec {
 public:
  static constexpr int kDefaultMaxDegree = 4;

  MixtureSpec(std::map<int, double> coeffs, double h = 0.0, int max_degree = kDefaultMaxDegree)
      : coeffs_(std::move(coeffs)), h_(h) {
    bool any_positive = false;
    for (const auto& [p, c] : coeffs_) {
      if (p < 2) throw DomainError("mixture degree must be >= 2, got " + std::to_string(p));
      if (p > max_degree)
        throw DomainError("mixture degree " + std::to_string(p) + " exceeds limit " +
                          std::to_string(max_degree));
      if (!(c >= 0.0) || !std::isfinite(c)) throw DomainError("mixture coefficients must be finite and >= 0");
      any_positive = any_positive || c > 0.0;
    }
    if (!any_positive) throw DomainError("mixture needs at least one positive coefficient");
    if (!(h >= 0.0) || !std::isfinite(h)) throw DomainError("external field must be finite and >= 0");
    max_degree_ = coeffs_.rbegin()->first;
  }

  static MixtureSpec sk(double c2, double h = 0.0) { return MixtureSpec({{2, c2}}, h); }

  double xi(double t) const {
    check_unit(t);
    double acc = 0.0;
    for (const auto& [p, c] : coeffs_) acc += c * std::pow(t, p);
    return acc;
  }

  double xi_prime(double t) const {
    check_unit(t);
    double acc = 0.0;
    for (const auto& [p, c] : coeffs_) acc += p * c * std::pow(t, p - 1);
    return acc;
  }

  double coefficient(int p) const {
    const auto it = coeffs_.find(p);
    return it == coeffs_.end() ? 0.0 : it->second;
  }

  /// sqrt(c_p): the coupling amplitude before the N^{-(p-1)/2} scaling.
  double amplitude(int p) const { return std::sqrt(coefficient(p)); }

  /// Degrees with c_p > 0, ascending.
  std::vector<int> degrees() const {
    std::vector<int> out;
    for (const auto& [p, c] : coeffs_)
      if (c > 0.0) out.push_back(p);
    return out;
  }

  const std::map<int, double>& coefficients() const noexcept { return coeffs_; }
  double h() const noexcept { return h_; }
  int max_degree() const noexcept { return max_degree_; }

  MixtureSpec with_field(double h) const { return MixtureSpec(coeffs_, h, max_degree_); }

  friend bool operator==(const MixtureSpec&, const MixtureSpec&) = default;

 private:
  static void check_unit(double t) {
    if (!(std::abs(t) <= 1.0)) throw DomainError("xi is defined on [-1, 1]");
  }

  std::map<int, double> coeffs_;
  double h_ = 0.0;
  int max_degree_ = 2;
};

}  // namespace tapglass

#endif  // TAPGLASS_MIXTURE_HPP
