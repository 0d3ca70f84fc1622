#ifndef TAPGLASS_MULTILINEAR_HPP
#define TAPGLASS_MULTILINEAR_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "tapglass/numerics.hpp"
#include "tapglass/parallel.hpp"
#include "tapglass/spin.hpp"

namespace tapglass {

/// A polynomial on the hypercube in its reduced multilinear form
///   f(x) = constant + sum_S a_S prod_{i in S} s_i,
/// where each monomial S is a bitmask of sites. Since s_i^2 = 1, any product
/// of spins reduces to the sites that occur an odd number of times.
class MultilinearForm {
 public:
  struct Term {
    ConfigIndex mask;
    double coeff;
  };

  /// Collects coefficients in insertion order per monomial.
  class Builder {
   public:
    explicit Builder(int n) : n_(n) {}
    void add(ConfigIndex mask, double coeff) {
      if (mask == 0) {
        constant_ += coeff;
        return;
      }
      auto [it, inserted] = index_.try_emplace(mask, terms_.size());
      if (inserted)
        terms_.push_back({mask, coeff});
      else
        terms_[it->second].coeff += coeff;
    }
    MultilinearForm build() && { return MultilinearForm(n_, constant_, std::move(terms_)); }

   private:
    int n_;
    double constant_ = 0.0;
    std::vector<Term> terms_;
    std::unordered_map<ConfigIndex, std::size_t> index_;
  };

  MultilinearForm() = default;

  MultilinearForm(int n, double constant, std::vector<Term> terms)
      : n_(n), constant_(constant), terms_(std::move(terms)), by_site_(static_cast<std::size_t>(n)) {
    std::sort(terms_.begin(), terms_.end(), [](const Term& a, const Term& b) { return a.mask < b.mask; });
    for (const Term& t : terms_)
      for (int i = 0; i < n_; ++i)
        if ((t.mask >> i) & 1u) by_site_[i].push_back(t);
  }

  int dimension() const noexcept { return n_; }
  double constant() const noexcept { return constant_; }
  const std::vector<Term>& terms() const noexcept { return terms_; }

  static double parity(ConfigIndex mask, ConfigIndex x) noexcept {
    return (std::popcount(mask & x) & 1) ? -1.0 : 1.0;
  }

  double evaluate(ConfigIndex x) const noexcept {
    double acc = constant_;
    for (const Term& t : terms_) acc += t.coeff * parity(t.mask, x);
    return acc;
  }

  /// f(x with `site` flipped) - f(x).
  double flip_delta(ConfigIndex x, int site) const noexcept {
    double acc = 0.0;
    for (const Term& t : by_site_[site]) acc += t.coeff * parity(t.mask, x);
    return -2.0 * acc;
  }

  /// Returns f(x) + h * sum_i s_i for every x in [0, 2^n), visiting states
  /// in Gray-code order and updating by single-flip deltas. Segments have a
  /// fixed length, so the values do not depend on the worker count.
  std::vector<double> enumerate(double h = 0.0, unsigned workers = 1) const {
    const std::size_t total = hypercube_size(n_);
    std::vector<double> values(total);
    const std::size_t seg = std::min<std::size_t>(total, kSegment);
    const std::size_t segments = total / seg;
    parallel_for(segments, workers, [&](std::size_t s) {
      std::size_t t = s * seg;
      ConfigIndex x = static_cast<ConfigIndex>(t ^ (t >> 1));
      double v = evaluate(x) + h * (n_ - 2 * std::popcount(x));
      values[x] = v;
      for (++t; t < (s + 1) * seg; ++t) {
        const int site = std::countr_zero(t);
        const double spin = ((x >> site) & 1u) ? -1.0 : 1.0;
        v += flip_delta(x, site) - 2.0 * h * spin;
        x ^= ConfigIndex{1} << site;
        values[x] = v;
      }
    });
    return values;
  }

  /// Pointwise sum of two forms on the same dimension.
  friend MultilinearForm operator+(const MultilinearForm& a, const MultilinearForm& b) {
    Builder builder(a.n_);
    builder.add(0, a.constant_ + b.constant_);
    for (const Term& t : a.terms_) builder.add(t.mask, t.coeff);
    for (const Term& t : b.terms_) builder.add(t.mask, t.coeff);
    return std::move(builder).build();
  }

 private:
  static constexpr std::size_t kSegment = std::size_t{1} << 12;

  int n_ = 0;
  double constant_ = 0.0;
  std::vector<Term> terms_;
  std::vector<std::vector<Term>> by_site_;
};

}  // namespace tapglass

#endif  // TAPGLASS_MULTILINEAR_HPP
