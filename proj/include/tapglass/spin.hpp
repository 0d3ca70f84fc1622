#ifndef TAPGLASS_SPIN_HPP
#define TAPGLASS_SPIN_HPP

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "tapglass/error.hpp"

namespace tapglass {

/// Index of a configuration in the hypercube enumeration. Bit i is set iff
/// spin i (0-based) is -1, so index 0 is the all-plus configuration.
using ConfigIndex = std::uint32_t;

/// Largest dimension representable by the packed format.
inline constexpr int kMaxPackedDimension = 31;

/// A point of the hypercube {-1, +1}^N, stored as packed bits.
class SpinConfiguration {
 public:
  SpinConfiguration(ConfigIndex bits, int dimension) : bits_(bits), dimension_(dimension) {
    if (dimension < 1 || dimension > kMaxPackedDimension)
      throw DomainError("configuration dimension out of range: " + std::to_string(dimension));
    if (dimension < 32 && (bits >> dimension) != 0) throw DomainError("configuration bits exceed dimension");
  }

  static SpinConfiguration all_up(int dimension) { return {0, dimension}; }

  static SpinConfiguration from_signs(const std::vector<int>& signs) {
    ConfigIndex bits = 0;
    for (std::size_t i = 0; i < signs.size(); ++i) {
      if (signs[i] != 1 && signs[i] != -1) throw DomainError("spins must be +1 or -1");
      if (signs[i] == -1) bits |= ConfigIndex{1} << i;
    }
    return {bits, static_cast<int>(signs.size())};
  }

  /// Parses the packed bitstring form ('1' at position i means spin i is -1).
  static SpinConfiguration from_bitstring(const std::string& s) {
    ConfigIndex bits = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '1')
        bits |= ConfigIndex{1} << i;
      else if (s[i] != '0')
        throw DomainError("bitstring must contain only '0' and '1'");
    }
    return {bits, static_cast<int>(s.size())};
  }

  ConfigIndex index() const noexcept { return bits_; }
  int dimension() const noexcept { return dimension_; }

  int spin(int site) const noexcept { return ((bits_ >> site) & 1u) ? -1 : 1; }

  SpinConfiguration flipped(int site) const {
    check_site(site);
    return {bits_ ^ (ConfigIndex{1} << site), dimension_};
  }

  SpinConfiguration negated() const {
    const ConfigIndex mask = dimension_ == 32 ? ~ConfigIndex{0} : ((ConfigIndex{1} << dimension_) - 1);
    return {bits_ ^ mask, dimension_};
  }

  /// Drops the first coordinate.
  SpinConfiguration rho() const {
    if (dimension_ < 2) throw DomainError("cannot drop a coordinate of a 1-spin configuration");
    return {bits_ >> 1, dimension_ - 1};
  }

  /// (s, rest) in Sigma_1 x Sigma_{N-1}.
  static SpinConfiguration lift(int first_spin, const SpinConfiguration& rest) {
    return {(rest.bits_ << 1) | (first_spin == -1 ? 1u : 0u), rest.dimension_ + 1};
  }

  int magnetization_sum() const noexcept { return dimension_ - 2 * std::popcount(bits_); }

  std::vector<int> signs() const {
    std::vector<int> out(dimension_);
    for (int i = 0; i < dimension_; ++i) out[i] = spin(i);
    return out;
  }

  std::string bitstring() const {
    std::string s(dimension_, '0');
    for (int i = 0; i < dimension_; ++i)
      if ((bits_ >> i) & 1u) s[i] = '1';
    return s;
  }

  void check_site(int site) const {
    if (site < 0 || site >= dimension_) throw DomainError("site index out of range");
  }

  friend bool operator==(const SpinConfiguration&, const SpinConfiguration&) = default;

 private:
  ConfigIndex bits_;
  int dimension_;
};

/// R12 = (1/N) sum_i s1_i s2_i, kept as the exact integer inner product.
class Overlap {
 public:
  Overlap(int dot, int dimension) : dot_(dot), dimension_(dimension) {}
  int dot() const noexcept { return dot_; }
  int dimension() const noexcept { return dimension_; }
  double value() const noexcept { return static_cast<double>(dot_) / dimension_; }

 private:
  int dot_;
  int dimension_;
};

/// Inner product of two packed configurations of the same dimension n.
inline int spin_dot(ConfigIndex a, ConfigIndex b, int n) noexcept {
  return n - 2 * std::popcount(a ^ b);
}

inline Overlap overlap(const SpinConfiguration& a, const SpinConfiguration& b) {
  if (a.dimension() != b.dimension()) throw DomainError("overlap of configurations with different dimensions");
  return {spin_dot(a.index(), b.index(), a.dimension()), a.dimension()};
}

inline std::size_t hypercube_size(int n) { return std::size_t{1} << n; }

}  // namespace tapglass

#endif  // TAPGLASS_SPIN_HPP
