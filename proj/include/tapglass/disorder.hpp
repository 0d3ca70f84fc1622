#ifndef TAPGLASS_DISORDER_HPP
#define TAPGLASS_DISORDER_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "tapglass/error.hpp"
#include "tapglass/mixture.hpp"
#include "tapglass/multilinear.hpp"
#include "tapglass/numerics.hpp"
#include "tapglass/parallel.hpp"
#include "tapglass/rng.hpp"
#include "tapglass/spin.hpp"

namespace tapglass {

struct SamplerCaps {
  int max_n = 22;
  std::size_t memory_budget_bytes = std::size_t{1} << 30;
};

/// Coupling tensor of one degree, stored fully indexed: entry
/// (i1, ..., ip) lives at flat index ((i1 * N + i2) * N + ...) + ip.
struct DegreeTensor {
  int degree = 0;
  /// sqrt(c_p) * N^{-(p-1)/2}
  double scale = 0.0;
  std::vector<double> entries;
};

inline std::size_t integer_power(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

/// One draw of the Gaussian couplings for every degree of a mixture.
/// Immutable after construction; the reduced multilinear form of the
/// tensor part of the Hamiltonian is cached for fast evaluation.
class DisorderRealization {
 public:
  DisorderRealization(MixtureSpec spec, int n, std::uint64_t seed, std::vector<DegreeTensor> tensors)
      : spec_(std::move(spec)), n_(n), seed_(seed), tensors_(std::move(tensors)) {
    if (n_ < 2 || n_ > kMaxPackedDimension) throw DomainError("dimension out of range");
    for (const auto& t : tensors_)
      if (t.entries.size() != integer_power(n_, t.degree)) throw DomainError("tensor size does not match N^p");
    form_ = build_form();
  }

  const MixtureSpec& spec() const noexcept { return spec_; }
  int dimension() const noexcept { return n_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<DegreeTensor>& tensors() const noexcept { return tensors_; }
  /// Tensor part of the Hamiltonian (no external field) in reduced form.
  const MultilinearForm& form() const noexcept { return form_; }

  /// Tensor part evaluated by full contraction over all N^p index tuples.
  double disorder_energy(const SpinConfiguration& s) const {
    check_dimension(s);
    const auto signs = s.signs();
    double total = 0.0;
    std::vector<double> buf;
    for (const auto& t : tensors_) {
      buf = t.entries;
      std::size_t len = buf.size();
      for (int k = 0; k < t.degree; ++k) {
        const std::size_t out = len / n_;
        for (std::size_t a = 0; a < out; ++a) {
          KahanSum acc;
          for (int i = 0; i < n_; ++i) acc += buf[a * n_ + i] * signs[i];
          buf[a] = acc.value();
        }
        len = out;
      }
      total += t.scale * buf[0];
    }
    return total;
  }

  void check_dimension(const SpinConfiguration& s) const {
    if (s.dimension() != n_) throw DomainError("configuration dimension does not match the disorder");
  }

 private:
  MultilinearForm build_form() const {
    MultilinearForm::Builder builder(n_);
    for (const auto& t : tensors_) {
      std::vector<int> idx(t.degree, 0);
      for (std::size_t flat = 0; flat < t.entries.size(); ++flat) {
        ConfigIndex mask = 0;
        for (int k = 0; k < t.degree; ++k) mask ^= ConfigIndex{1} << idx[k];
        builder.add(mask, t.scale * t.entries[flat]);
        for (int k = t.degree - 1; k >= 0; --k) {
          if (++idx[k] < n_) break;
          idx[k] = 0;
        }
      }
    }
    return std::move(builder).build();
  }

  MixtureSpec spec_;
  int n_;
  std::uint64_t seed_;
  std::vector<DegreeTensor> tensors_;
  MultilinearForm form_;
};

inline double degree_scale(const MixtureSpec& spec, int p, int n) {
  return spec.amplitude(p) * std::pow(static_cast<double>(n), -0.5 * (p - 1));
}

inline std::size_t disorder_memory_estimate(const MixtureSpec& spec, int n) {
  std::size_t bytes = 0;
  for (int p : spec.degrees()) bytes += integer_power(n, p) * sizeof(double) * 2;
  return bytes;
}

/// Draws standard Gaussian tensor entries from the counter stream keyed by
/// (seed, degree, flat index).
inline DisorderRealization sample_disorder(const MixtureSpec& spec, int n, std::uint64_t seed,
                                           const SamplerCaps& caps = {}, unsigned workers = 1) {
  if (n < 2 || n > kMaxPackedDimension) throw DomainError("N = " + std::to_string(n) + " is not a valid dimension");
  if (n > caps.max_n) throw CapError("N = " + std::to_string(n) + " exceeds the sampler cap " + std::to_string(caps.max_n));
  if (disorder_memory_estimate(spec, n) > caps.memory_budget_bytes)
    throw CapError("disorder tensors would exceed the memory budget");
  std::vector<DegreeTensor> tensors;
  for (int p : spec.degrees()) {
    DegreeTensor t{p, degree_scale(spec, p, n), std::vector<double>(integer_power(n, p))};
    const CounterStream stream(seed, streams::kTensor | static_cast<std::uint64_t>(p));
    constexpr std::size_t kBlock = 4096;
    const std::size_t blocks = (t.entries.size() + kBlock - 1) / kBlock;
    parallel_for(blocks, workers, [&](std::size_t b) {
      const std::size_t end = std::min(t.entries.size(), (b + 1) * kBlock);
      for (std::size_t i = b * kBlock; i < end; ++i) t.entries[i] = stream.normal(i);
    });
    tensors.push_back(std::move(t));
  }
  return DisorderRealization(spec, n, seed, std::move(tensors));
}

/// Test hook: all couplings zero, only the external field acts.
inline DisorderRealization zero_disorder(const MixtureSpec& spec, int n) {
  std::vector<DegreeTensor> tensors;
  for (int p : spec.degrees())
    tensors.push_back({p, degree_scale(spec, p, n), std::vector<double>(integer_power(n, p), 0.0)});
  return DisorderRealization(spec, n, 0, std::move(tensors));
}

/// Couplings given explicitly as raw (unscaled) entries per degree.
inline DisorderRealization disorder_from_entries(const MixtureSpec& spec, int n,
                                                 const std::map<int, std::vector<double>>& entries,
                                                 std::uint64_t seed = 0) {
  std::vector<DegreeTensor> tensors;
  for (int p : spec.degrees()) {
    const auto it = entries.find(p);
    if (it == entries.end()) throw DomainError("missing tensor for degree " + std::to_string(p));
    tensors.push_back({p, degree_scale(spec, p, n), it->second});
  }
  return DisorderRealization(spec, n, seed, std::move(tensors));
}

/// Gaussian couplings plus a uniform shift on the degree-2 tensor that adds
/// (ferro / 2) * N * m^2 to the Hamiltonian, m the magnetization. For
/// ferro > 1 the Gibbs measure splits into two wells around +-(1, ..., 1).
inline DisorderRealization planted_two_well(const MixtureSpec& spec, int n, std::uint64_t seed, double ferro,
                                            const SamplerCaps& caps = {}) {
  if (spec.coefficient(2) <= 0.0) throw DomainError("planted instance needs c_2 > 0");
  const auto base = sample_disorder(spec, n, seed, caps);
  std::vector<DegreeTensor> tensors = base.tensors();
  const double shift = ferro / (2.0 * std::sqrt(spec.coefficient(2)) * std::sqrt(static_cast<double>(n)));
  for (auto& t : tensors)
    if (t.degree == 2)
      for (double& g : t.entries) g += shift;
  return DisorderRealization(spec, n, seed, std::move(tensors));
}

/// H_N(s) = tensor part + h * sum_i s_i.
inline double energy(const DisorderRealization& d, const SpinConfiguration& s) {
  return d.disorder_energy(s) + d.spec().h() * s.magnetization_sum();
}

/// energy(flip(s, site)) - energy(s) from the reduced form.
inline double energy_delta(const DisorderRealization& d, const SpinConfiguration& s, int site) {
  d.check_dimension(s);
  s.check_site(site);
  return d.form().flip_delta(s.index(), site) - 2.0 * d.spec().h() * s.spin(site);
}

/// The split H_N(s) = Htilde(rho(s)) + s_1 y(rho(s)) + r(s_1, rho(s)) of the
/// tensor part, obtained by sorting every index tuple by the number l of
/// indices equal to the first site: l = 0 goes to Htilde, l = 1 to the
/// local field y, l >= 2 to the remainder r. The remainder is kept as
/// r(s, .) = even(.) + s * odd(.), even collecting even l and odd the odd l >= 3.
class CavitySplit {
 public:
  explicit CavitySplit(const DisorderRealization& d) : n_(d.dimension()), spec_(d.spec()) {
    if (n_ < 2) throw DomainError("cavity split needs N >= 2");
    const int m = n_ - 1;
    MultilinearForm::Builder tilde(m), field(m), even(m), odd(m);
    for (const auto& t : d.tensors()) {
      std::vector<int> idx(t.degree, 0);
      for (std::size_t flat = 0; flat < t.entries.size(); ++flat) {
        int ell = 0;
        ConfigIndex mask = 0;
        for (int k = 0; k < t.degree; ++k) {
          if (idx[k] == 0)
            ++ell;
          else
            mask ^= ConfigIndex{1} << (idx[k] - 1);
        }
        const double c = t.scale * t.entries[flat];
        if (ell == 0) {
          tilde.add(mask, c);
        } else if (ell == 1) {
          field.add(mask, c);
        } else if (ell % 2 == 0) {
          even.add(mask, c);
        } else {
          odd.add(mask, c);
          odd_variance_ += t.scale * t.scale;
        }
        if (ell >= 2) remainder_variance_ += t.scale * t.scale;
        for (int k = t.degree - 1; k >= 0; --k) {
          if (++idx[k] < n_) break;
          idx[k] = 0;
        }
      }
    }
    tilde_ = std::move(tilde).build();
    field_ = std::move(field).build();
    even_ = std::move(even).build();
    odd_ = std::move(odd).build();
  }

  int dimension() const noexcept { return n_; }
  const MixtureSpec& spec() const noexcept { return spec_; }

  double tilde(const SpinConfiguration& rest) const { return tilde_.evaluate(check(rest)); }
  double field(const SpinConfiguration& rest) const { return field_.evaluate(check(rest)); }
  double remainder(int first_spin, const SpinConfiguration& rest) const {
    const ConfigIndex x = check(rest);
    return even_.evaluate(x) + first_spin * odd_.evaluate(x);
  }

  const MultilinearForm& tilde_form() const noexcept { return tilde_; }
  const MultilinearForm& field_form() const noexcept { return field_; }
  const MultilinearForm& remainder_even_form() const noexcept { return even_; }
  const MultilinearForm& remainder_odd_form() const noexcept { return odd_; }

  /// H'(s) = Htilde(s) + r(1, s): the Hamiltonian of the cavity system on
  /// Sigma_{N-1}, independent of the local field.
  MultilinearForm cavity_hamiltonian() const { return tilde_ + even_ + odd_; }

  /// y on every configuration of Sigma_{N-1}, indexed by ConfigIndex.
  std::vector<double> field_table(unsigned workers = 1) const { return field_.enumerate(0.0, workers); }

  /// Var(r(1, s) - r(-1, s)) from the coefficient variances of the tuples
  /// behind this realization (each g is standard Gaussian).
  double remainder_difference_variance() const noexcept { return 4.0 * odd_variance_; }
  /// E r(s, rho)^2 from the coefficient variances.
  double remainder_variance() const noexcept { return remainder_variance_; }

 private:
  ConfigIndex check(const SpinConfiguration& rest) const {
    if (rest.dimension() != n_ - 1) throw DomainError("cavity evaluators act on Sigma_{N-1}");
    return rest.index();
  }

  int n_;
  MixtureSpec spec_;
  MultilinearForm tilde_, field_, even_, odd_;
  double odd_variance_ = 0.0;
  double remainder_variance_ = 0.0;
};

inline CavitySplit cavity_split(const DisorderRealization& d) { return CavitySplit(d); }

/// Closed form of Var(r(1, s) - r(-1, s)):
///   sum_p c_p * 4 / N^{p-1} * sum_{l >= 3 odd} C(p, l) (N-1)^{p-l}.
inline double remainder_difference_variance_formula(const MixtureSpec& spec, int n) {
  double total = 0.0;
  for (int p : spec.degrees()) {
    double inner = 0.0;
    for (int ell = 3; ell <= p; ell += 2) inner += binomial(p, ell) * std::pow(n - 1.0, p - ell);
    total += spec.coefficient(p) * 4.0 / std::pow(static_cast<double>(n), p - 1) * inner;
  }
  return total;
}

/// Closed form of E r^2 = sum_p c_p / N^{p-1} * sum_{l >= 2} C(p, l) (N-1)^{p-l}.
inline double remainder_variance_formula(const MixtureSpec& spec, int n) {
  double total = 0.0;
  for (int p : spec.degrees()) {
    double inner = 0.0;
    for (int ell = 2; ell <= p; ++ell) inner += binomial(p, ell) * std::pow(n - 1.0, p - ell);
    total += spec.coefficient(p) / std::pow(static_cast<double>(n), p - 1) * inner;
  }
  return total;
}

// Binary dump: "TAPGDIS1", u32 N, u32 degree count, u64 seed, f64 h, then per
// degree u32 p, f64 c_p and N^p f64 raw entries. All little-endian.
namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(buf, 8);
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(buf, 4);
}
inline std::uint64_t get_u64(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw Error("truncated disorder dump");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf[i]} << (8 * i);
  return v;
}
inline std::uint32_t get_u32(std::istream& is) {
  unsigned char buf[4];
  if (!is.read(reinterpret_cast<char*>(buf), 4)) throw Error("truncated disorder dump");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{buf[i]} << (8 * i);
  return v;
}

inline constexpr char kDumpMagic[8] = {'T', 'A', 'P', 'G', 'D', 'I', 'S', '1'};

}  // namespace detail

inline void write_disorder(std::ostream& os, const DisorderRealization& d) {
  os.write(detail::kDumpMagic, 8);
  detail::put_u32(os, static_cast<std::uint32_t>(d.dimension()));
  detail::put_u32(os, static_cast<std::uint32_t>(d.tensors().size()));
  detail::put_u64(os, d.seed());
  detail::put_u64(os, std::bit_cast<std::uint64_t>(d.spec().h()));
  for (const auto& t : d.tensors()) {
    detail::put_u32(os, static_cast<std::uint32_t>(t.degree));
    detail::put_u64(os, std::bit_cast<std::uint64_t>(d.spec().coefficient(t.degree)));
    for (double g : t.entries) detail::put_u64(os, std::bit_cast<std::uint64_t>(g));
  }
}

inline DisorderRealization read_disorder(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kDumpMagic, 8) != 0)
    throw Error("not a disorder dump");
  const int n = static_cast<int>(detail::get_u32(is));
  const std::uint32_t count = detail::get_u32(is);
  const std::uint64_t seed = detail::get_u64(is);
  const double h = std::bit_cast<double>(detail::get_u64(is));
  if (n < 2 || n > kMaxPackedDimension || count == 0 || count > 16) throw Error("corrupt disorder dump header");
  std::map<int, double> coeffs;
  std::map<int, std::vector<double>> entries;
  for (std::uint32_t k = 0; k < count; ++k) {
    const int p = static_cast<int>(detail::get_u32(is));
    if (p < 2 || p > MixtureSpec::kDefaultMaxDegree) throw Error("corrupt disorder dump degree");
    coeffs[p] = std::bit_cast<double>(detail::get_u64(is));
    std::vector<double> g(integer_power(n, p));
    for (double& x : g) x = std::bit_cast<double>(detail::get_u64(is));
    entries[p] = std::move(g);
  }
  return disorder_from_entries(MixtureSpec(coeffs, h), n, entries, seed);
}

}  // namespace tapglass

#endif  // TAPGLASS_DISORDER_HPP
