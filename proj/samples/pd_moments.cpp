// Second moment of PD(theta, 0) weights from the two samplers.

#include <cstdio>
#include <vector>

#include "tapglass/pd.hpp"
#include "tapglass/stats.hpp"

int main() {
  using namespace tapglass;
  for (double theta : {0.3, 0.5, 0.7}) {
    std::vector<double> poisson, sticks;
    for (std::uint64_t s = 0; s < 20000; ++s) {
      poisson.push_back(sample_pd(theta, 200, s).sum_of_squares());
      double rest = 0.0;
      const auto p = sample_pd_stick_breaking(theta, 200, s, &rest);
      sticks.push_back(p.sum_of_squares() + stick_breaking_square_correction(theta, 200, rest));
    }
    std::printf("theta %.1f  1-theta %.4f  poisson %.4f +- %.4f  sticks %.4f +- %.4f\n", theta, 1 - theta,
                stats::mean(poisson), stats::standard_error(poisson), stats::mean(sticks),
                stats::standard_error(sticks));
  }
}
