#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace pglmm {

// FNV-1a over an octet string, used for sub-seed derivation and file digests.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);

// Deterministic per-(study, EM-iteration) sub-seed so chains stay
// reproducible regardless of scheduling order.
std::uint64_t chain_seed(std::uint64_t base_seed, const std::string& study_id, int em_iter);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform() { return unif_(eng_); }
  double normal(double mean = 0.0, double sd = 1.0) { return mean + sd * norm_(eng_); }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace pglmm
