#include "pglmm/rng.hpp"

namespace pglmm {

std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::uint64_t chain_seed(std::uint64_t base_seed, const std::string& study_id, int em_iter) {
  std::string key = study_id;
  key.push_back('#');
  key += std::to_string(em_iter);
  return base_seed ^ fnv1a64(key);
}

}  // namespace pglmm
