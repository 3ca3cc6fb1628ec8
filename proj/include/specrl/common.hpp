// Shared aliases, seeded substreams and small numeric helpers.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace specrl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Raised when a training loss or gradient turns non-finite. Carries enough
// context to write a diagnostic snapshot from the CLI.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Named substream derivation: one master seed fans out to independent
// streams ("env", "nets", "buffer", ...) so ablations perturb exactly one.
inline std::uint64_t substream_seed(std::uint64_t master, std::string_view name) {
  std::uint64_t h = splitmix64(master);
  for (char c : name) h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
  return h;
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view name) {
  return std::mt19937_64(substream_seed(master, name));
}

inline double clampd(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

// Flush subnormal floats to zero for the whole process. Subnormal arithmetic
// runs orders of magnitude slower on x86 and shows up here when variances or
// gradients decay toward zero; the lost precision is far below any tolerance
// used in this codebase.
void enable_flush_to_zero();

}  // namespace specrl
