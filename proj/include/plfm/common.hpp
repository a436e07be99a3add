#pragma once

// Shared basics: error type, deterministic RNG, small vector math.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace plfm {

inline constexpr const char* version = "0.1.0";

// All recoverable failures are thrown as Error with a short machine-checkable
// kind ("UnknownResidue", "MalformedContig", ...) plus a human message.
struct Error : std::runtime_error {
  std::string kind;
  Error(std::string k, const std::string& msg)
      : std::runtime_error(k + ": " + msg), kind(std::move(k)) {}
};

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) {
  double n = norm(a);
  return {a[0] / n, a[1] / n, a[2] / n};
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// Deterministic RNG. mt19937_64 raw output is fully specified by the
// standard; the transforms below avoid std::*_distribution, whose exact
// sequences are implementation-defined. The engine state round-trips through
// strings so training runs can resume bitwise.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(splitmix64(seed)), seed_(splitmix64(seed)) {}

  // Independent child stream for a named subsystem. Every consumer of
  // randomness forks off one master seed: fork("vae-init"), fork("sample-7").
  // Forking is derived from the original seed, not the evolving engine state,
  // so the set of streams a run uses is stable regardless of draw order.
  Rng fork(const std::string& label) const {
    Rng child(0);
    child.seed_ = splitmix64(seed_ ^ fnv1a64(label));
    child.eng_.seed(child.seed_);
    return child;
  }

  double uniform() {  // [0, 1)
    return double(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + int(uniform() * double(hi - lo + 1));
  }

  double normal() {  // Box-Muller, no cached spare so state is just the engine
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Vec3 normal3() { return {normal(), normal(), normal()}; }

  // Marsaglia-Tsang squeeze method.
  double gamma(double alpha) {
    if (alpha < 1.0) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
  }

  std::string state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (is.fail()) throw Error("MalformedRecord", "bad rng state string");
  }

 private:
  std::mt19937_64 eng_;
  uint64_t seed_ = 0;
};

}  // namespace plfm
