#pragma once

#include <cmath>
#include <cstdint>

namespace flowfields {

struct Vec2i {
  int x = 0;
  int y = 0;
};

struct Vec2f {
  float x = 0.f;
  float y = 0.f;
};

struct Vec3f {
  float v[3] = {0.f, 0.f, 0.f};
  float& operator[](int i) { return v[i]; }
  float operator[](int i) const { return v[i]; }
};

inline Vec2f operator+(Vec2f a, Vec2f b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2f operator-(Vec2f a, Vec2f b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2f operator+(Vec2i a, Vec2f b) { return {a.x + b.x, a.y + b.y}; }
inline bool operator==(Vec2f a, Vec2f b) { return a.x == b.x && a.y == b.y; }
inline bool operator==(Vec2i a, Vec2i b) { return a.x == b.x && a.y == b.y; }
inline float norm(Vec2f a) { return std::sqrt(a.x * a.x + a.y * a.y); }

inline int clamp_int(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Counter-based generator: a 64-bit key is hashed into an independent
// stream, so per-pixel streams can be derived without shared state.
struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // uniform in [-half_width, half_width]
  double uniform_symmetric(double half_width) { return (2.0 * uniform() - 1.0) * half_width; }
};

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  SplitMix64 g(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
  return g.next();
}

// Deterministic stream for (seed, pass, pixel) triples; used by the
// random search so results do not depend on iteration order.
inline SplitMix64 pixel_rng(std::uint64_t seed, std::uint64_t pass, std::uint64_t pixel) {
  return SplitMix64(hash_combine(hash_combine(seed, pass), pixel));
}

}  // namespace flowfields
