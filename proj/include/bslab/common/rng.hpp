#ifndef BSLAB_COMMON_RNG_HPP_
#define BSLAB_COMMON_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>

namespace bslab {

// A seeded random stream. Streams are derived from a root seed plus a path of
// integers (worker, env, agent, ...) so that every consumer owns an
// independent, reproducible sequence.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t seed);

  static RngStream derive(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> path);

  double uniform();  // [0, 1)
  double normal(double mean = 0.0, double stddev = 1.0);
  std::uint64_t next_u64() { return engine_(); }
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

  // Full generator state as text, for exact resume.
  std::string serialize() const;
  static RngStream deserialize(const std::string& text);

  bool operator==(const RngStream& other) const {
    return engine_ == other.engine_ && normal_ == other.normal_;
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace bslab

#endif  // BSLAB_COMMON_RNG_HPP_
