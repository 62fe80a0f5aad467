#include "bslab/common/rng.hpp"

#include <sstream>
#include <vector>

#include "bslab/common/error.hpp"

namespace bslab {

RngStream::RngStream(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32)};
  engine_.seed(seq);
}

RngStream RngStream::derive(std::uint64_t seed,
                            std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * path.size());
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (std::uint64_t p : path) {
    // Offset so that path {0} differs from the bare seed.
    std::uint64_t v = p + 0x9e3779b97f4a7c15ULL;
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  RngStream out;
  out.engine_.seed(seq);
  return out;
}

double RngStream::uniform() {
  return std::generate_canonical<double, 53>(engine_);
}

double RngStream::normal(double mean, double stddev) {
  return mean + stddev * normal_(engine_);
}

std::size_t RngStream::below(std::size_t n) {
  if (n == 0) throw ContractError("RngStream::below: empty range");
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

std::string RngStream::serialize() const {
  std::ostringstream os;
  os << engine_ << ' ' << normal_;
  return os.str();
}

RngStream RngStream::deserialize(const std::string& text) {
  std::istringstream is(text);
  RngStream out;
  is >> out.engine_ >> out.normal_;
  if (!is) throw ParseError("malformed rng state");
  return out;
}

}  // namespace bslab
