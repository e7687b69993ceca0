#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <string_view>

#include "ognn/common.hpp"

namespace ognn {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Named, independently seeded random streams. A stream's initial state
/// depends only on (master seed, stream name), never on the order streams
/// are first touched, so enabling or disabling one consumer cannot shift
/// the draws of another.
class RngPool {
 public:
  explicit RngPool(std::uint64_t master_seed) : master_(master_seed) {}

  std::uint64_t master_seed() const { return master_; }

  std::mt19937_64& stream(std::string_view name) {
    auto it = streams_.find(name);
    if (it == streams_.end()) {
      std::mt19937_64 gen(splitmix64(master_ ^ splitmix64(fnv1a64(name))));
      it = streams_.emplace(std::string(name), std::move(gen)).first;
    }
    return it->second;
  }

  // Stream positions serialize as text; mt19937_64 stream operators are
  // stable for a given libstdc++.
  void save(std::ostream& os) const {
    os << master_ << '\n' << streams_.size() << '\n';
    for (const auto& [name, gen] : streams_) {
      os << name << '\n' << gen << '\n';
    }
  }

  static RngPool load(std::istream& is) {
    std::uint64_t master = 0;
    std::size_t count = 0;
    is >> master >> count;
    is.ignore();
    RngPool pool(master);
    for (std::size_t i = 0; i < count; ++i) {
      std::string name;
      std::getline(is, name);
      std::mt19937_64 gen;
      is >> gen;
      is.ignore();
      pool.streams_.emplace(std::move(name), std::move(gen));
    }
    if (!is) throw StateError("rng pool: truncated stream state");
    return pool;
  }

  bool operator==(const RngPool& other) const {
    return master_ == other.master_ && streams_ == other.streams_;
  }

 private:
  std::uint64_t master_;
  std::map<std::string, std::mt19937_64, std::less<>> streams_;
};

/// Derives an independent child seed, e.g. per split or per grid cell.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64(salt + 0x51ed270b424eaa17ULL));
}

}  // namespace ognn
