#include "fedrec/random.hpp"

namespace fedrec {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng derive_stream(std::uint64_t master_seed, std::string_view name) {
  return Rng(splitmix64(master_seed ^ splitmix64(fnv1a(name))));
}

Rng derive_stream(std::uint64_t master_seed, std::string_view name, std::uint64_t index) {
  return Rng(splitmix64(splitmix64(master_seed ^ splitmix64(fnv1a(name))) + index));
}

}  // namespace fedrec
