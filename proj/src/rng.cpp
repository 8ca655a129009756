#include "simeval/rng.hpp"

namespace simeval {

namespace {

// splitmix64 finalizer; spreads low-entropy inputs across all 64 bits.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base,
                          std::span<const std::string_view> tags) {
  // FNV-1a over the base seed and tag bytes, tags separated by a sentinel so
  // ("ab","c") and ("a","bc") derive differently.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (int i = 0; i < 8; ++i) feed(static_cast<unsigned char>(base >> (8 * i)));
  for (std::string_view t : tags) {
    for (char c : t) feed(static_cast<unsigned char>(c));
    feed(0xffu);
  }
  return mix64(h);
}

}  // namespace simeval
