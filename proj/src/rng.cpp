#include "coarse_forge/rng.hpp"

#include <cmath>
#include <numbers>

namespace cforge {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

Philox4x32::Counter Philox4x32::block(Counter ctr, Key key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

CounterStream::CounterStream(std::uint64_t seed, std::uint64_t path_index, StreamTag tag)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      path_lo_(static_cast<std::uint32_t>(path_index)),
      // paths beyond 2^32 spill into the high bits of the tag word
      tag_word_(static_cast<std::uint32_t>(tag) |
                (static_cast<std::uint32_t>(path_index >> 32) << 4)) {}

void CounterStream::seek(std::uint64_t block_index) {
  block_ = block_index;
  used_ = 4;
  has_spare_ = false;
}

void CounterStream::refill() {
  buf_ = Philox4x32::block({static_cast<std::uint32_t>(block_),
                            static_cast<std::uint32_t>(block_ >> 32), path_lo_, tag_word_},
                           key_);
  ++block_;
  used_ = 0;
}

std::uint64_t CounterStream::next_u64() {
  if (used_ > 2) refill();
  const std::uint64_t v = (static_cast<std::uint64_t>(buf_[used_]) << 32) | buf_[used_ + 1];
  used_ += 2;
  return v;
}

double CounterStream::uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double CounterStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

}  // namespace cforge
