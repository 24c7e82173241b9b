#pragma once

#include <array>
#include <cstdint>

namespace cforge {

/// Philox4x32-10 block cipher (Salmon et al.). Stateless: output is a pure
/// function of (counter, key).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key);
};

/// Stream purposes. Each gets its own counter word so streams never overlap.
enum class StreamTag : std::uint32_t {
  noise = 0,
  equilibrium = 1,
  clock = 2,
  mcmc = 3,
  bridge = 4,
};

/// Counter-based stream for one (seed, path_index, tag) triple. Copying a
/// stream forks it; two copies produce the same values.
class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t path_index, StreamTag tag);

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal (Box-Muller; both outputs are used).
  double normal();

  /// Jumps to the given 64-bit block index and clears any cached output.
  void seek(std::uint64_t block_index);

 private:
  void refill();

  Philox4x32::Key key_;
  std::uint32_t path_lo_;
  std::uint32_t tag_word_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int used_ = 4;  // in 32-bit words
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cforge
