#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace mvl {

/// Philox4x32-10 counter-based block function (Salmon et al., SC'11).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter apply(Counter counter, Key key) noexcept;
};

/// Random draws for one (seed, stream, step) triple.
///
/// Every path or particle owns a stream index and every time step a step
/// index, so a draw depends only on where it sits in the simulation and not
/// on the order in which workers happen to run.  Within one step the draws
/// are consumed sequentially.
class DrawStream {
 public:
  DrawStream(std::uint64_t seed, std::uint32_t stream, std::uint64_t step) noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Standard normal (Box-Muller on two uniforms).
  double normal() noexcept;
  void normals(std::span<double> out) noexcept;

 private:
  void refill() noexcept;

  Philox4x32::Key key_{};
  Philox4x32::Counter counter_{};
  Philox4x32::Counter block_{};
  int used_ = 2;  // uniforms consumed from block_ (two per block)
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Independent 64-bit seed for a sub-experiment (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

// Reserved stream indices for auxiliary randomness that is not a path.
inline constexpr std::uint32_t kAuxStreamBase = 0x80000000u;

}  // namespace mvl
