// prbs.hpp
// Maximal-length linear feedback shift register sequences.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcfqkd {

namespace detail {

// Feedback taps of primitive polynomials x^n + ... + 1, indexed by order.
inline constexpr std::array<std::array<int, 4>, 33> prbs_taps{{
    {0, 0, 0, 0},     {0, 0, 0, 0},     {2, 1, 0, 0},     {3, 2, 0, 0},
    {4, 3, 0, 0},     {5, 3, 0, 0},     {6, 5, 0, 0},     {7, 6, 0, 0},
    {8, 6, 5, 4},     {9, 5, 0, 0},     {10, 7, 0, 0},    {11, 9, 0, 0},
    {12, 11, 10, 4},  {13, 12, 11, 8},  {14, 13, 12, 2},  {15, 14, 0, 0},
    {16, 15, 13, 4},  {17, 14, 0, 0},   {18, 11, 0, 0},   {19, 18, 17, 14},
    {20, 17, 0, 0},   {21, 19, 0, 0},   {22, 21, 0, 0},   {23, 18, 0, 0},
    {24, 23, 22, 17}, {25, 22, 0, 0},   {26, 6, 2, 1},    {27, 5, 2, 1},
    {28, 25, 0, 0},   {29, 27, 0, 0},   {30, 6, 4, 1},    {31, 28, 0, 0},
    {32, 22, 2, 1},
}};

}  // namespace detail

// Fibonacci LFSR; output period is 2^order - 1 for any nonzero seed.
class Prbs {
public:
  static constexpr int max_order = 32;

  Prbs(int order, std::uint64_t seed) : order_(order) {
    if (order < 2 || order > max_order)
      throw std::invalid_argument("prbs order must be in 2.." + std::to_string(max_order));
    mask_ = (1ull << order) - 1;
    state_ = seed & mask_;
    if (state_ == 0) throw std::invalid_argument("prbs seed must be nonzero in the low order bits");
    for (int t : detail::prbs_taps[static_cast<std::size_t>(order)])
      if (t > 0) feedback_ |= 1ull << (order - t);
  }

  int next_bit() {
    const int out = static_cast<int>(state_ & 1u);
    const std::uint64_t fb = static_cast<std::uint64_t>(std::popcount(state_ & feedback_) & 1);
    state_ = (state_ >> 1) | (fb << (order_ - 1));
    return out;
  }

  // Packs the next `bits` outputs, first output in the most significant bit.
  unsigned next_bits(int bits) {
    unsigned v = 0;
    for (int i = 0; i < bits; ++i) v = (v << 1) | static_cast<unsigned>(next_bit());
    return v;
  }

  int order() const { return order_; }
  std::uint64_t period() const { return (1ull << order_) - 1; }

private:
  int order_;
  std::uint64_t mask_ = 0;
  std::uint64_t state_ = 0;
  std::uint64_t feedback_ = 0;
};

inline std::vector<std::uint8_t> prbs_sequence(int order, std::uint64_t seed, std::size_t length) {
  Prbs gen(order, seed);
  std::vector<std::uint8_t> out(length);
  for (auto& b : out) b = static_cast<std::uint8_t>(gen.next_bit());
  return out;
}

}  // namespace mcfqkd
