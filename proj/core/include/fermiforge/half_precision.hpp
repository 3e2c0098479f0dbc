#pragma once

// IEEE binary16 conversion implemented by bit manipulation, round to nearest
// even, with full subnormal handling. Used by the emulated mixed-precision
// squaring; no hardware half type is assumed.

#include <cstdint>
#include <stdexcept>

namespace fermiforge {

/// A value exceeded the binary16 dynamic range during the half split.
class HalfRangeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint16_t float_to_half_bits(float x);  // throws HalfRangeError on overflow
float half_bits_to_float(std::uint16_t h);

/// float -> binary16 -> float round trip.
inline float round_to_half(float x) { return half_bits_to_float(float_to_half_bits(x)); }

}  // namespace fermiforge
