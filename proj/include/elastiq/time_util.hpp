#pragma once

#include <cmath>
#include <cstdint>

namespace elastiq {

// All scheduler arithmetic is done in integer milliseconds. Model outputs
// are rounded up to the next millisecond so deadline checks stay conservative.
using Millis = std::int64_t;

inline Millis ceil_ms(double seconds) {
    // The 1e-9 guard strips representation dust (e.g. 6.0000000000001 s)
    // without affecting genuinely fractional values.
    return static_cast<Millis>(std::ceil(seconds * 1000.0 - 1e-9));
}

inline double ms_to_seconds(Millis ms) { return static_cast<double>(ms) / 1000.0; }

}  // namespace elastiq
