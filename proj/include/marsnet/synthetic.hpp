#pragma once

#include <cstdint>

#include "marsnet/data.hpp"

namespace marsnet {

// Deterministic synthetic tables shaped like the two UCI regression sets the
// experiments target: same row counts, column names, value ranges, and a
// comparable signal-to-noise profile (an additive, hinge-friendly target with
// integer labels). Used whenever no real CSV path is configured.

// 4177 rows: sex (M/F/I) plus seven morphometric columns driving an integer
// ring count in [1, 29].
RawTable synth_abalone_like(std::uint64_t seed = 1);

// 4898 rows: eleven numeric columns driving an integer quality score in
// [3, 9].
RawTable synth_wine_like(std::uint64_t seed = 2);

}  // namespace marsnet
