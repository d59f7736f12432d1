#pragma once

// Unscrambled Sobol points from scipy.stats.qmc.Sobol(scramble=False), times 2^32.

#include <array>
#include <cstddef>
#include <cstdint>

namespace golden {

// First 16 points, 22 dimensions.
inline constexpr std::array<std::array<std::uint32_t, 22>, 16> kSobol22 = {{
    {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0},
    {2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648, 2147483648},
    {3221225472, 1073741824, 1073741824, 1073741824, 3221225472, 3221225472, 1073741824, 3221225472, 3221225472, 3221225472, 3221225472, 3221225472, 1073741824, 1073741824, 3221225472, 1073741824, 3221225472, 1073741824, 3221225472, 1073741824, 1073741824, 3221225472},
    {1073741824, 3221225472, 3221225472, 3221225472, 1073741824, 1073741824, 3221225472, 1073741824, 1073741824, 1073741824, 1073741824, 1073741824, 3221225472, 3221225472, 1073741824, 3221225472, 1073741824, 3221225472, 1073741824, 3221225472, 3221225472, 1073741824},
    {1610612736, 1610612736, 2684354560, 3758096384, 1610612736, 536870912, 1610612736, 3758096384, 3758096384, 2684354560, 3758096384, 1610612736, 1610612736, 2684354560, 1610612736, 3758096384, 1610612736, 3758096384, 3758096384, 536870912, 536870912, 536870912},
    {3758096384, 3758096384, 536870912, 1610612736, 3758096384, 2684354560, 3758096384, 1610612736, 1610612736, 536870912, 1610612736, 3758096384, 3758096384, 536870912, 3758096384, 1610612736, 3758096384, 1610612736, 1610612736, 2684354560, 2684354560, 2684354560},
    {2684354560, 536870912, 3758096384, 2684354560, 2684354560, 3758096384, 536870912, 536870912, 536870912, 1610612736, 536870912, 2684354560, 536870912, 3758096384, 2684354560, 2684354560, 2684354560, 2684354560, 536870912, 1610612736, 1610612736, 3758096384},
    {536870912, 2684354560, 1610612736, 536870912, 536870912, 1610612736, 2684354560, 2684354560, 2684354560, 3758096384, 2684354560, 536870912, 2684354560, 1610612736, 536870912, 536870912, 536870912, 536870912, 2684354560, 3758096384, 3758096384, 1610612736},
    {805306368, 1342177280, 4026531840, 1879048192, 2415919104, 1342177280, 1879048192, 4026531840, 4026531840, 1342177280, 2952790016, 268435456, 4026531840, 4026531840, 3489660928, 4026531840, 3489660928, 3489660928, 4026531840, 1342177280, 805306368, 2952790016},
    {2952790016, 3489660928, 1879048192, 4026531840, 268435456, 3489660928, 4026531840, 1879048192, 1879048192, 3489660928, 805306368, 2415919104, 1879048192, 1879048192, 1342177280, 1879048192, 1342177280, 1342177280, 1879048192, 3489660928, 2952790016, 805306368},
    {4026531840, 268435456, 2952790016, 805306368, 1342177280, 2415919104, 805306368, 805306368, 805306368, 2415919104, 1879048192, 3489660928, 2952790016, 2952790016, 268435456, 2952790016, 268435456, 2415919104, 805306368, 268435456, 1879048192, 1879048192},
    {1879048192, 2415919104, 805306368, 2952790016, 3489660928, 268435456, 2952790016, 2952790016, 2952790016, 268435456, 4026531840, 1342177280, 805306368, 805306368, 2415919104, 805306368, 2415919104, 268435456, 2952790016, 2415919104, 4026531840, 4026531840},
    {1342177280, 805306368, 1342177280, 2415919104, 4026531840, 1879048192, 268435456, 268435456, 268435456, 4026531840, 1342177280, 1879048192, 2415919104, 1342177280, 2952790016, 268435456, 2952790016, 805306368, 268435456, 1879048192, 268435456, 2415919104},
    {3489660928, 2952790016, 3489660928, 268435456, 1879048192, 4026531840, 2415919104, 2415919104, 2415919104, 1879048192, 3489660928, 4026531840, 268435456, 3489660928, 805306368, 2415919104, 805306368, 2952790016, 2415919104, 4026531840, 2415919104, 268435456},
    {2415919104, 1879048192, 268435456, 3489660928, 805306368, 2952790016, 1342177280, 3489660928, 3489660928, 805306368, 2415919104, 2952790016, 3489660928, 268435456, 1879048192, 1342177280, 1879048192, 1879048192, 3489660928, 805306368, 1342177280, 1342177280},
    {268435456, 4026531840, 2415919104, 1342177280, 2952790016, 805306368, 3489660928, 1342177280, 1342177280, 2952790016, 268435456, 805306368, 1342177280, 2415919104, 4026531840, 3489660928, 4026531840, 4026531840, 1342177280, 2952790016, 3489660928, 3489660928},
}};

// Points 1000 and 1001 of the 1111-dimensional sequence at selected coordinates.
inline constexpr std::array<std::size_t, 5> kSobolWideCols = {0, 1, 500, 1109, 1110};
inline constexpr std::array<std::array<std::uint32_t, 5>, 2> kSobolWide = {{
    {943718400, 415236096, 3116367872, 4248829952, 1589641216},
    {3091202048, 2562719744, 968884224, 2101346304, 3737124864},
}};

}  // namespace golden
