#pragma once

// Published per-layer MFLOPs for TinyDet-S/M/L, in hundredths, row by row. FPN rows
// list the five (or four) lateral convs first, then the SCConvs; RPN rows
// are the shared SCConv, score conv and box conv.

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace tinydet::testing {

struct ReferenceTables {
  std::string_view arch;
  std::vector<std::uint64_t> backbone;
  std::uint64_t backbone_total;
  std::vector<std::uint64_t> fpn;
  std::uint64_t fpn_total;
  std::vector<std::uint64_t> rpn;
  std::uint64_t rpn_total;
  std::uint64_t model_mflops;
  std::array<std::uint64_t, 4> part_mflops;  // backbone, fpn, rpn, rcnn
  std::array<int, 4> percent;
};

inline const std::array<ReferenceTables, 3>& reference_tables() {
  static const std::array<ReferenceTables, 3> tables{{
      {"tinydet-s",
       {1106, 1024, 3973, 2627, 1855, 2017, 2017, 2390, 1622, 1776, 1776, 1933, 3137, 2133, 1668, 1668, 2026},
       34748,
       {1607, 1101, 395, 99, 1803, 588, 627, 157},
       6377,
       {833, 157, 627},
       1617,
       495,
       {347, 64, 16, 68},
       {70, 13, 3, 14}},
      {"tinydet-m",
       {1659, 2028, 6497, 5599, 5599, 5599, 3958, 4178, 4178, 3158,
        1352, 1244, 1244, 3871, 6286, 4276, 3358, 3358, 2026, 874},
       70342,
       {5802, 2391, 1107, 395, 99, 2509, 1803, 588, 627, 157},
       15478,
       {3342, 629, 2517},
       6488,
       991,
       {703, 155, 65, 68},
       {71, 16, 7, 7}},
      {"tinydet-l",
       {4247, 5191, 16633, 14333, 14333, 14333, 10131, 10692, 10692, 8086,
        3461, 3184, 3184, 9891, 16056, 10912, 8525, 8525, 5115, 2166},
       179690,
       {14852, 6122, 2835, 1010, 252, 6423, 4616, 1505, 1606, 401},
       39622,
       {8555, 1611, 6442},
       16608,
       2427,
       {1797, 396, 166, 68},
       {74, 16, 7, 3}},
  }};
  return tables;
}

/// The TinyDet-S FPN lateral at 20^2x112 prints 11.01; the same op in the
/// TinyDet-M table prints 11.07.
inline constexpr std::string_view kExemptArch = "tinydet-s";
inline constexpr std::size_t kExemptFpnRow = 1;

}  // namespace tinydet::testing
