#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "couplemc/simulate.hpp"

namespace couplemc::pathdump {

/// Little-endian binary trajectory dump.
/// Header: u32 version, u32 d, f64 h, f64 T, u64 seed, u64 n_paths.
/// Per path: u64 n_nodes, then per node (t, X[0..d), Y[0..d), logR) as f64.
/// Single-path records are written with Y == X.
inline constexpr std::uint32_t kFormatVersion = 1;

struct DumpMeta {
  std::uint32_t dim = 0;
  double h = 0.0;
  double T = 0.0;
  std::uint64_t seed = 0;
};

void write_paths(std::ostream& os, const DumpMeta& meta,
                 const std::vector<PathRecord>& records);

struct LoadedDump {
  DumpMeta meta;
  std::vector<PathRecord> records;  // trajectory fields populated
};
LoadedDump read_paths(std::istream& is);

}  // namespace couplemc::pathdump
