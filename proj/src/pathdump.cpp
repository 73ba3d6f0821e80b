#include "couplemc/pathdump.hpp"

#include <istream>
#include <ostream>

namespace couplemc::pathdump {

namespace {

// this toolkit targets little-endian hosts; the format is defined as such
template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw NumericalError("pathdump: truncated stream");
  return v;
}

}  // namespace

void write_paths(std::ostream& os, const DumpMeta& meta,
                 const std::vector<PathRecord>& records) {
  put<std::uint32_t>(os, kFormatVersion);
  put<std::uint32_t>(os, meta.dim);
  put<double>(os, meta.h);
  put<double>(os, meta.T);
  put<std::uint64_t>(os, meta.seed);
  put<std::uint64_t>(os, records.size());
  const int d = static_cast<int>(meta.dim);
  for (const auto& r : records) {
    if (r.times.empty())
      throw ConfigError("pathdump: record carries no trajectory");
    put<std::uint64_t>(os, r.times.size());
    const bool has_y = !r.y_path.empty();
    for (std::size_t i = 0; i < r.times.size(); ++i) {
      put<double>(os, r.times[i]);
      for (int j = 0; j < d; ++j) put<double>(os, r.x_path[i * d + j]);
      for (int j = 0; j < d; ++j)
        put<double>(os, has_y ? r.y_path[i * d + j] : r.x_path[i * d + j]);
      put<double>(os, r.log_r_path.empty() ? 0.0 : r.log_r_path[i]);
    }
  }
}

LoadedDump read_paths(std::istream& is) {
  LoadedDump out;
  const auto version = get<std::uint32_t>(is);
  if (version != kFormatVersion)
    throw ConfigError("pathdump: unsupported format version");
  out.meta.dim = get<std::uint32_t>(is);
  out.meta.h = get<double>(is);
  out.meta.T = get<double>(is);
  out.meta.seed = get<std::uint64_t>(is);
  const auto n_paths = get<std::uint64_t>(is);
  const int d = static_cast<int>(out.meta.dim);
  out.records.resize(n_paths);
  for (auto& r : out.records) {
    const auto n_nodes = get<std::uint64_t>(is);
    r.dim = d;
    r.T = out.meta.T;
    r.times.resize(n_nodes);
    r.x_path.resize(n_nodes * d);
    r.y_path.resize(n_nodes * d);
    r.log_r_path.resize(n_nodes);
    for (std::uint64_t i = 0; i < n_nodes; ++i) {
      r.times[i] = get<double>(is);
      for (int j = 0; j < d; ++j) r.x_path[i * d + j] = get<double>(is);
      for (int j = 0; j < d; ++j) r.y_path[i * d + j] = get<double>(is);
      r.log_r_path[i] = get<double>(is);
    }
    if (n_nodes > 0) r.log_r = r.log_r_path.back();
  }
  return out;
}

}  // namespace couplemc::pathdump
