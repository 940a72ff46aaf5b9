#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "ee/common/error.hpp"
#include "ee/dynamics/trajectory.hpp"

namespace ee::dynamics {

// Binary trajectory store:
//   8 bytes  magic "EETRJ001"
//   u64 T, u64 d (little endian)
//   T*d float64 little endian, row-major
// plus a JSON sidecar {system, params, dt, seed, T, d, filtered}.

inline constexpr std::array<char, 8> kTrajectoryMagic = {'E', 'E', 'T', 'R', 'J', '0', '0', '1'};

static_assert(std::endian::native == std::endian::little, "trajectory store assumes a little-endian host");

inline std::filesystem::path sidecar_path(const std::filesystem::path& bin) {
  auto p = bin;
  p.replace_extension(".json");
  return p;
}

inline void write_trajectory_binary(const std::filesystem::path& path, const Trajectory& z) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(kTrajectoryMagic.data(), kTrajectoryMagic.size());
  const std::uint64_t T = z.length(), d = z.dim();
  os.write(reinterpret_cast<const char*>(&T), sizeof T);
  os.write(reinterpret_cast<const char*>(&d), sizeof d);
  os.write(reinterpret_cast<const char*>(z.states.data()), static_cast<std::streamsize>(T * d * sizeof(double)));
  if (!os) throw Error("failed writing " + path.string());
}

inline StateMatrix read_trajectory_binary(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kTrajectoryMagic) throw Error(path.string() + ": bad trajectory magic");
  std::uint64_t T = 0, d = 0;
  is.read(reinterpret_cast<char*>(&T), sizeof T);
  is.read(reinterpret_cast<char*>(&d), sizeof d);
  if (!is) throw Error(path.string() + ": truncated header");
  StateMatrix m(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(d));
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(T * d * sizeof(double)));
  if (!is) throw Error(path.string() + ": truncated payload");
  return m;
}

inline nlohmann::json trajectory_sidecar(const Trajectory& z, bool filtered) {
  nlohmann::json j;
  j["system"] = to_string(z.meta.system);
  j["params"] = z.meta.params;
  j["dt"] = z.dt;
  j["seed"] = z.meta.seed;
  j["T"] = z.length();
  j["d"] = z.dim();
  j["filtered"] = filtered;
  j["noise_r"] = z.meta.noise_r;
  return j;
}

/// Writes `<path>` and its `.json` sidecar.
inline void save_trajectory(const std::filesystem::path& path, const Trajectory& z, bool filtered) {
  write_trajectory_binary(path, z);
  std::ofstream js(sidecar_path(path));
  js << trajectory_sidecar(z, filtered).dump(2) << '\n';
}

/// Reads a trajectory; metadata comes from the sidecar when present.
inline Trajectory load_trajectory(const std::filesystem::path& path) {
  Trajectory z;
  z.states = read_trajectory_binary(path);
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    std::ifstream is(side);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(side.string() + ": " + e.what());
    }
    z.meta.system = system_from_string(j.value("system", std::string("l96")));
    z.meta.params = j.value("params", ParamVector{});
    z.dt = j.value("dt", 1.0);
    z.meta.seed = j.value("seed", std::uint64_t{0});
    z.meta.noise_r = j.value("noise_r", 0.0);
    if (j.value("T", z.length()) != z.length() || j.value("d", z.dim()) != z.dim())
      throw Error(side.string() + ": sidecar dimensions disagree with binary");
  }
  return z;
}

}  // namespace ee::dynamics
