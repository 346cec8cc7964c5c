#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include <bg/common.hpp>

namespace bg {

// Provenance record written next to every command's outputs. The energy-call
// counter is read straight from the model, so the cost accounting is exact.
struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::uint64_t energy_calls = 0;
  std::uint64_t singularity_events = 0;
  std::vector<std::string> warnings;
};

inline std::string build_versions() {
  return std::string("gcc ") + __VERSION__ + "; eigen " +
         std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
         "." + std::to_string(EIGEN_MINOR_VERSION);
}

inline void write_manifest(const std::string& path, const RunManifest& m) {
  nlohmann::json j{{"command", m.command},
                   {"config_hash", m.config_hash},
                   {"seed", m.seed},
                   {"versions", build_versions()},
                   {"wall_seconds", m.wall_seconds},
                   {"energy_calls", m.energy_calls},
                   {"singularity_events", m.singularity_events},
                   {"warnings", m.warnings}};
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << j.dump(1) << "\n";
}

class WallClock {
 public:
  WallClock() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace bg
