#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "forge/campaign.hpp"
#include "json.hpp"

namespace forge::test {

inline std::filesystem::path data_path(const std::string& rel) {
  return std::filesystem::path(FORGE_DATA_DIR) / rel;
}

inline std::filesystem::path test_path(const std::string& rel) {
  return std::filesystem::path(FORGE_TEST_DIR) / rel;
}

inline nlohmann::json load_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return nlohmann::json::parse(in);
}

/// The shipped simulation config (data/config.json).
inline const campaign::ForgeConfig& reference_config() {
  static const campaign::ForgeConfig cfg = campaign::load_config(data_path("config.json"));
  return cfg;
}

inline const sim::SimConfig& reference_sim() { return *reference_config().simulation; }

inline sim::SimConfig zombie_sim() {
  return sim::sim_config_from_json(load_json(test_path("fixtures/zombie_config.json")));
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() /
           ("forge_test_" + name + "_" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace forge::test
