#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <string>

#include "qlpv/trajectory.hpp"

namespace qlpv {

// On-disk dataset layout: <dir>/manifest.json plus traj_NNNN.txt files with
// the stacked U, Y (and optional x0) in decimal text. Values round-trip
// bit-exactly.
void save_dataset(const std::string& dir, const Dataset& data, nlohmann::ordered_json manifest);

struct LoadedDataset {
  Dataset data;
  nlohmann::json manifest;
};

LoadedDataset load_dataset(const std::string& dir);

// SHA-256 over the canonical serialization (manifest + trajectory files).
std::string dataset_fingerprint(const std::string& dir);

// SHA-256 of a vector's canonical decimal text (parameter fingerprints).
std::string fingerprint_vector(const Eigen::Ref<const Eigen::VectorXd>& v);

// %.17g rendering shared by every canonical text emitter.
std::string format_double(double v);

}  // namespace qlpv
