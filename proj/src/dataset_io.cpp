#include "qlpv/dataset_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "qlpv/hash.hpp"

namespace qlpv {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::string trajectory_text(const Trajectory& tr) {
  std::ostringstream os;
  os << "U " << tr.U.size() << "\n";
  for (Eigen::Index i = 0; i < tr.U.size(); ++i) os << format_double(tr.U[i]) << "\n";
  os << "Y " << tr.Y.size() << "\n";
  for (Eigen::Index i = 0; i < tr.Y.size(); ++i) os << format_double(tr.Y[i]) << "\n";
  if (tr.x0.size() > 0) {
    os << "X0 " << tr.x0.size() << "\n";
    for (Eigen::Index i = 0; i < tr.x0.size(); ++i) os << format_double(tr.x0[i]) << "\n";
  }
  return os.str();
}

std::string traj_filename(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traj_%04d.txt", index);
  return buf;
}

Eigen::VectorXd read_block(std::istream& in, const std::string& expected_tag) {
  std::string tag;
  Eigen::Index n = 0;
  if (!(in >> tag >> n) || tag != expected_tag)
    throw std::runtime_error("dataset: expected block '" + expected_tag + "'");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(in >> v[i])) throw std::runtime_error("dataset: truncated block '" + expected_tag + "'");
  return v;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& data, nlohmann::ordered_json manifest) {
  fs::create_directories(dir);
  manifest["format"] = "qlpv-dataset";
  manifest["count"] = data.size();
  nlohmann::ordered_json violations = nlohmann::ordered_json::array();
  for (auto flag : data.y_violation) violations.push_back(flag != 0);
  manifest["y_violation"] = violations;
  {
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw std::runtime_error("save_dataset: cannot write manifest in " + dir);
    out << manifest.dump(1) << "\n";
  }
  for (int i = 0; i < data.size(); ++i) {
    std::ofstream out(fs::path(dir) / traj_filename(i));
    if (!out) throw std::runtime_error("save_dataset: cannot write trajectory file in " + dir);
    out << trajectory_text(data.items[i]);
  }
}

LoadedDataset load_dataset(const std::string& dir) {
  LoadedDataset out;
  std::ifstream min(fs::path(dir) / "manifest.json");
  if (!min) throw std::runtime_error("load_dataset: missing manifest in " + dir);
  out.manifest = nlohmann::json::parse(min);
  if (out.manifest.at("format") != "qlpv-dataset")
    throw std::runtime_error("load_dataset: not a dataset directory: " + dir);
  const int count = out.manifest.at("count");
  for (int i = 0; i < count; ++i) {
    std::ifstream in(fs::path(dir) / traj_filename(i));
    if (!in) throw std::runtime_error("load_dataset: missing trajectory file " + traj_filename(i));
    Trajectory tr;
    tr.U = read_block(in, "U");
    tr.Y = read_block(in, "Y");
    std::string tag;
    if (in >> tag) {
      Eigen::Index n;
      if (tag != "X0" || !(in >> n)) throw std::runtime_error("load_dataset: malformed trailer");
      tr.x0.resize(n);
      for (Eigen::Index j = 0; j < n; ++j)
        if (!(in >> tr.x0[j])) throw std::runtime_error("load_dataset: truncated X0 block");
    }
    bool violation = false;
    if (out.manifest.contains("y_violation") && i < static_cast<int>(out.manifest["y_violation"].size()))
      violation = out.manifest["y_violation"][i].get<bool>();
    out.data.append(std::move(tr), violation);
  }
  return out;
}

std::string dataset_fingerprint(const std::string& dir) {
  std::ostringstream blob;
  {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw std::runtime_error("dataset_fingerprint: missing manifest in " + dir);
    // Canonicalize through a parse/dump cycle so formatting is irrelevant.
    blob << nlohmann::json::parse(in).dump() << "\n";
  }
  const LoadedDataset loaded = load_dataset(dir);
  for (const auto& tr : loaded.data.items) blob << trajectory_text(tr);
  return sha256_hex(blob.str());
}

std::string fingerprint_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  std::ostringstream os;
  for (Eigen::Index i = 0; i < v.size(); ++i) os << format_double(v[i]) << "\n";
  return sha256_hex(os.str());
}

}  // namespace qlpv
