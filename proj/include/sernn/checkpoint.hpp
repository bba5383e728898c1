#pragma once

// On-disk network snapshots:
//   run_<kind>_<gamma>_<seed>/epoch_<k>/manifest.json
//   run_<kind>_<gamma>_<seed>/epoch_<k>/<array>.f32   (little-endian float32, row-major)

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sernn/constraints.hpp"
#include "sernn/embedding.hpp"
#include "sernn/error.hpp"
#include "sernn/numerics.hpp"

namespace sernn {

namespace fs = std::filesystem;

inline constexpr int kCheckpointFormatVersion = 1;

enum class Task { Inference, SyntheticSpikes, Shd };

inline std::string_view task_name(Task t) {
  switch (t) {
    case Task::Inference: return "inference";
    case Task::SyntheticSpikes: return "synthetic-spikes";
    case Task::Shd: return "shd";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  if (s == "inference") return Task::Inference;
  if (s == "synthetic-spikes") return Task::SyntheticSpikes;
  if (s == "shd") return Task::Shd;
  throw InvalidArgument("unknown task '" + std::string(s) + "' (expected inference|synthetic-spikes|shd)");
}

inline bool is_spiking(Task t) { return t != Task::Inference; }

// Shortest round-trippable-enough text for directory names: %.9g.
inline std::string format_gamma(double gamma) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", gamma);
  return buf;
}

inline std::string run_dir_name(RegularizerKind kind, double gamma, std::uint64_t seed) {
  return "run_" + std::string(kind_name(kind)) + "_" + format_gamma(gamma) + "_" + std::to_string(seed);
}

inline std::string epoch_dir_name(int epoch) { return "epoch_" + std::to_string(epoch); }

struct ArrayF32 {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

struct NetworkDims {
  int hidden = 0;
  int inputs = 0;
  int outputs = 0;
  LatticeDims lattice;
};

struct NetworkCheckpoint {
  RegularizerKind kind = RegularizerKind::BaselineL1;
  double gamma = 0.0;
  std::uint64_t seed = 0;
  int epoch = 0;
  Task task = Task::Inference;
  double accuracy = 0.0;
  double task_loss = 0.0;
  double constraint_loss = 0.0;
  double dt_ms = 0.0;  // spiking only
  NetworkDims dims;
  std::vector<ArrayF32> arrays;

  const ArrayF32& array(std::string_view name) const {
    for (const auto& a : arrays)
      if (a.name == name) return a;
    throw FormatError("checkpoint has no array '" + std::string(name) + "'");
  }

  // Parameter tensor widened back to double.
  Matrix matrix(std::string_view name) const {
    const auto& a = array(name);
    const auto rows = static_cast<Eigen::Index>(a.shape.at(0));
    const auto cols = a.shape.size() > 1 ? static_cast<Eigen::Index>(a.shape[1]) : 1;
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows * cols; ++i) m.data()[i] = static_cast<double>(a.values[static_cast<std::size_t>(i)]);
    return m;
  }

  Matrix recurrent_weights() const { return matrix("w_rec"); }
};

// Snapshot every parameter tensor of a network exposing visit().
template <typename Net>
std::vector<ArrayF32> capture_arrays(const Net& net) {
  std::vector<ArrayF32> out;
  net.visit([&](const char* name, const auto& tensor) {
    ArrayF32 a;
    a.name = name;
    if constexpr (std::decay_t<decltype(tensor)>::ColsAtCompileTime == 1) {
      a.shape = {static_cast<std::size_t>(tensor.rows())};
    } else {
      a.shape = {static_cast<std::size_t>(tensor.rows()), static_cast<std::size_t>(tensor.cols())};
    }
    a.values.resize(static_cast<std::size_t>(tensor.size()));
    for (Eigen::Index i = 0; i < tensor.rows(); ++i)
      for (Eigen::Index j = 0; j < tensor.cols(); ++j)
        a.values[static_cast<std::size_t>(i * tensor.cols() + j)] = static_cast<float>(tensor(i, j));
    out.push_back(std::move(a));
  });
  return out;
}

// Restore tensors (as float32-rounded doubles) into a network of matching shape.
template <typename Net>
void restore_arrays(Net& net, const NetworkCheckpoint& ckpt) {
  net.visit([&](const char* name, auto& tensor) {
    const auto& a = ckpt.array(name);
    if (a.values.size() != static_cast<std::size_t>(tensor.size())) {
      throw FormatError(std::string("checkpoint array '") + name + "' has the wrong size");
    }
    for (Eigen::Index i = 0; i < tensor.rows(); ++i)
      for (Eigen::Index j = 0; j < tensor.cols(); ++j)
        tensor(i, j) = static_cast<double>(a.values[static_cast<std::size_t>(i * tensor.cols() + j)]);
  });
}

inline nlohmann::ordered_json manifest_json(const NetworkCheckpoint& c) {
  nlohmann::ordered_json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["kind"] = kind_name(c.kind);
  j["gamma"] = c.gamma;
  j["seed"] = c.seed;
  j["epoch"] = c.epoch;
  j["task"] = task_name(c.task);
  j["accuracy"] = c.accuracy;
  j["task_loss"] = c.task_loss;
  j["constraint_loss"] = c.constraint_loss;
  if (is_spiking(c.task)) j["dt_ms"] = c.dt_ms;
  j["dims"] = {{"hidden", c.dims.hidden},
               {"inputs", c.dims.inputs},
               {"outputs", c.dims.outputs},
               {"lattice", {c.dims.lattice.nx, c.dims.lattice.ny, c.dims.lattice.nz}}};
  auto arrays = nlohmann::ordered_json::array();
  for (const auto& a : c.arrays) {
    nlohmann::ordered_json e;
    e["name"] = a.name;
    e["file"] = a.name + ".f32";
    e["shape"] = a.shape;
    arrays.push_back(std::move(e));
  }
  j["arrays"] = std::move(arrays);
  return j;
}

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("short write to " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace detail

inline void write_checkpoint(const NetworkCheckpoint& c, const fs::path& dir) {
  fs::create_directories(dir);
  detail::write_text(dir / "manifest.json", manifest_json(c).dump(2) + "\n");
  for (const auto& a : c.arrays) {
    std::string bytes(a.values.size() * 4, '\0');
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      const std::uint32_t le = detail::to_le(std::bit_cast<std::uint32_t>(a.values[i]));
      std::memcpy(bytes.data() + 4 * i, &le, 4);
    }
    detail::write_text(dir / (a.name + ".f32"), bytes);
  }
}

inline NetworkCheckpoint read_checkpoint(const fs::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest in " + dir.string() + ": " + e.what());
  }
  NetworkCheckpoint c;
  try {
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw FormatError("unsupported checkpoint format version in " + dir.string());
    }
    c.kind = parse_kind(j.at("kind").get<std::string>());
    c.gamma = j.at("gamma").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epoch = j.at("epoch").get<int>();
    c.task = parse_task(j.at("task").get<std::string>());
    c.accuracy = j.at("accuracy").get<double>();
    c.task_loss = j.at("task_loss").get<double>();
    c.constraint_loss = j.at("constraint_loss").get<double>();
    c.dt_ms = j.value("dt_ms", 0.0);
    const auto& d = j.at("dims");
    c.dims.hidden = d.at("hidden").get<int>();
    c.dims.inputs = d.at("inputs").get<int>();
    c.dims.outputs = d.at("outputs").get<int>();
    const auto& lat = d.at("lattice");
    c.dims.lattice = {lat.at(0).get<std::size_t>(), lat.at(1).get<std::size_t>(), lat.at(2).get<std::size_t>()};
    for (const auto& e : j.at("arrays")) {
      ArrayF32 a;
      a.name = e.at("name").get<std::string>();
      a.shape = e.at("shape").get<std::vector<std::size_t>>();
      std::size_t count = 1;
      for (auto s : a.shape) count *= s;
      const std::string bytes = detail::read_text(dir / e.at("file").get<std::string>());
      if (bytes.size() != 4 * count) throw FormatError("array '" + a.name + "' does not match its shape");
      a.values.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t le = 0;
        std::memcpy(&le, bytes.data() + 4 * i, 4);
        a.values[i] = std::bit_cast<float>(detail::to_le(le));
      }
      c.arrays.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest in " + dir.string() + ": " + e.what());
  }
  if (!(c.accuracy >= 0.0 && c.accuracy <= 1.0)) throw FormatError("accuracy outside [0,1] in " + dir.string());
  return c;
}

// Epoch directories of a run, sorted by epoch.
inline std::vector<fs::path> epoch_dirs(const fs::path& run_dir) {
  std::vector<std::pair<int, fs::path>> found;
  if (!fs::is_directory(run_dir)) return {};
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && name.rfind("epoch_", 0) == 0 && fs::exists(entry.path() / "manifest.json")) {
      found.emplace_back(std::stoi(name.substr(6)), entry.path());
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

}  // namespace sernn
