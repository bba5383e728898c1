#pragma once

// Spike-event datasets: the JSON-lines interchange format (optionally gzip
// compressed), binning onto simulation steps, and a synthetic Poisson task.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "sernn/error.hpp"
#include "sernn/numerics.hpp"

namespace sernn::spikes {

struct SpikeEvent {
  double time_ms = 0.0;
  int channel = 0;

  friend bool operator==(const SpikeEvent&, const SpikeEvent&) = default;
};

struct SpikeSample {
  int label = 0;
  std::vector<SpikeEvent> events;

  friend bool operator==(const SpikeSample&, const SpikeSample&) = default;
};

struct SpikeDataset {
  std::string name;
  int channels = 0;
  int classes = 0;
  std::vector<SpikeSample> samples;

  friend bool operator==(const SpikeDataset&, const SpikeDataset&) = default;
};

inline void validate(const SpikeDataset& ds) {
  if (ds.channels < 1 || ds.classes < 1) throw FormatError("spike dataset: channels and classes must be >= 1");
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    if (s.label < 0 || s.label >= ds.classes) {
      throw FormatError("spike dataset: sample " + std::to_string(i) + " has label out of range");
    }
    for (const auto& e : s.events) {
      if (!(e.time_ms >= 0.0) || !std::isfinite(e.time_ms)) {
        throw FormatError("spike dataset: sample " + std::to_string(i) + " has a negative or non-finite time");
      }
      if (e.channel < 0 || e.channel >= ds.channels) {
        throw FormatError("spike dataset: sample " + std::to_string(i) + " has channel out of range");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// JSON-lines I/O
// ---------------------------------------------------------------------------

inline bool is_gzip_path(const std::filesystem::path& path) {
  const std::string s = path.string();
  return s.size() >= 9 && s.compare(s.size() - 9, 9, ".jsonl.gz") == 0;
}

inline std::string serialize_jsonl(const SpikeDataset& ds) {
  std::string out;
  nlohmann::ordered_json header;
  header["channels"] = ds.channels;
  header["classes"] = ds.classes;
  header["name"] = ds.name;
  out += header.dump();
  out += '\n';
  for (const auto& s : ds.samples) {
    nlohmann::ordered_json line;
    line["label"] = s.label;
    auto events = nlohmann::ordered_json::array();
    for (const auto& e : s.events) events.push_back({e.time_ms, e.channel});
    line["events"] = std::move(events);
    out += line.dump();
    out += '\n';
  }
  return out;
}

inline SpikeDataset parse_jsonl(std::istream& in) {
  SpikeDataset ds;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("spike dataset line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      if (!have_header) {
        ds.channels = j.at("channels").get<int>();
        ds.classes = j.at("classes").get<int>();
        ds.name = j.value("name", std::string{});
        have_header = true;
        continue;
      }
      SpikeSample s;
      s.label = j.at("label").get<int>();
      for (const auto& ev : j.at("events")) {
        if (!ev.is_array() || ev.size() != 2) throw FormatError("event must be [time_ms, channel]");
        s.events.push_back({ev[0].get<double>(), ev[1].get<int>()});
      }
      ds.samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("spike dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw FormatError("spike dataset: missing header line");
  validate(ds);
  return ds;
}

inline std::string read_gzip(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw FormatError("cannot open " + path.string());
  std::string data;
  std::vector<char> buf(1 << 16);
  int n = 0;
  while ((n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0) data.append(buf.data(), static_cast<std::size_t>(n));
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw FormatError("corrupt gzip stream in " + path.string());
  return data;
}

inline SpikeDataset load_dataset(const std::filesystem::path& path) {
  if (is_gzip_path(path)) {
    std::istringstream in(read_gzip(path));
    return parse_jsonl(in);
  }
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return parse_jsonl(in);
}

inline void save_dataset(const SpikeDataset& ds, const std::filesystem::path& path) {
  const std::string text = serialize_jsonl(ds);
  if (is_gzip_path(path)) {
    gzFile f = gzopen(path.c_str(), "wb9");
    if (f == nullptr) throw FormatError("cannot write " + path.string());
    const int written = gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
    gzclose(f);
    if (written != static_cast<int>(text.size())) throw FormatError("short gzip write to " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

using BinnedSample = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct BinnedDataset {
  std::vector<BinnedSample> samples;  // each steps x channels, 0/1
  std::vector<int> labels;
  std::size_t dropped_events = 0;  // events at or beyond max_steps * dt
};

inline void require_dt(double dt_ms) {
  if (!(dt_ms > 0.0)) throw InvalidArgument("bin_events: dt must be positive");
}

inline long step_of(double time_ms, double dt_ms) { return static_cast<long>(std::floor(time_ms / dt_ms)); }

inline BinnedDataset bin_events(const SpikeDataset& ds, double dt_ms, std::size_t max_steps) {
  require_dt(dt_ms);
  BinnedDataset out;
  out.samples.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    BinnedSample b = BinnedSample::Zero(static_cast<Eigen::Index>(max_steps), ds.channels);
    for (const auto& e : s.events) {
      const long step = step_of(e.time_ms, dt_ms);
      if (step >= static_cast<long>(max_steps)) {
        ++out.dropped_events;
        continue;
      }
      b(step, e.channel) = 1;
    }
    out.samples.push_back(std::move(b));
    out.labels.push_back(s.label);
  }
  return out;
}

// Sparse binned minibatch: per step, the (batch column, channel) pairs that
// carry a spike. Duplicate events within a bin are collapsed.
struct SpikeBatch {
  int steps = 0;
  int channels = 0;
  std::vector<std::vector<std::pair<int, int>>> active;
  std::vector<int> labels;
  std::size_t dropped_events = 0;

  int size() const noexcept { return static_cast<int>(labels.size()); }
};

inline SpikeBatch make_batch(const SpikeDataset& ds, std::span<const std::size_t> indices, double dt_ms,
                             int max_steps) {
  require_dt(dt_ms);
  SpikeBatch batch;
  batch.steps = max_steps;
  batch.channels = ds.channels;
  batch.active.resize(static_cast<std::size_t>(max_steps));
  for (std::size_t col = 0; col < indices.size(); ++col) {
    const auto& s = ds.samples.at(indices[col]);
    batch.labels.push_back(s.label);
    for (const auto& e : s.events) {
      const long step = step_of(e.time_ms, dt_ms);
      if (step >= max_steps) {
        ++batch.dropped_events;
        continue;
      }
      batch.active[static_cast<std::size_t>(step)].emplace_back(static_cast<int>(col), e.channel);
    }
  }
  for (auto& a : batch.active) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Synthetic task
// ---------------------------------------------------------------------------

struct SyntheticTaskConfig {
  int classes = 5;
  int channels = 20;
  int samples_per_class = 40;
  double duration_ms = 100.0;
  int template_channels = 8;
  double template_rate_hz = 80.0;
  double background_rate_hz = 8.0;
};

struct SyntheticTask {
  SpikeDataset dataset;
  std::vector<std::vector<int>> templates;  // per class, sorted channel ids
};

// Each class owns a random subset of channels firing at the template rate;
// all other channels fire at the background rate. Samples are interleaved
// by class (sample k of every class, then sample k + 1, ...).
inline SyntheticTask gen_synthetic_spike_task(RandomSource& rng, const SyntheticTaskConfig& cfg = {}) {
  if (cfg.classes < 2) throw InvalidArgument("synthetic task: classes must be >= 2");
  if (cfg.channels < cfg.template_channels || cfg.template_channels < 1) {
    throw InvalidArgument("synthetic task: template channel count must be in [1, channels]");
  }
  if (!(cfg.duration_ms > 0.0) || cfg.samples_per_class < 0) {
    throw InvalidArgument("synthetic task: duration must be positive, sample count non-negative");
  }
  SyntheticTask task;
  task.dataset.name = "synthetic-spikes";
  task.dataset.channels = cfg.channels;
  task.dataset.classes = cfg.classes;

  for (int c = 0; c < cfg.classes; ++c) {
    std::vector<int> pool(static_cast<std::size_t>(cfg.channels));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < cfg.template_channels; ++i) {
      const auto j = static_cast<std::size_t>(i) + rng.uniform_index(pool.size() - static_cast<std::size_t>(i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    std::vector<int> chosen(pool.begin(), pool.begin() + cfg.template_channels);
    std::sort(chosen.begin(), chosen.end());
    task.templates.push_back(std::move(chosen));
  }

  for (int k = 0; k < cfg.samples_per_class; ++k) {
    for (int c = 0; c < cfg.classes; ++c) {
      SpikeSample s;
      s.label = c;
      const auto& tmpl = task.templates[static_cast<std::size_t>(c)];
      for (int ch = 0; ch < cfg.channels; ++ch) {
        const bool in_template = std::binary_search(tmpl.begin(), tmpl.end(), ch);
        const double rate_per_ms = (in_template ? cfg.template_rate_hz : cfg.background_rate_hz) / 1000.0;
        double t = rng.exponential(rate_per_ms);
        while (t < cfg.duration_ms) {
          s.events.push_back({t, ch});
          t += rng.exponential(rate_per_ms);
        }
      }
      std::sort(s.events.begin(), s.events.end(), [](const SpikeEvent& a, const SpikeEvent& b) {
        return a.time_ms < b.time_ms || (a.time_ms == b.time_ms && a.channel < b.channel);
      });
      task.dataset.samples.push_back(std::move(s));
    }
  }
  return task;
}

// Deterministic split: the first `train_per_class` samples of each class (in
// dataset order) go to the training set, the rest to the test set.
inline std::pair<SpikeDataset, SpikeDataset> split_per_class(const SpikeDataset& ds, int train_per_class) {
  SpikeDataset train{ds.name, ds.channels, ds.classes, {}};
  SpikeDataset test{ds.name, ds.channels, ds.classes, {}};
  std::vector<int> seen(static_cast<std::size_t>(ds.classes), 0);
  for (const auto& s : ds.samples) {
    auto& count = seen[static_cast<std::size_t>(s.label)];
    (count < train_per_class ? train : test).samples.push_back(s);
    ++count;
  }
  return {std::move(train), std::move(test)};
}

}  // namespace sernn::spikes
