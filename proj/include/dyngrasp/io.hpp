#pragma once

// On-disk formats: trial/MVC CSVs, session manifests, ground truth,
// envelope caches, segments.json, curves/confusion CSVs and metrics.json.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "constants.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "ggs.hpp"
#include "signal_pipeline.hpp"

namespace dyngrasp::io {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------- helpers ----

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Nine significant digits; "nan" for NaN.
inline std::string fmt9(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// JSON value carrying at most nine significant digits; null for NaN.
inline json num9(double v) {
  if (!std::isfinite(v)) return nullptr;
  return std::stod(fmt9(v));
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes through a temporary file and renames, so readers never observe a
/// partially written output.
inline void write_text(const fs::path& p, std::string_view text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, p);
}

inline std::uint64_t hash_file(const fs::path& p, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a(read_text(p), h);
}

inline std::string provenance_line(const std::string& config_hash, std::uint64_t seed) {
  return "# dyngrasp config_hash=" + config_hash + " seed=" + std::to_string(seed) + "\n";
}

inline std::string channel_header(std::size_t channels) {
  std::string h = "t_s";
  for (std::size_t c = 1; c <= channels; ++c) {
    h += c < 10 ? ",ch0" : ",ch";
    h += std::to_string(c);
  }
  return h;
}

// ----------------------------------------------------------- trial CSV ----

inline std::string format_channels_csv(const ChannelMatrix& m, double sample_rate,
                                       const std::string& provenance) {
  std::string out = provenance + channel_header(m.size()) + "\n";
  const std::size_t n = sample_count(m);
  out.reserve(out.size() + n * m.size() * 12);
  char buf[32];
  for (std::size_t t = 0; t < n; ++t) {
    std::snprintf(buf, sizeof buf, "%.7g", static_cast<double>(t) / sample_rate);
    out += buf;
    for (const auto& ch : m) {
      std::snprintf(buf, sizeof buf, ",%.7g", ch[t]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

/// Parses `t_s,ch01,...,chNN` rows. Lines starting with '#' are comments.
inline ChannelMatrix parse_channels_csv(std::string_view text, const std::string& name,
                                        std::size_t expected_channels = kChannels) {
  ChannelMatrix m(expected_channels);
  bool header_seen = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != channel_header(expected_channels)) {
        throw SchemaError(name, "header", "expected '" + channel_header(expected_channels) + "'");
      }
      header_seen = true;
      continue;
    }
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t col = 0; col <= expected_channels; ++col) {
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || !std::isfinite(v)) {
        throw SchemaError(name, col == 0 ? "t_s" : "ch" + std::to_string(col),
                          "bad number on line " + std::to_string(line_no));
      }
      if (col > 0) m[col - 1].push_back(v);
      p = next;
      if (col < expected_channels) {
        if (p == end || *p != ',') {
          throw SchemaError(name, "row", "line " + std::to_string(line_no) + " has too few columns");
        }
        ++p;
      }
    }
    if (p != end) {
      throw SchemaError(name, "row", "line " + std::to_string(line_no) + " has too many columns");
    }
  }
  if (!header_seen) throw SchemaError(name, "header", "missing");
  if (sample_count(m) == 0) throw SchemaError(name, "row", "no samples");
  return m;
}

inline ChannelMatrix read_channels_csv(const fs::path& p, std::size_t expected_channels = kChannels) {
  if (!fs::exists(p)) throw DataError("missing file " + p.string());
  return parse_channels_csv(read_text(p), p.string(), expected_channels);
}

// ------------------------------------------------------------ manifest ----

struct ManifestEntry {
  std::string trial_file;
  std::string object_id;
  int gesture_label = 0;
  int trial_index = 0;
};

struct SessionManifest {
  std::string subject_id;
  std::string session_id;
  std::string direction;  // cw | ccw
  std::string mvc_file = "mvc.csv";
  std::optional<std::string> lead_in_file;
  std::vector<ManifestEntry> trials;
};

inline std::string trial_id_from_file(const std::string& trial_file) {
  return fs::path(trial_file).stem().string();
}

inline json to_json(const SessionManifest& m) {
  json j;
  j["subject_id"] = m.subject_id;
  j["session_id"] = m.session_id;
  j["direction"] = m.direction;
  j["mvc_file"] = m.mvc_file;
  if (m.lead_in_file) j["lead_in_file"] = *m.lead_in_file;
  auto& arr = j["trials"] = json::array();
  for (const auto& t : m.trials) {
    arr.push_back({{"trial_file", t.trial_file},
                   {"object_id", t.object_id},
                   {"gesture_label", t.gesture_label},
                   {"trial_index", t.trial_index}});
  }
  return j;
}

inline SessionManifest parse_manifest(const json& j, const std::string& name) {
  auto require = [&](const json& obj, const std::string& field, const std::string& path) -> const json& {
    if (!obj.is_object() || !obj.contains(field)) throw SchemaError(name, path + field, "missing");
    return obj.at(field);
  };
  auto string_field = [&](const json& obj, const std::string& field, const std::string& path) {
    const json& v = require(obj, field, path);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw SchemaError(name, path + field, "expected a string");
  };
  auto int_field = [&](const json& obj, const std::string& field, const std::string& path, int lo,
                       int hi) {
    const json& v = require(obj, field, path);
    if (!v.is_number_integer()) throw SchemaError(name, path + field, "expected an integer");
    const auto x = v.get<long long>();
    if (x < lo || x > hi) {
      throw SchemaError(name, path + field,
                        "value " + std::to_string(x) + " outside " + std::to_string(lo) + ".." +
                            std::to_string(hi));
    }
    return static_cast<int>(x);
  };

  SessionManifest m;
  m.subject_id = string_field(j, "subject_id", "");
  m.session_id = string_field(j, "session_id", "");
  m.direction = string_field(j, "direction", "");
  if (m.direction != "cw" && m.direction != "ccw") {
    throw SchemaError(name, "direction", "expected 'cw' or 'ccw'");
  }
  if (j.contains("mvc_file")) m.mvc_file = string_field(j, "mvc_file", "");
  if (j.contains("lead_in_file")) m.lead_in_file = string_field(j, "lead_in_file", "");
  const json& trials = require(j, "trials", "");
  if (!trials.is_array() || trials.empty()) throw SchemaError(name, "trials", "expected a non-empty array");
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const std::string path = "trials[" + std::to_string(i) + "].";
    ManifestEntry e;
    e.trial_file = string_field(trials[i], "trial_file", path);
    e.object_id = string_field(trials[i], "object_id", path);
    e.gesture_label = int_field(trials[i], "gesture_label", path, 1, kMaxGesture);
    e.trial_index = int_field(trials[i], "trial_index", path, 1, static_cast<int>(kTrialsPerObject));
    m.trials.push_back(std::move(e));
  }
  return m;
}

inline SessionManifest read_manifest(const fs::path& p) {
  if (!fs::exists(p)) throw DataError("missing manifest " + p.string());
  json j;
  try {
    j = json::parse(read_text(p));
  } catch (const json::parse_error& e) {
    throw SchemaError(p.string(), "<document>", e.what());
  }
  return parse_manifest(j, p.string());
}

// ----------------------------------------------------- envelope cache ----

inline constexpr std::uint32_t kEnvelopeCacheVersion = 1;
inline constexpr char kEnvelopeMagic[8] = {'D', 'G', 'E', 'N', 'V', 0, 0, 0};

inline void write_envelope(const fs::path& p, const ChannelMatrix& m, double sample_rate) {
  std::string buf(kEnvelopeMagic, sizeof kEnvelopeMagic);
  auto put = [&](const auto& v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof v);
  };
  put(kEnvelopeCacheVersion);
  put(static_cast<std::uint32_t>(m.size()));
  put(static_cast<std::uint64_t>(sample_count(m)));
  put(sample_rate);
  for (const auto& ch : m) buf.append(reinterpret_cast<const char*>(ch.data()), ch.size() * sizeof(double));
  write_text(p, buf);
}

inline ChannelMatrix read_envelope(const fs::path& p, double* sample_rate = nullptr) {
  const std::string buf = read_text(p);
  std::size_t off = 0;
  auto get = [&](auto& v) {
    if (off + sizeof v > buf.size()) throw DataError(p.string() + ": truncated envelope cache");
    std::memcpy(&v, buf.data() + off, sizeof v);
    off += sizeof v;
  };
  if (buf.size() < sizeof kEnvelopeMagic || buf.compare(0, sizeof kEnvelopeMagic,
                                                        std::string(kEnvelopeMagic, sizeof kEnvelopeMagic)) != 0) {
    throw DataError(p.string() + ": not an envelope cache");
  }
  off = sizeof kEnvelopeMagic;
  std::uint32_t version = 0, channels = 0;
  std::uint64_t n = 0;
  double fs_hz = 0.0;
  get(version);
  if (version != kEnvelopeCacheVersion) throw DataError(p.string() + ": stale cache version");
  get(channels);
  get(n);
  get(fs_hz);
  if (buf.size() != off + channels * n * sizeof(double)) throw DataError(p.string() + ": size mismatch");
  ChannelMatrix m(channels, std::vector<double>(n));
  for (auto& ch : m) {
    std::memcpy(ch.data(), buf.data() + off, n * sizeof(double));
    off += n * sizeof(double);
  }
  if (sample_rate) *sample_rate = fs_hz;
  return m;
}

// ------------------------------------------------------- segments.json ----

inline json segment_json(const Segmentation& seg) {
  json j;
  for (std::size_t i = 0; i < seg.breakpoints.size(); ++i) {
    const std::string k = "b" + std::to_string(i + 1);
    j[k] = seg.breakpoints[i];
    j[k + "_ms"] = num9(seg.breakpoint_ms(i));
  }
  j["objective"] = num9(seg.objective);
  j["length"] = seg.length;
  j["downsample_factor"] = seg.downsample_factor;
  return j;
}

inline Segmentation segment_from_json(const json& j, double sample_rate, const std::string& name) {
  Segmentation seg;
  try {
    for (int i = 1; i <= 3; ++i) seg.breakpoints.push_back(j.at("b" + std::to_string(i)).get<std::size_t>());
    seg.length = j.at("length").get<std::size_t>();
    seg.downsample_factor = j.at("downsample_factor").get<std::size_t>();
    seg.objective = j.at("objective").is_null() ? std::nan("") : j.at("objective").get<double>();
  } catch (const json::exception& e) {
    throw SchemaError(name, "segment", e.what());
  }
  seg.sample_rate = sample_rate;
  if (!(seg.breakpoints[0] < seg.breakpoints[1] && seg.breakpoints[1] < seg.breakpoints[2] &&
        seg.breakpoints[2] < seg.length)) {
    throw SchemaError(name, "b1..b3", "breakpoints must be strictly increasing and inside the trial");
  }
  return seg;
}

// --------------------------------------------------------- eval outputs ----

inline std::string curves_csv(const EvalCurves& c, const std::string& provenance) {
  std::string out = provenance + "t_ms,p_grasp,p_rest,p_top,acc_grasp,acc_rest,n_trials\n";
  for (const auto& p : c.points) {
    out += fmt9(p.t_ms) + "," + fmt9(p.p_grasp) + "," + fmt9(p.p_rest) + "," + fmt9(p.p_top) + "," +
           fmt9(p.acc_grasp) + "," + fmt9(p.acc_rest) + "," + std::to_string(p.n_trials) + "\n";
  }
  return out;
}

inline std::string confusion_csv(const ConfusionMatrix& cm, const std::string& provenance) {
  std::string out = provenance + "true_label";
  for (std::size_t c = 0; c < kNumClasses; ++c) out += ",pred_" + std::to_string(c);
  out += ",support\n";
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    out += std::to_string(r);
    for (std::size_t c = 0; c < kNumClasses; ++c) out += "," + fmt9(cm.rate[r][c]);
    out += "," + std::to_string(cm.support[r]) + "\n";
  }
  return out;
}

inline json phase_accuracy_json(const PhaseAccuracy& acc) {
  json j;
  for (auto p : kAllPhases) {
    const auto& h = acc.by_phase[static_cast<std::size_t>(p)];
    j[std::string(phase_name(p))] = {{"accuracy", num9(h.rate())}, {"windows", h.total}};
  }
  j["return_early"] = {{"accuracy", num9(acc.return_early.rate())}, {"windows", acc.return_early.total}};
  return j;
}

inline json strategy_json(const StrategyMetrics& m) {
  json j;
  j["t_i_ms"] = m.t_i.t_ms ? num9(*m.t_i.t_ms) : json(nullptr);
  j["t_i_flag"] = std::string(crossing_flag_name(m.t_i.flag));
  j["d_p"] = num9(m.d_p.d_p);
  j["t_peak_ms"] = num9(m.d_p.t_peak_ms);
  j["phase_accuracy"] = phase_accuracy_json(m.accuracy);
  if (m.confusion) {
    j["preshape_accuracy"] = num9(m.confusion->mean_accuracy());
    j["preshape_interval_ms"] = {num9(m.confusion->lo_ms), num9(m.confusion->hi_ms)};
  } else {
    j["preshape_accuracy"] = nullptr;
  }
  auto& folds = j["folds"] = json::array();
  for (const auto& f : m.folds) {
    folds.push_back({{"train_trials", f.train_trials},
                     {"validation_trials", f.validation_trials},
                     {"train_rows", f.train_rows},
                     {"train_rows_reach", f.train_rows_by_phase[0]},
                     {"train_rows_grasp", f.train_rows_by_phase[1]},
                     {"train_rows_return", f.train_rows_by_phase[2]},
                     {"train_rows_rest", f.train_rows_by_phase[3]}});
  }
  return j;
}

inline json metrics_json(const EvaluationReport& r, const std::string& config_hash) {
  json j;
  j["config_hash"] = config_hash;
  j["seed"] = r.seed;
  for (const auto& m : r.combined) j["strategies"][std::string(strategy_name(m.strategy))] = strategy_json(m);
  for (const auto& s : r.subjects) {
    json sj;
    for (const auto& m : s.strategies) sj[std::string(strategy_name(m.strategy))] = strategy_json(m);
    j["subjects"][s.subject_id] = sj;
  }
  return j;
}

}  // namespace dyngrasp::io
