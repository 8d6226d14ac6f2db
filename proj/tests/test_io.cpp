#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>

#include "dyngrasp/io.hpp"
#include "dyngrasp/random.hpp"

using namespace dyngrasp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("dyngrasp_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ChannelMatrix random_matrix(std::size_t channels, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  ChannelMatrix m(channels, std::vector<double>(n));
  for (auto& ch : m) {
    for (auto& v : ch) v = rng.normal();
  }
  return m;
}

json valid_manifest() {
  return json::parse(R"({
    "subject_id": "S01", "session_id": "cw", "direction": "cw",
    "mvc_file": "mvc.csv", "extra": {"ignored": true},
    "trials": [
      {"trial_file": "obj01_t1.csv", "object_id": "obj01", "gesture_label": 3, "trial_index": 1},
      {"trial_file": "obj01_t2.csv", "object_id": "obj01", "gesture_label": 3, "trial_index": 2}
    ]})");
}

}  // namespace

TEST(Format, NineSignificantDigits) {
  EXPECT_EQ(io::fmt9(0.1234567891234), "0.123456789");
  EXPECT_EQ(io::fmt9(-355.771234), "-355.771234");
  EXPECT_EQ(io::fmt9(std::nan("")), "nan");
  EXPECT_TRUE(io::num9(std::nan("")).is_null());
  EXPECT_DOUBLE_EQ(io::num9(2.0 / 3.0).get<double>(), 0.666666667);
  EXPECT_EQ(io::hex64(0xabcULL), "0000000000000abc");
  EXPECT_NE(io::fnv1a("a"), io::fnv1a("b"));
}

TEST(ChannelsCsv, RoundTripsAtSevenDigits) {
  const auto m = random_matrix(kChannels, 200, 1);
  const auto text = io::format_channels_csv(m, kSampleRateHz, io::provenance_line("abc", 7));
  EXPECT_EQ(text.rfind("# dyngrasp config_hash=abc seed=7\n", 0), 0u);
  const auto back = io::parse_channels_csv(text, "x.csv");
  ASSERT_EQ(back.size(), kChannels);
  for (std::size_t c = 0; c < kChannels; ++c) {
    ASSERT_EQ(back[c].size(), 200u);
    for (std::size_t t = 0; t < 200; ++t) EXPECT_NEAR(back[c][t], m[c][t], 1e-6 * std::max(1.0, std::abs(m[c][t])));
  }
}

TEST(ChannelsCsv, SchemaErrorsNameTheField) {
  const std::string header = io::channel_header(2) + "\n";
  try {
    io::parse_channels_csv(header + "0,1,abc\n", "t.csv", 2);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.field(), "ch2");
    EXPECT_EQ(e.file(), "t.csv");
  }
  EXPECT_THROW(io::parse_channels_csv("t_s,a,b\n0,1,2\n", "t.csv", 2), SchemaError);
  EXPECT_THROW(io::parse_channels_csv(header + "0,1\n", "t.csv", 2), SchemaError);
  EXPECT_THROW(io::parse_channels_csv(header + "0,1,2,3\n", "t.csv", 2), SchemaError);
  EXPECT_THROW(io::parse_channels_csv(header, "t.csv", 2), SchemaError);
  EXPECT_THROW(io::parse_channels_csv(header + "0,1,inf\n", "t.csv", 2), SchemaError);
  EXPECT_NO_THROW(io::parse_channels_csv("# note\r\n" + header + "0,1,2\r\n", "t.csv", 2));
  EXPECT_THROW(io::read_channels_csv("/nonexistent/file.csv"), DataError);
}

TEST(Manifest, ParsesAndIgnoresUnknownKeys) {
  const auto m = io::parse_manifest(valid_manifest(), "manifest.json");
  EXPECT_EQ(m.subject_id, "S01");
  ASSERT_EQ(m.trials.size(), 2u);
  EXPECT_EQ(m.trials[1].trial_index, 2);
  EXPECT_EQ(io::trial_id_from_file(m.trials[0].trial_file), "obj01_t1");
  const auto again = io::parse_manifest(io::to_json(m), "m");
  EXPECT_EQ(io::to_json(again), io::to_json(m));
}

TEST(Manifest, SchemaErrorsNameTheField) {
  auto j = valid_manifest();
  j["trials"][1]["gesture_label"] = 14;
  try {
    io::parse_manifest(j, "manifest.json");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.field(), "trials[1].gesture_label");
    EXPECT_NE(std::string(e.what()).find("manifest.json"), std::string::npos);
  }
  j = valid_manifest();
  j["trials"][0].erase("object_id");
  EXPECT_THROW(io::parse_manifest(j, "m"), SchemaError);
  j = valid_manifest();
  j["direction"] = "up";
  EXPECT_THROW(io::parse_manifest(j, "m"), SchemaError);
  j = valid_manifest();
  j["trials"][0]["trial_index"] = 7;
  EXPECT_THROW(io::parse_manifest(j, "m"), SchemaError);
  j = valid_manifest();
  j["trials"] = json::array();
  EXPECT_THROW(io::parse_manifest(j, "m"), SchemaError);

  const auto dir = scratch("manifest");
  io::write_text(dir / "manifest.json", "{not json");
  EXPECT_THROW(io::read_manifest(dir / "manifest.json"), SchemaError);
  EXPECT_THROW(io::read_manifest(dir / "absent.json"), DataError);
}

TEST(EnvelopeCache, BinaryRoundTripIsExact) {
  const auto dir = scratch("env");
  const auto m = random_matrix(kChannels, 333, 2);
  io::write_envelope(dir / "a.env", m, kSampleRateHz);
  double fs_hz = 0.0;
  EXPECT_EQ(io::read_envelope(dir / "a.env", &fs_hz), m);
  EXPECT_EQ(fs_hz, kSampleRateHz);
  EXPECT_FALSE(fs::exists(dir / "a.env.tmp"));
}

TEST(EnvelopeCache, RejectsStaleOrCorruptFiles) {
  const auto dir = scratch("env_bad");
  const auto m = random_matrix(2, 10, 3);
  io::write_envelope(dir / "a.env", m, kSampleRateHz);
  auto bytes = io::read_text(dir / "a.env");

  auto stale = bytes;
  stale[8] = static_cast<char>(io::kEnvelopeCacheVersion + 1);
  io::write_text(dir / "stale.env", stale);
  EXPECT_THROW(io::read_envelope(dir / "stale.env"), DataError);

  io::write_text(dir / "short.env", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(io::read_envelope(dir / "short.env"), DataError);

  io::write_text(dir / "junk.env", "hello world, definitely not a cache");
  EXPECT_THROW(io::read_envelope(dir / "junk.env"), DataError);
}

TEST(SegmentsJson, RoundTrip) {
  Segmentation seg;
  seg.breakpoints = {1008, 2992, 4496};
  seg.length = 6250;
  seg.objective = -12345.678;
  seg.sample_rate = kSampleRateHz;
  const auto j = io::segment_json(seg);
  EXPECT_DOUBLE_EQ(j.at("b1_ms").get<double>(), 645.12);
  const auto back = io::segment_from_json(json::parse(j.dump()), kSampleRateHz, "s.json");
  EXPECT_EQ(back.breakpoints, seg.breakpoints);
  EXPECT_EQ(back.length, seg.length);
  EXPECT_EQ(back.downsample_factor, seg.downsample_factor);
  EXPECT_DOUBLE_EQ(back.objective, seg.objective);

  auto bad = j;
  bad["b2"] = 5000;
  EXPECT_THROW(io::segment_from_json(bad, kSampleRateHz, "s.json"), SchemaError);
  bad = j;
  bad.erase("length");
  EXPECT_THROW(io::segment_from_json(bad, kSampleRateHz, "s.json"), SchemaError);
}

TEST(WriteText, CreatesParentsAndReplacesAtomically) {
  const auto dir = scratch("write");
  io::write_text(dir / "a" / "b" / "c.txt", "one");
  io::write_text(dir / "a" / "b" / "c.txt", "two");
  EXPECT_EQ(io::read_text(dir / "a" / "b" / "c.txt"), "two");
  EXPECT_EQ(io::hash_file(dir / "a" / "b" / "c.txt"), io::fnv1a("two"));
}
