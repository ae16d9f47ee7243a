#include "oracles.hpp"

#include "sprout/error.hpp"
#include "sprout/ingest.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <map>

namespace sprout {
namespace {

namespace fs = std::filesystem;

Recording make_recording(const std::string& id, const std::string& variety, std::size_t n,
                         std::uint64_t seed) {
  Recording r;
  r.subject_id = id;
  r.variety = variety;
  r.storage_temp_c = 8;
  r.sample_rate_hz = 1.0 / 3600.0;
  r.start_day = parse_iso_date("2024-09-15");
  r.sprouting_day = parse_iso_date("2024-10-20");
  r.samples = testing::gaussian_noise(n, seed, 0.01);
  return r;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string expect_data_error(const fs::path& manifest) {
  try {
    load_dataset(manifest);
  } catch (const DataError& e) {
    return e.what();
  }
  ADD_FAILURE() << "no DataError for " << manifest;
  return {};
}

TEST(Ingest, LoadsThreeSubjects) {
  testing::TempDir dir("ingest");
  Dataset ds;
  ds.label = "three";
  for (int i = 0; i < 3; ++i) {
    ds.recordings.push_back(make_recording("p0" + std::to_string(i + 1), "Agria", 50, i));
  }
  const auto manifest = write_dataset(ds, dir.path());
  const auto loaded = load_dataset(manifest);
  ASSERT_EQ(loaded.recordings.size(), 3u);
  EXPECT_EQ(loaded.label, "three");
  EXPECT_EQ(loaded.recordings[1].subject_id, "p02");
  EXPECT_EQ(loaded.recordings[1].sprouting_offset(), 35);
}

TEST(Ingest, RoundTripIsExact) {
  testing::TempDir dir("ingest");
  Dataset ds;
  ds.label = "rt";
  ds.recordings.push_back(make_recording("a", "Agria", 333, 1));
  ds.recordings.push_back(make_recording("b", "SHC1010", 17, 2));
  ds.recordings.back().sprouting_day.reset();
  ds.recordings.back().storage_temp_c = 4;
  const auto first = load_dataset(write_dataset(ds, dir.path() / "one"));
  EXPECT_EQ(first, ds);
  const auto second = load_dataset(write_dataset(first, dir.path() / "two"));
  EXPECT_EQ(second, first);
}

TEST(Ingest, SampleCountEqualsRowCount) {
  testing::TempDir dir("ingest");
  write_text(dir.path() / "x.csv", "elapsed_seconds,voltage_volts\n0,1.5\n1,-2\n\n2,3e-3\n");
  EXPECT_EQ(load_signal_csv(dir.path() / "x.csv", "x"), (std::vector<double>{1.5, -2, 3e-3}));
}

TEST(Ingest, CohortComposition) {
  testing::TempDir dir("ingest");
  Dataset ds;
  const char* varieties[] = {"Sorentina", "SHC1010", "Agria", "Agria"};
  for (int i = 0; i < 64; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "p%02d", i + 1);
    ds.recordings.push_back(make_recording(id, varieties[i % 4], 24, static_cast<std::uint64_t>(i)));
  }
  const auto loaded = load_dataset(write_dataset(ds, dir.path()));
  ASSERT_EQ(loaded.recordings.size(), 64u);
  std::map<std::string, int> counts;
  for (const auto& r : loaded.recordings) {
    ++counts[r.variety];
  }
  EXPECT_EQ(counts["Sorentina"], 16);
  EXPECT_EQ(counts["SHC1010"], 16);
  EXPECT_EQ(counts["Agria"], 32);
}

class BadManifest : public ::testing::Test {
protected:
  testing::TempDir dir{"ingest"};

  void SetUp() override {
    write_text(dir.path() / "ok.csv", "elapsed_seconds,voltage_volts\n0,1\n1,2\n");
  }

  fs::path manifest(const std::string& subjects) {
    const auto p = dir.path() / "manifest.json";
    write_text(p, "{\"label\":\"t\",\"subjects\":[" + subjects + "]}");
    return p;
  }

  static std::string subject(const std::string& id, const std::string& file = "ok.csv",
                             const std::string& sprouting = "2024-10-10") {
    return "{\"id\":\"" + id +
           "\",\"variety\":\"Agria\",\"storage_temp_c\":8,\"sample_rate_hz\":1,"
           "\"start_day\":\"2024-10-01\",\"sprouting_day\":\"" +
           sprouting + "\",\"signal_path\":\"" + file + "\"}";
  }
};

TEST_F(BadManifest, DuplicateIdNamesSubject) {
  const auto msg = expect_data_error(manifest(subject("p01") + "," + subject("p01")));
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
  EXPECT_NE(msg.find("p01"), std::string::npos) << msg;
}

TEST_F(BadManifest, MissingSignalFile) {
  EXPECT_THROW(load_dataset(manifest(subject("p01", "gone.csv"))), InputError);
  EXPECT_THROW(load_dataset(dir.path() / "nope.json"), InputError);
}

TEST_F(BadManifest, NonFiniteSampleReportsPosition) {
  write_text(dir.path() / "nan.csv", "elapsed_seconds,voltage_volts\n0,1\n1,nan\n");
  const auto msg = expect_data_error(manifest(subject("p07", "nan.csv")));
  EXPECT_NE(msg.find("p07"), std::string::npos) << msg;
  EXPECT_NE(msg.find("nan.csv:3"), std::string::npos) << msg;
}

TEST_F(BadManifest, SproutingBeforeStart) {
  const auto msg = expect_data_error(manifest(subject("p03", "ok.csv", "2024-09-30")));
  EXPECT_NE(msg.find("p03"), std::string::npos) << msg;
}

TEST_F(BadManifest, MissingHeaderAndBadNumbers) {
  write_text(dir.path() / "nohead.csv", "0,1\n1,2\n");
  EXPECT_NE(expect_data_error(manifest(subject("p04", "nohead.csv"))).find("header"),
            std::string::npos);
  write_text(dir.path() / "junk.csv", "elapsed_seconds,voltage_volts\n0,abc\n");
  EXPECT_NE(expect_data_error(manifest(subject("p05", "junk.csv"))).find("junk.csv:2"),
            std::string::npos);
}

TEST_F(BadManifest, MalformedJson) {
  write_text(dir.path() / "m.json", "{\"subjects\": [");
  EXPECT_THROW(load_dataset(dir.path() / "m.json"), DataError);
  write_text(dir.path() / "m.json", "{\"subjects\": [{\"id\": \"p1\"}]}");
  EXPECT_THROW(load_dataset(dir.path() / "m.json"), DataError);
}

TEST(GroundTruth, RequiredForTraining) {
  Dataset ds;
  ds.recordings.push_back(make_recording("p01", "Agria", 10, 1));
  EXPECT_NO_THROW(require_ground_truth(ds));
  ds.recordings.back().sprouting_day.reset();
  try {
    require_ground_truth(ds);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("p01"), std::string::npos);
  }
}

TEST(Dates, IsoRoundTripAndArithmetic) {
  const auto d = parse_iso_date("2024-02-28");
  EXPECT_EQ(format_iso_date(d), "2024-02-28");
  EXPECT_EQ(format_iso_date(add_days(d, 1)), "2024-02-29");
  EXPECT_EQ(format_iso_date(add_days(d, 2)), "2024-03-01");
  EXPECT_EQ(days_between(parse_iso_date("2024-10-01"), parse_iso_date("2024-11-15")), 45);
  EXPECT_EQ(days_between(parse_iso_date("2024-11-15"), parse_iso_date("2024-10-01")), -45);
  EXPECT_EQ(days_between(d, add_days(d, -400)), -400);
}

TEST(Dates, RejectsMalformed) {
  for (const char* bad : {"2024-2-28", "2024-02-30", "2023-02-29", "24-02-28", "2024/02/28",
                          "2024-13-01", "2024-02-2x", ""}) {
    EXPECT_THROW(parse_iso_date(bad), DataError) << bad;
  }
}

} // namespace
} // namespace sprout
