#include "oracles.hpp"

#include "sprout/error.hpp"
#include "sprout/feature_table.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace sprout {
namespace {

FeatureTable sample_table(std::size_t blocks) {
  FeatureTable t;
  t.layout = layout_for_width(blocks * kFeaturesPerScale);
  for (int j = 0; j < 2; ++j) {
    for (int d = 0; d < 3; ++d) {
      FeatureVector fv;
      fv.subject_id = j == 0 ? "a" : "b";
      fv.window_index = d + 1;
      fv.day_offset = d;
      fv.values = testing::gaussian_noise(t.layout.width(), static_cast<std::uint64_t>(10 * j + d), 1e3);
      t.rows.push_back(fv);
      t.targets.push_back(static_cast<double>(5 + j - d));
    }
  }
  return t;
}

TEST(FeatureTable, LayoutFromWidth) {
  EXPECT_EQ(layout_for_width(13), (FeatureLayout{1, true}));
  EXPECT_EQ(layout_for_width(104), (FeatureLayout{8, false}));
  EXPECT_THROW(layout_for_width(100), DataError);
  EXPECT_THROW(layout_for_width(0), DataError);
}

TEST(FeatureTable, RoundTripIsExact) {
  testing::TempDir dir("ftable");
  auto t = sample_table(8);
  t.targets[4].reset();
  write_feature_table(dir.path() / "f.csv", t);
  const auto back = read_feature_table(dir.path() / "f.csv");
  EXPECT_EQ(back.layout, t.layout);
  ASSERT_EQ(back.rows.size(), t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].subject_id, t.rows[i].subject_id);
    EXPECT_EQ(back.rows[i].day_offset, t.rows[i].day_offset);
    EXPECT_EQ(back.rows[i].values, t.rows[i].values);
    EXPECT_EQ(back.targets[i], t.targets[i]);
  }
  std::ifstream in(dir.path() / "f.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("subject_id,window_index,day_offset,target_days,f_000,", 0), 0u);
  EXPECT_NE(header.find(",f_103"), std::string::npos);
  EXPECT_EQ(header.find("f_104"), std::string::npos);
}

TEST(FeatureTable, ExampleTableConversion) {
  const auto t = sample_table(2);
  const auto ex = to_example_table(t);
  EXPECT_EQ(ex.examples.size(), 6u);
  EXPECT_EQ(ex.sprouting_offsets.at("a"), 5);
  EXPECT_EQ(ex.sprouting_offsets.at("b"), 6);
  EXPECT_EQ(ex.windows_per_subject.at("b"), 3);
  const auto again = to_feature_table(ex);
  EXPECT_EQ(again.targets, t.targets);

  auto unlabeled = t;
  unlabeled.targets[1].reset();
  EXPECT_THROW(to_example_table(unlabeled), DataError);
  auto inconsistent = t;
  inconsistent.targets[1] = 9.0;
  EXPECT_THROW(to_example_table(inconsistent), DataError);
}

TEST(FeatureTable, MalformedFiles) {
  testing::TempDir dir("ftable");
  EXPECT_THROW(read_feature_table(dir.path() / "none.csv"), InputError);
  std::ofstream(dir.path() / "bad_header.csv") << "id,x\n";
  EXPECT_THROW(read_feature_table(dir.path() / "bad_header.csv"), DataError);

  write_feature_table(dir.path() / "ok.csv", sample_table(1));
  std::ifstream in(dir.path() / "ok.csv");
  std::string header;
  std::string row;
  std::getline(in, header);
  std::getline(in, row);
  std::ofstream(dir.path() / "short.csv") << header << "\n" << row.substr(0, row.rfind(',')) << "\n";
  try {
    read_feature_table(dir.path() / "short.csv");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("short.csv:2"), std::string::npos) << e.what();
  }
}

} // namespace
} // namespace sprout
