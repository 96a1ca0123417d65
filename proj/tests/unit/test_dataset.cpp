#include <gtest/gtest.h>

#include <fstream>

#include "paraug/dataset.hpp"
#include "testing.hpp"

using namespace paraug;
using paraug::fx::TempDir;

namespace {

void write(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string header51() {
  std::string h = "id,path,split,origin,batch_ref";
  for (int i = 0; i < 51; ++i) h += ",attr" + std::to_string(i);
  return h;
}

ImageRecord synth(std::string id, std::vector<Label> labels) {
  return {std::move(id), "s/" + id + ".png", Split::train, Origin::synthetic, std::move(labels), std::string("b1")};
}

}  // namespace

TEST(Dataset, LoadsMinimalManifest) {
  TempDir t;
  std::string row = "r0,img/0.png,train,real,";
  for (int i = 0; i < 51; ++i) row += ",0";
  write(t / "m.csv", header51() + "\n" + row + "\n");
  const auto m = load_manifest(t / "m.csv");
  EXPECT_EQ(m.schema.size(), 51u);
  ASSERT_EQ(m.records.size(), 1u);
  EXPECT_EQ(m.records[0].split, Split::train);
  EXPECT_FALSE(m.records[0].batch_ref);
}

TEST(Dataset, RejectsLabelOutsideAlphabet) {
  TempDir t;
  write(t / "m.csv", "id,path,split,origin,batch_ref,a,b\nr0,p,train,real,,0,4\n");
  try {
    load_manifest(t / "m.csv");
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("label outside alphabet"), std::string::npos);
    EXPECT_NE(msg.find("r0"), std::string::npos);
    EXPECT_NE(msg.find("'b'"), std::string::npos);
  }
}

TEST(Dataset, RejectsMalformedHeaderMissingFileAndLengthMismatch) {
  TempDir t;
  EXPECT_THROW(load_manifest(t / "none.csv"), IoError);
  write(t / "h.csv", "id,path,origin,split,batch_ref,a\n");
  EXPECT_THROW(load_manifest(t / "h.csv"), ParseError);
  write(t / "d.csv", "id,path,split,origin,batch_ref,a,a\n");
  EXPECT_THROW(load_manifest(t / "d.csv"), ParseError);
  write(t / "l.csv", "id,path,split,origin,batch_ref,a,b\nr7,p,train,real,,0\n");
  try {
    load_manifest(t / "l.csv");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("length mismatch"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("r7"), std::string::npos);
  }
}

TEST(Dataset, RealRecordsRejectSyntheticLabels) {
  TempDir t;
  write(t / "m.csv", "id,path,split,origin,batch_ref,a,b\nr0,p,train,real,,3,0\n");
  EXPECT_THROW(load_manifest(t / "m.csv"), ValidationError);
}

TEST(Dataset, DuplicateIdsRejected) {
  TempDir t;
  write(t / "m.csv", "id,path,split,origin,batch_ref,a\nr0,p,train,real,,0\nr0,q,test,real,,1\n");
  EXPECT_THROW(load_manifest(t / "m.csv"), ValidationError);
}

TEST(Dataset, RoundTripEmptyAndSynthetic) {
  TempDir t;
  DatasetManifest m{fx::small_schema(), {}, "tiny"};
  save_manifest(m, t / "e.csv");
  EXPECT_EQ(load_manifest(t / "e.csv"), m);
  m.records.push_back(synth("b1-0", {-1, 1, 3}));
  m.records.push_back({"r,1", "img/\"q\".png", Split::test, Origin::real, {0, 2, 1}, std::nullopt});
  save_manifest(m, t / "s.csv");
  EXPECT_EQ(load_manifest(t / "s.csv"), m);
}

TEST(Dataset, SecondSaveIsByteIdentical) {
  TempDir t;
  auto m = fx::manifest_from_counts(
      {{"x", 0, 0, 10, 1000}, {"y", 0, 0, 500, 1000}, {"z", 0, 0, 999, 1000}}, 0, "k");
  save_manifest(m, t / "a.csv");
  const auto again = load_manifest(t / "a.csv");
  save_manifest(again, t / "b.csv");
  std::ifstream a(t / "a.csv"), b(t / "b.csv");
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(again.records.size(), 1000u);
  EXPECT_EQ(sa, sb);
}

TEST(Dataset, SplitStatsBasics) {
  DatasetManifest empty{fx::small_schema(), {}, ""};
  const auto s0 = split_stats(empty);
  EXPECT_EQ(s0.total_train + s0.total_test, 0u);
  EXPECT_EQ(s0.per_attribute_positive_train, (std::vector<std::size_t>{0, 0, 0}));

  DatasetManifest one{fx::small_schema(), {{"r", "p", Split::train, Origin::real, {1, 0, 2}, {}}}, ""};
  EXPECT_EQ(split_stats(one).per_attribute_positive_train, (std::vector<std::size_t>{1, 0, 1}));
}

TEST(Dataset, PositiveCountMonotonicity) {
  DatasetManifest m{fx::small_schema(), {{"r", "p", Split::train, Origin::real, {0, 1, 0}, {}}}, ""};
  const auto before = split_stats(m);
  m.records.push_back({"r2", "p", Split::train, Origin::real, {1, 0, 0}, {}});
  const auto after = split_stats(m);
  EXPECT_EQ(after.per_attribute_positive_train[0], before.per_attribute_positive_train[0] + 1);
  EXPECT_EQ(after.per_attribute_positive_train[1], before.per_attribute_positive_train[1]);
  EXPECT_EQ(after.per_attribute_positive_train[2], before.per_attribute_positive_train[2]);
}

TEST(Dataset, Rap1FixtureCountsMatchTable) {
  const auto rows = fx::read_fixture_rows("rap1_scorer.csv");
  const auto m = fx::rap1_manifest();
  const auto st = split_stats(m);
  EXPECT_EQ(st.total_train, 33268u);
  EXPECT_EQ(st.per_attribute_positive_train[m.schema.index_of("hs-BaldHead")], 122u);
  for (std::size_t a = 0; a < rows.size(); ++a) EXPECT_EQ(st.per_attribute_positive_train[a], rows[a].pos_train) << rows[a].attribute;
}

TEST(Dataset, SyntheticValidator) {
  EXPECT_NO_THROW(validate_synthetic_labels({-1, 1, 3}));
  EXPECT_THROW(validate_synthetic_labels({0, 1, 3}), ValidationError);
  EXPECT_THROW(validate_synthetic_labels({2, 1, -1}), ValidationError);
  EXPECT_THROW(validate_synthetic_labels({1, 1, -1}), ValidationError);
  EXPECT_THROW(validate_synthetic_labels({-1, 3, -1}), ValidationError);
  DatasetManifest m{fx::small_schema(), {synth("s", {-1, 1, -1})}, ""};
  m.records[0].split = Split::test;
  EXPECT_THROW(validate(m), ValidationError);
}

TEST(Dataset, ExclusionTags) {
  AttributeSchema s;
  EXPECT_TRUE(s.is_excluded("action-Holding"));
  EXPECT_TRUE(s.is_excluded("ub-Others"));
  EXPECT_TRUE(s.is_excluded("attach-Other"));
  EXPECT_FALSE(s.is_excluded("hs-BaldHead"));
  EXPECT_FALSE(s.is_excluded("ub-OtherStuff"));
}

TEST(Dataset, SchemaOnlyFile) {
  TempDir t;
  write(t / "s.csv", "id,path,split,origin,batch_ref,a,b,c\n");
  EXPECT_EQ(load_schema(t / "s.csv").names, (std::vector<std::string>{"a", "b", "c"}));
}
