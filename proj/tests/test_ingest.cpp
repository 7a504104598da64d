#include <gtest/gtest.h>

#include <sstream>

#include "qvsum/qvsum.hpp"
#include "test_util.hpp"

using namespace qvsum;

TEST(RepeatFrames, IdentityAtTarget) {
  std::vector<int> f(199);
  std::iota(f.begin(), f.end(), 0);
  EXPECT_EQ(repeat_frames(f, 199), f);
}

TEST(RepeatFrames, CyclesFromFirstFrame) {
  std::vector<int> f(75);
  std::iota(f.begin(), f.end(), 100);
  const auto out = repeat_frames(f, 199);
  ASSERT_EQ(out.size(), 199u);
  EXPECT_EQ(out[75], f[0]);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], f[i % 75]);
}

TEST(RepeatFrames, SingleFrame) {
  const std::vector<int> f{7};
  EXPECT_EQ(repeat_frames(f, 4), (std::vector<int>{7, 7, 7, 7}));
}

TEST(RepeatFrames, Errors) {
  EXPECT_THROW(repeat_frames(std::vector<int>{}, 4), std::invalid_argument);
  EXPECT_THROW(repeat_frames(std::vector<int>(5), 4), std::length_error);
}

TEST(NormalizeFrame, Constants) {
  const Normalization n;
  EXPECT_EQ(n.mean, (std::array<double, 3>{0.4280, 0.4106, 0.3589}));
  EXPECT_EQ(n.stddev, (std::array<double, 3>{0.2737, 0.2631, 0.2601}));
}

TEST(NormalizeFrame, MeanFrameIsZero) {
  const Normalization n;
  Frame f(3, 2, 2);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) f.at(c, y, x) = n.mean[c];
  for (double v : normalize_frame(f).data) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(NormalizeFrame, HandValues) {
  Frame f(3, 1, 1);
  f.at(0, 0, 0) = 1.0;
  f.at(2, 0, 0) = 0.0;
  const Frame out = normalize_frame(f);
  EXPECT_NEAR(out.at(0, 0, 0), 2.0899, 1e-4);
  EXPECT_NEAR(out.at(2, 0, 0), -1.3799, 1e-4);
}

TEST(NormalizeFrame, RoundTripAndShapeError) {
  Frame f(3, 2, 3, 0.25);
  f.at(1, 1, 2) = 0.9;
  const Frame back = denormalize_frame(normalize_frame(f));
  for (std::size_t i = 0; i < f.data.size(); ++i) EXPECT_NEAR(back.data[i], f.data[i], 1e-12);
  EXPECT_THROW(normalize_frame(Frame(1, 2, 2)), std::invalid_argument);
}

TEST(Annotation, Mapping) {
  EXPECT_EQ(map_annotation(parse_annotation("VeryGood")), 3);
  EXPECT_EQ(map_annotation(parse_annotation("Good")), 2);
  EXPECT_EQ(map_annotation(parse_annotation("Not Good")), 1);
  EXPECT_EQ(map_annotation(parse_annotation("Bad")), 0);
  EXPECT_THROW(parse_annotation("Excellent"), InputError);
}

TEST(AggregateMajority, Examples) {
  auto vote = [](std::vector<int> v) {
    std::vector<std::vector<int>> a;
    for (int s : v) a.push_back({s});
    return aggregate_majority(a).at(0);
  };
  EXPECT_EQ(vote({2, 2, 3, 0, 2}), 2);
  EXPECT_EQ(vote({3, 3, 2, 2}), 3);
  EXPECT_EQ(vote({1}), 1);
}

TEST(AggregateMajority, Errors) {
  EXPECT_THROW(aggregate_majority(std::vector<std::vector<int>>{}), std::invalid_argument);
  EXPECT_THROW(aggregate_majority(std::vector<std::vector<int>>{{1, 2}, {1}}), std::invalid_argument);
}

TEST(Rebin, LinearMaps) {
  EXPECT_EQ(rebin_tvsum(1.0), 0);
  EXPECT_EQ(rebin_tvsum(5.0), 3);
  EXPECT_EQ(rebin_tvsum(3.0), 2);
  EXPECT_EQ(rebin_summe(0.0), 0);
  EXPECT_EQ(rebin_summe(0.5), 2);
  EXPECT_EQ(rebin_summe(1.0), 3);
  EXPECT_THROW(rebin_tvsum(0.5), std::out_of_range);
  EXPECT_THROW(rebin_summe(1.5), std::out_of_range);
}

TEST(Tokenize, LowercasesAndSplits) {
  EXPECT_EQ(tokenize("  Dog  on the\tBeach "), (std::vector<std::string>{"dog", "on", "the", "beach"}));
  EXPECT_TRUE(tokenize("   ").empty());
}

TEST(Manifest, ParsesAndRoundTrips) {
  std::istringstream in(
      R"({"video_id":"a","frames_dir":"f/a","query":"dog","annotations":[[0,1,2],["Good","Bad","Very Good"]],"split":"train"})"
      "\n\n"
      R"({"video_id":"b","frames_dir":"f/b","query":"car","annotations":[[3]],"split":"test"})"
      "\n");
  const Manifest m = parse_manifest(in);
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.entries[0].annotations[1], (std::vector<double>{2, 0, 3}));
  EXPECT_EQ(m.entries[1].split, Split::test);
  EXPECT_EQ(m.entries[1].line, 3u);
  std::istringstream again(serialize_manifest(m));
  EXPECT_EQ(serialize_manifest(parse_manifest(again)), serialize_manifest(m));
}

TEST(Manifest, ErrorsNameTheLine) {
  auto fails_with = [](const std::string& text, const std::string& needle) {
    std::istringstream in(text);
    try {
      parse_manifest(in);
    } catch (const InputError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  const std::string ok = R"({"video_id":"a","frames_dir":"x","query":"q","annotations":[[1]],"split":"train"})";
  EXPECT_TRUE(fails_with(ok + "\n" + ok + "\n", "duplicate"));
  EXPECT_TRUE(fails_with(ok + "\n{bad json\n", "line 2"));
  EXPECT_TRUE(fails_with(R"({"video_id":"a","frames_dir":"x","query":"q","annotations":[[1,2],[1]],"split":"train"})", "mismatch"));
  EXPECT_TRUE(fails_with(R"({"video_id":"a","frames_dir":"x","query":"q","annotations":[[1]],"split":"dev"})", "line 1"));
  EXPECT_TRUE(fails_with(R"({"video_id":"a","frames_dir":"x","query":"q","annotations":[["Superb"]],"split":"train"})", "'a'"));
}

TEST(Manifest, ValidateAgainstConfig) {
  DatasetConfig cfg;
  cfg.name = DatasetName::queryvs;
  cfg.max_frames = 199;
  cfg.max_query_words = 8;
  Manifest m;
  ManifestEntry e;
  e.video_id = "v";
  e.query = "one two";
  e.annotations = {std::vector<double>(200, 1.0)};
  m.entries.push_back(e);
  EXPECT_THROW(validate_manifest(m, cfg), InputError);
  m.entries[0].annotations = {std::vector<double>(10, 4.0)};
  EXPECT_THROW(validate_manifest(m, cfg), InputError);
  m.entries[0].annotations = {std::vector<double>(10, 2.0)};
  m.entries[0].query = "a b c d e f g h i";
  EXPECT_THROW(validate_manifest(m, cfg), InputError);
  m.entries[0].query = "a b";
  EXPECT_NO_THROW(validate_manifest(m, cfg));
  EXPECT_THROW(validate_manifest(Manifest{}, cfg), InputError);
}

TEST(DatasetConfig, PublishedFrameCounts) {
  EXPECT_EQ(required_max_frames(DatasetName::queryvs), 199u);
  EXPECT_EQ(required_max_frames(DatasetName::summe), 388u);
  EXPECT_EQ(required_max_frames(DatasetName::tvsum), 647u);
  Json j = {{"dataset_name", "queryvs"}, {"max_frames", 200}};
  EXPECT_THROW(dataset_config_from_json(j), InputError);
  j["max_frames"] = 199;
  const auto c = dataset_config_from_json(j);
  EXPECT_EQ(c.max_query_words, 8u);
  EXPECT_EQ(dataset_config_from_json(Json::parse(to_json(c).dump())).max_frames, 199u);
  j["unknown"] = 1;
  EXPECT_THROW(dataset_config_from_json(j), InputError);
}

TEST(VideoRecord, LoadsPadsAndNormalizes) {
  testutil::TempDir dir("ingest");
  SyntheticOptions o;
  o.train_videos = 1;
  o.frames = 5;
  o.frame_size = 4;
  const Manifest m = write_synthetic_corpus(dir.path(), o);
  DatasetConfig cfg = synthetic_dataset_config(o);
  cfg.max_frames = 12;
  const auto r = load_video_record(m, m.entries[0], cfg);
  EXPECT_EQ(r.frames.size(), 12u);
  EXPECT_EQ(r.original_len, 5u);
  EXPECT_EQ(r.frames[5], r.frames[0]);
  EXPECT_EQ(r.gold_scores.size(), 5u);
  const Frame raw = read_png(m.frames_path(m.entries[0]) / frame_filename(0));
  EXPECT_NEAR(r.frames[0].at(1, 0, 0), (raw.at(1, 0, 0) - 0.4106) / 0.2631, 1e-12);
}

TEST(ImageIo, PngRoundTripWithin8Bits) {
  testutil::TempDir dir("png");
  Frame f(3, 3, 5);
  for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] = static_cast<double>(i % 7) / 6.0;
  write_png(dir.path() / "x.png", f);
  const Frame g = read_png(dir.path() / "x.png");
  ASSERT_EQ(g.height, 3);
  ASSERT_EQ(g.width, 5);
  for (std::size_t i = 0; i < f.data.size(); ++i) EXPECT_NEAR(g.data[i], f.data[i], 0.5 / 255.0 + 1e-12);
  EXPECT_THROW(read_png(dir.path() / "missing.png"), InputError);
}
