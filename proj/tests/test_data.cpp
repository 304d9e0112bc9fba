#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "d2dfl/data.hpp"

using namespace d2dfl;

namespace {

std::vector<double> checker_image(std::size_t side) {
  std::vector<double> img(side * side);
  for (std::size_t k = 0; k < img.size(); ++k) img[k] = static_cast<double>(k % 7) / 7.0 + 0.1 * static_cast<double>(k / side);
  return img;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

void write_idx(const std::filesystem::path& path, const std::vector<std::uint32_t>& dims,
               const std::vector<std::uint8_t>& values) {
  std::ofstream out(path, std::ios::binary);
  const unsigned char magic[4] = {0, 0, 0x08, static_cast<unsigned char>(dims.size())};
  out.write(reinterpret_cast<const char*>(magic), 4);
  for (std::uint32_t d : dims) {
    const unsigned char b[4] = {static_cast<unsigned char>(d >> 24), static_cast<unsigned char>(d >> 16),
                                static_cast<unsigned char>(d >> 8), static_cast<unsigned char>(d)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size()));
}

}  // namespace

TEST(Dirichlet, LargeAlphaIsNearlyIid) {
  Engine data_rng = make_stream(1, Purpose::dataset);
  const Dataset ds = synthetic_dataset(2, 10, 32000, 1, 3.0, data_rng).train;
  Engine rng = make_stream(1, Purpose::partition);
  const auto clients = split_by_partition(ds, dirichlet_partition(ds, 16, 1e6, rng));
  const Matrix h = label_histograms(clients, 10);
  for (double v : h.data()) EXPECT_NEAR(v, 0.1, 0.005);
}

TEST(Dirichlet, SmallAlphaSkewsLabels) {
  // Resampling oracle: average distinct-class count per client over seeds
  // versus the same quantity under a uniform shuffle.
  Engine data_rng = make_stream(2, Purpose::dataset);
  const Dataset ds = digit_images(3200, 1, 0.3, data_rng).train;
  double skewed = 0.0, shuffled = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    Engine rng = make_stream(static_cast<std::uint64_t>(s), Purpose::partition);
    Engine rng2 = make_stream(static_cast<std::uint64_t>(s), Purpose::partition, 1);
    for (const auto& [part, acc] : {std::pair{dirichlet_partition(ds, 16, 0.1, rng), &skewed},
                                    std::pair{iid_partition(ds, 16, rng2), &shuffled}}) {
      for (const auto& c : split_by_partition(ds, part)) {
        std::set<int> distinct(c.labels.begin(), c.labels.end());
        *acc += static_cast<double>(distinct.size()) / (16.0 * seeds);
      }
    }
  }
  EXPECT_LT(skewed, 10.0);
  EXPECT_EQ(shuffled, 10.0);
  EXPECT_LT(skewed, 0.6 * shuffled);
}

TEST(Dirichlet, EveryClientNonEmptyAndSingleClient) {
  Engine data_rng = make_stream(3, Purpose::dataset);
  const Dataset ds = digit_images(200, 1, 0.3, data_rng).train;
  Engine rng = make_stream(3, Purpose::partition);
  for (std::size_t c : dirichlet_partition(ds, 16, 0.01, rng).counts()) EXPECT_GE(c, 1u);
  const Partition one = dirichlet_partition(ds, 1, 0.1, rng);
  ASSERT_EQ(one.counts().size(), 1u);
  EXPECT_EQ(one.counts()[0], ds.size());
  EXPECT_THROW(dirichlet_partition(ds, 4, 0.0, rng), std::invalid_argument);
}

TEST(Rotation, ZeroDegreesIsIdentity) {
  const auto img = checker_image(8);
  EXPECT_EQ(rotate_image(img, 8, 0.0), img);
}

TEST(Rotation, QuarterTurnsMatchExactOracle) {
  const auto img = checker_image(8);
  auto expect = img;
  for (int q = 1; q <= 4; ++q) {
    expect = rotate90_cw(expect, 8);
    EXPECT_LE(max_diff(rotate_image(img, 8, 90.0 * q), expect), 1e-6) << q * 90 << " degrees";
  }
  EXPECT_LE(max_diff(rotate_image(img, 8, 360.0), img), 1e-6);
}

TEST(Rotation, QuarterTurnIsClockwise) {
  // top-left pixel moves to the top-right corner
  std::vector<double> img(9, 0.0);
  img[0] = 1.0;
  const auto r = rotate90_cw(img, 3);
  EXPECT_EQ(r[2], 1.0);
  EXPECT_LE(max_diff(rotate_image(img, 3, 90.0), r), 1e-12);
}

TEST(Rotation, AnglesSpanFullTurn) {
  for (std::size_t i = 0; i < 100; ++i) EXPECT_NEAR(rotation_angle(i, 100), 3.6 * static_cast<double>(i), 1e-12);
  EXPECT_EQ(rotation_angle(0, 16), 0.0);
  EXPECT_DOUBLE_EQ(rotation_angle(4, 16), 90.0);
}

TEST(Rotation, PartitionRotatesEachShard) {
  Engine data_rng = make_stream(4, Purpose::dataset);
  const Dataset ds = digit_images(40, 1, 0.0, data_rng).train;
  const auto clients = rotation_partition(ds, 4);
  ASSERT_EQ(clients.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    ASSERT_EQ(clients[i].size(), 10u);
    // shard i holds examples i, i+4, ...; client 1 is a quarter turn
    std::vector<double> src(ds.example(i).begin(), ds.example(i).end());
    std::vector<double> got(clients[i].example(0).begin(), clients[i].example(0).end());
    auto expect = src;
    for (std::size_t q = 0; q < i; ++q) expect = rotate90_cw(expect, 8);
    EXPECT_LE(max_diff(got, expect), 1e-6);
    EXPECT_EQ(clients[i].labels[0], ds.labels[i]);
  }
  Dataset flat = ds;
  flat.image_side = 0;
  EXPECT_THROW(rotation_partition(flat, 4), std::invalid_argument);
}

TEST(Synthetic, SeparatedClassesLinearlyProbeable) {
  Engine rng = make_stream(5, Purpose::dataset);
  const SplitDataset s = synthetic_dataset(10, 2, 400, 400, 8.0, rng);
  // nearest class mean is a linear rule for two classes
  Matrix means(2, 10);
  std::vector<double> count(2, 0.0);
  for (std::size_t e = 0; e < s.train.size(); ++e) {
    const auto c = static_cast<std::size_t>(s.train.labels[e]);
    count[c] += 1;
    for (std::size_t k = 0; k < 10; ++k) means(c, k) += s.train.features(e, k);
  }
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t k = 0; k < 10; ++k) means(c, k) /= count[c];
  std::size_t hit = 0;
  for (std::size_t e = 0; e < s.test.size(); ++e) {
    double d0 = 0, d1 = 0;
    for (std::size_t k = 0; k < 10; ++k) {
      d0 += std::pow(s.test.features(e, k) - means(0, k), 2);
      d1 += std::pow(s.test.features(e, k) - means(1, k), 2);
    }
    hit += (d1 < d0 ? 1 : 0) == s.test.labels[e];
  }
  EXPECT_GE(static_cast<double>(hit) / static_cast<double>(s.test.size()), 0.99);
}

TEST(Synthetic, DeterministicAndBalanced) {
  Engine a = make_stream(6, Purpose::dataset), b = make_stream(6, Purpose::dataset);
  const SplitDataset x = synthetic_dataset(5, 3, 100, 10, 2.0, a), y = synthetic_dataset(5, 3, 100, 10, 2.0, b);
  EXPECT_EQ(x.train.features, y.train.features);
  EXPECT_EQ(x.train.labels, y.train.labels);
  std::vector<int> counts(3, 0);
  for (int l : x.train.labels) ++counts[static_cast<std::size_t>(l)];
  EXPECT_LE(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()), 1);
  Engine c = make_stream(6, Purpose::dataset);
  EXPECT_THROW(synthetic_dataset(5, 1, 10, 10, 2.0, c), std::invalid_argument);
}

TEST(Digits, ShapeAndBalance) {
  Engine rng = make_stream(7, Purpose::dataset);
  const SplitDataset s = digit_images(103, 20, 0.1, rng);
  EXPECT_EQ(s.train.dim(), 64u);
  EXPECT_EQ(s.train.image_side, 8u);
  EXPECT_NO_THROW(s.train.validate());
  std::vector<int> counts(10, 0);
  for (int l : s.train.labels) ++counts[static_cast<std::size_t>(l)];
  EXPECT_LE(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()), 1);
}

TEST(Idx, RoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "d2dfl_idx_test";
  std::filesystem::create_directories(dir);
  std::vector<std::uint8_t> px(3 * 2 * 2);
  for (std::size_t k = 0; k < px.size(); ++k) px[k] = static_cast<std::uint8_t>(k * 20);
  write_idx(dir / "img", {3, 2, 2}, px);
  write_idx(dir / "lbl", {3}, {2, 0, 1});
  const Dataset ds = load_idx_dataset((dir / "img").string(), (dir / "lbl").string());
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.dim(), 4u);
  EXPECT_EQ(ds.image_side, 2u);
  EXPECT_EQ(ds.classes, 3u);
  EXPECT_EQ(ds.labels, (std::vector<int>{2, 0, 1}));
  EXPECT_DOUBLE_EQ(ds.features(1, 2), 6 * 20 / 255.0);

  write_idx(dir / "short", {3, 2, 2}, {1, 2, 3});
  EXPECT_THROW(read_idx((dir / "short").string()), std::runtime_error);
  write_idx(dir / "lbl2", {2}, {0, 1});
  EXPECT_THROW(load_idx_dataset((dir / "img").string(), (dir / "lbl2").string()), std::runtime_error);
  EXPECT_THROW(read_idx((dir / "missing").string()), std::runtime_error);
  std::filesystem::remove_all(dir);
}
