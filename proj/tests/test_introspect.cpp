#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "panet/errors.hpp"
#include "panet/introspect/introspect.hpp"
#include "test_helpers.hpp"

using namespace panet;
using panet::testing::random_tensor;
using panet::testing::scratch_dir;

namespace {

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Correlation, HandValues) {
  const Tensor same = part_correlation(Tensor({3, 2}, {1, 2, 1, 2, 1, 2}));
  for (double v : same.data()) EXPECT_NEAR(v, 1.0, 1e-15);
  EXPECT_NEAR(mean_offdiag(same), 1.0, 1e-15);

  const Tensor eye = part_correlation(Tensor({3, 3}, {2, 0, 0, 0, 3, 0, 0, 0, 0.5}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(eye[i * 3 + j], i == j ? 1.0 : 0.0);
  EXPECT_EQ(mean_offdiag(eye), 0.0);

  const Tensor pair = part_correlation(Tensor({2, 2}, {1, 0, 1, 1}));
  EXPECT_NEAR(pair[1], 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(mean_offdiag(pair), 1.0 / std::sqrt(2.0), 1e-15);

  const Tensor opposite = part_correlation(Tensor({2, 2}, {1, 1, -1, -1}));
  EXPECT_NEAR(opposite[1], -1.0, 1e-15);
  EXPECT_NEAR(mean_offdiag(opposite), 1.0, 1e-15);
}

TEST(Correlation, ZeroRowsAndErrors) {
  const Tensor c = part_correlation(Tensor({2, 3}, {0, 0, 0, 1, 2, 3}));
  EXPECT_EQ(c[0], 1.0);
  EXPECT_EQ(c[1], 0.0);
  EXPECT_EQ(c[3], 1.0);
  EXPECT_THROW(part_correlation(Tensor::zeros({4})), DimensionError);
  EXPECT_THROW(mean_offdiag(Tensor::zeros({2, 3})), DimensionError);
  EXPECT_THROW(mean_offdiag(Tensor::ones({1, 1})), UsageError);
}

TEST(Correlation, InvariantsOverRandomParts) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Tensor p = random_tensor({6, 5}, seed);
    const Tensor c = part_correlation(p);
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_EQ(c[i * 6 + i], 1.0);
      for (std::size_t j = 0; j < 6; ++j) {
        EXPECT_EQ(c[i * 6 + j], c[j * 6 + i]);
        EXPECT_LE(std::abs(c[i * 6 + j]), 1.0);
      }
    }
    const double m = mean_offdiag(c);
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);

    // Positive row scaling leaves cosine similarity unchanged.
    std::vector<double> scaled = p.to_vector();
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t k = 0; k < 5; ++k) scaled[i * 5 + k] *= 0.5 + double(i);
    EXPECT_LT(max_abs_diff(c, part_correlation(Tensor({6, 5}, scaled))), 1e-12);
  }
}

TEST(Correlation, CsvLayout) {
  const std::string csv = correlation_csv(part_correlation(Tensor({2, 2}, {1, 0, 1, 1})));
  EXPECT_EQ(csv, "1,0.707106781\n0.707106781,1\n");
}

TEST(Diversity, MatchesPerSampleMean) {
  const ModelParams p = ModelParams::initialize(ModelConfig{}, 2);
  DatasetSpec spec;
  spec.counts.assign(6, 1);
  spec.min_views = 2;
  spec.max_views = 3;
  spec.seed = 4;
  const Dataset data = build_dataset(spec);
  double s = 0.0;
  for (const auto& sample : data.samples) s += mean_offdiag(part_correlation(forward(p, sample).global_parts));
  EXPECT_NEAR(part_diversity(p, data), s / 6.0, 1e-15);
  EXPECT_THROW(part_diversity(p, Dataset{}), UsageError);
}

TEST(Overlay, TopMapsByMass) {
  // One view, 2x2 spatial, 4 maps with masses 1, 4, 4, 2.
  const Tensor a({1, 2, 2, 4}, {1, 1, 1, 2, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0});
  EXPECT_EQ(top_attention_maps(a, 0, 3), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(top_attention_maps(a, 0, 10).size(), 4u);
}

TEST(Overlay, UpsamplingAndScaling) {
  // Map 0 of a 2x2 view: [[0, 1], [2, 4]].
  const Tensor a({1, 2, 2, 1}, {0, 1, 2, 4});
  const Image img = attention_overlay(a, 0, 0, 4);
  ASSERT_EQ(img.pixels.size(), 16u);
  EXPECT_EQ(img.pixels[0], 0.0f);
  EXPECT_EQ(img.pixels[1], 0.0f);
  EXPECT_EQ(img.pixels[2], 64.0f);  // round(255 / 4)
  EXPECT_EQ(img.pixels[3], 64.0f);
  EXPECT_EQ(img.pixels[8], 128.0f);  // round(255 / 2)
  EXPECT_EQ(img.pixels[15], 255.0f);

  const Image flat = attention_overlay(Tensor::full({1, 2, 2, 1}, 0.3), 0, 0, 8);
  for (float v : flat.pixels) EXPECT_EQ(v, 0.0f);
}

TEST(Overlay, PgmEncoding) {
  Image img;
  img.size = 2;
  img.pixels = {0, 255, 128, 7};
  const auto bytes = encode_pgm(img);
  const std::string header = "P5\n2 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 4);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + header.size()), header);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 1]), 255);
  EXPECT_EQ(static_cast<unsigned char>(bytes[header.size() + 3]), 7);
}

TEST(Overlay, ExportWritesFourPerViewDeterministically) {
  const ModelParams p = ModelParams::initialize(ModelConfig{}, 3);
  const Shape shape = apply_pose_regime(generate_shape(1, 2), PoseRegime::rotated, 2);
  const ForwardResult r = forward(p, make_sample(shape, sample_viewpoints_random(3, 5), 32));
  const auto d1 = scratch_dir("overlay_a"), d2 = scratch_dir("overlay_b");
  const auto a = export_attention_overlays(r.attention, 32, d1);
  const auto b = export_attention_overlays(r.attention, 32, d2);
  ASSERT_EQ(a.size(), 12u);
  ASSERT_EQ(b.size(), 12u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].filename(), b[i].filename());
    EXPECT_TRUE(a[i].filename().string().starts_with("view" + std::to_string(i / 4) + "_part"));
    const auto bytes = slurp(a[i]);
    EXPECT_EQ(bytes, slurp(b[i]));
    EXPECT_EQ(bytes.size(), std::string("P5\n32 32\n255\n").size() + 32 * 32);
  }
  EXPECT_THROW(export_attention_overlays(Tensor::zeros({2, 2}), 32, d1), DimensionError);
}
