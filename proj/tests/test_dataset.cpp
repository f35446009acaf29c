#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>

#include "stsr/dataset.hpp"
#include "test_support.hpp"

namespace stsr {
namespace {

using testing::Gen;

TEST(FilterUsable, ThresholdKeepsOrder) {
  auto s = testing::constant_series("a", 3, 1, 4, 4);
  std::vector<double> f{0.0, 0.9, 0.1};
  auto kept = filter_usable(s, f, 0.5);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept.frames[0].timestamp, 0);
  EXPECT_EQ(kept.frames[1].timestamp, 2);
  EXPECT_EQ(filter_usable(s, f, 1.0).size(), 3u);
  std::vector<double> all{0.2, 0.3, 0.4};
  EXPECT_THROW(filter_usable(s, all, 0.0), ValidationError);
  std::vector<double> short_list{0.0};
  EXPECT_THROW(filter_usable(s, short_list, 0.5), ValidationError);
}

TEST(FilterUsable, EstimatorHook) {
  auto s = testing::constant_series("a", 4, 1, 2, 2);
  auto kept = filter_usable(
      s, [](const RasterImage& img) { return img.timestamp % 2 == 0 ? 0.0 : 1.0; }, 0.5);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept.frames[1].timestamp, 2);
}

TEST(TrainingPairs, MatchesBruteForceEnumeration) {
  for (int k = 2; k <= 6; ++k) {
    auto lr = testing::constant_series("a", k, 3, 2, 2, 5);
    auto hr = testing::constant_series("a", k, 3, 8, 8, 5);
    auto pairs = make_training_pairs(lr, hr);
    std::vector<std::pair<int, int>> expected;
    for (int t = 0; t < k; ++t) {
      for (int tp = 0; tp < k; ++tp) {
        if (t != tp) expected.emplace_back(t, tp);
      }
    }
    ASSERT_EQ(pairs.size(), expected.size()) << "K=" << k;
    EXPECT_EQ(pairs.size(), static_cast<std::size_t>(k * (k - 1)));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& p = pairs[i];
      EXPECT_EQ(p.t_index, expected[i].first);
      EXPECT_EQ(p.t_ref_index, expected[i].second);
      EXPECT_NE(p.t_index, p.t_ref_index);
      ASSERT_TRUE(p.is_training());
      EXPECT_EQ(p.lr_target.timestamp, 5 + p.t_index);
      EXPECT_EQ(p.hr_target->timestamp, 5 + p.t_index);
      EXPECT_EQ(p.hr_reference.timestamp, 5 + p.t_ref_index);
      EXPECT_EQ(p.lr_target.aoi_id, p.hr_reference.aoi_id);
      EXPECT_DOUBLE_EQ(p.time, p.t_index / static_cast<double>(k - 1));
    }
  }
}

TEST(TrainingPairs, NeedsTwoSharedTimestamps) {
  auto lr = testing::constant_series("a", 1, 3, 2, 2);
  auto hr = testing::constant_series("a", 1, 3, 8, 8);
  EXPECT_THROW(make_training_pairs(lr, hr), ValidationError);
  auto other = testing::constant_series("b", 3, 3, 8, 8);
  EXPECT_THROW(make_training_pairs(testing::constant_series("a", 3, 3, 2, 2), other),
               ValidationError);
}

TEST(InferencePairs, MostRecentReference) {
  auto lr = testing::constant_series("a", 3, 3, 2, 2, 1);
  auto hr = make_raster(torch::zeros({3, 8, 8}), 3, "a");
  auto pairs = make_inference_pairs(lr, hr);
  ASSERT_EQ(pairs.size(), 3u);
  for (const auto& p : pairs) {
    EXPECT_FALSE(p.is_training());
    EXPECT_EQ(p.hr_reference.timestamp, 3);
  }
  EXPECT_EQ(make_inference_pairs(testing::constant_series("a", 1, 3, 2, 2), hr).size(), 1u);
  auto stale = make_raster(torch::zeros({3, 8, 8}), 2, "a");
  EXPECT_THROW(make_inference_pairs(lr, stale), ValidationError);
}

TEST(SplitAois, SizesDisjointAndDeterministic) {
  std::vector<std::string> ids;
  for (int i = 0; i < 60; ++i) ids.push_back("aoi" + std::to_string(i));
  auto s = split_aois(ids, 50, 10, 42);
  EXPECT_EQ(s.train_aois.size(), 50u);
  EXPECT_EQ(s.test_aois.size(), 10u);
  std::set<std::string> all(s.train_aois.begin(), s.train_aois.end());
  all.insert(s.test_aois.begin(), s.test_aois.end());
  EXPECT_EQ(all.size(), 60u);
  auto again = split_aois(ids, 50, 10, 42);
  EXPECT_EQ(again.train_aois, s.train_aois);
  EXPECT_EQ(again.test_aois, s.test_aois);
  EXPECT_TRUE(split_aois(ids, 0, 10, 1).train_aois.empty());
  EXPECT_THROW(split_aois(ids, 55, 10, 1), ValidationError);
}

SceneSpec small_spec(std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.hr_size = 32;
  s.scale_factor = 4;
  s.n_timesteps = 6;
  s.max_building_size = 8;
  return s;
}

TEST(SynthesizeScene, DeterministicPerSeed) {
  auto a = synthesize_scene(small_spec(3));
  auto b = synthesize_scene(small_spec(3));
  ASSERT_EQ(a.hr.size(), b.hr.size());
  for (std::size_t k = 0; k < a.hr.size(); ++k) {
    EXPECT_TRUE(torch::equal(a.hr.frames[k].pixels, b.hr.frames[k].pixels));
  }
  EXPECT_EQ(to_geojson(a.footprints), to_geojson(b.footprints));
}

TEST(SynthesizeScene, NoBuildingsGivesBackgroundOnly) {
  auto spec = small_spec(4);
  spec.min_buildings = spec.max_buildings = 0;
  spec.noise_sigma = 0.0;
  auto scene = synthesize_scene(spec);
  EXPECT_TRUE(scene.footprints.empty());
  for (const auto& f : scene.hr.frames) {
    EXPECT_TRUE(torch::equal(f.pixels, scene.hr.frames[0].pixels));
  }
}

TEST(SynthesizeScene, ConstructionIsMonotone) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    auto spec = small_spec(seed);
    auto scene = synthesize_scene(spec);
    EXPECT_NO_THROW(validate(scene.hr));
    EXPECT_NO_THROW(validate(scene.footprints, spec.n_timesteps));
    Mask prev(spec.hr_size, spec.hr_size);
    for (int k = 0; k < spec.n_timesteps; ++k) {
      auto m = frame_mask(scene.footprints, k, spec.hr_size, spec.hr_size);
      for (std::size_t i = 0; i < m.size(); ++i) EXPECT_GE(m.values()[i], prev.values()[i]);
      prev = m;
    }
    for (const auto& p : scene.footprints.polygons) {
      if (p.appear_t != 0) continue;
      // Present from step 0: its pixels look the same in every frame.
      auto m = rasterize(p.vertices, spec.hr_size, spec.hr_size);
      for (std::int64_t r = 0; r < spec.hr_size; ++r) {
        for (std::int64_t c = 0; c < spec.hr_size; ++c) {
          if (!m(r, c)) continue;
          EXPECT_NEAR(scene.hr.frames.back().pixels[0][r][c].item<float>(),
                      scene.hr.frames.front().pixels[0][r][c].item<float>(), 0.1);
        }
      }
    }
  }
}

TEST(Degrade, ConstantImageStaysConstant) {
  auto img = make_raster(torch::full({3, 16, 16}, 0.4f), 0, "a", 4.0);
  auto lr = degrade(img, 4, 1.5, 0.0, 0);
  EXPECT_EQ(lr.height(), 4);
  EXPECT_LE((lr.pixels - 0.4f).abs().max().item<float>(), 1e-6f);
  EXPECT_DOUBLE_EQ(lr.gsd, 16.0);
  EXPECT_EQ(degrade(make_raster(torch::zeros({1, 256, 256})), 8, 2.0, 0.01, 1).height(), 32);
  EXPECT_THROW(degrade(make_raster(torch::zeros({1, 10, 10})), 4, 0.0, 0.0, 0), ValidationError);
}

TEST(Degrade, CheckerboardBlockAverage) {
  // 4x4 checkerboard, values (r+c)%2 scaled by band; 2x2 blocks each hold two
  // ones and two zeros.
  auto t = torch::zeros({2, 4, 4});
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      t[0][r][c] = static_cast<float>((r + c) % 2);
      t[1][r][c] = r < 2 ? 0.8f : 0.2f * static_cast<float>(c % 2);
    }
  }
  auto lr = degrade(make_raster(t), 2, 0.0, 0.0, 0).pixels;
  const float expected[2][2][2] = {{{0.5f, 0.5f}, {0.5f, 0.5f}}, {{0.8f, 0.8f}, {0.1f, 0.1f}}};
  for (int b = 0; b < 2; ++b) {
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) EXPECT_NEAR(lr[b][r][c].item<float>(), expected[b][r][c], 1e-6);
    }
  }
}

TEST(Degrade, NoiseIsSeeded) {
  auto img = make_raster(torch::full({1, 8, 8}, 0.5f));
  EXPECT_TRUE(torch::equal(degrade(img, 2, 0.0, 0.05, 9).pixels, degrade(img, 2, 0.0, 0.05, 9).pixels));
  EXPECT_FALSE(torch::equal(degrade(img, 2, 0.0, 0.05, 9).pixels, degrade(img, 2, 0.0, 0.05, 10).pixels));
}

TEST(AoiDirectory, RoundTripAndAlignment) {
  auto root = testing::scratch_dir("aoi_dir");
  SyntheticDatasetSpec spec;
  spec.scene = small_spec(5);
  spec.n_aois = 2;
  auto ids = write_synthetic_dataset(root, spec);
  EXPECT_EQ(list_aois(root), ids);
  auto rec = load_aoi(root / ids[0]);
  EXPECT_EQ(rec.hr.size(), 6u);
  EXPECT_EQ(rec.lr.frames[0].height(), 8);
  ASSERT_TRUE(rec.labels.has_value());
  auto aligned = align_usable(rec, 0.5);
  EXPECT_EQ(aligned.lr.size(), 6u);

  rec.manifest.lr[1].occlusion = 0.9;
  rec.manifest.hr[3].occlusion = 0.9;
  aligned = align_usable(rec, 0.5);
  EXPECT_EQ(aligned.lr.size(), 4u);
  for (std::size_t i = 0; i < aligned.lr.size(); ++i) {
    EXPECT_EQ(aligned.lr.frames[i].timestamp, aligned.hr.frames[i].timestamp);
  }
  EXPECT_THROW(load_aoi(root / "missing"), ValidationError);
}

// Pair bookkeeping against the real archive, when it is available locally.
// STSR_SPACENET_ROOT holds AOI directories in the layout above and
// STSR_SPACENET_SPLIT a JSON file {"train": [...], "test": [...]}.
TEST(AoiDirectory, ExternalArchivePairCounts) {
  const char* root = std::getenv("STSR_SPACENET_ROOT");
  const char* split = std::getenv("STSR_SPACENET_SPLIT");
  if (!root || !split) GTEST_SKIP() << "external archive not configured";
  std::ifstream in(split);
  auto j = nlohmann::json::parse(in);
  auto count = [&](const nlohmann::json& ids) {
    std::size_t n = 0;
    for (const auto& id : ids) {
      n += align_usable(load_aoi(std::filesystem::path(root) / id.get<std::string>()), 0.5).lr.size();
    }
    return n;
  };
  EXPECT_EQ(count(j.at("train")), 635u);
  EXPECT_EQ(count(j.at("test")), 119u);
}

}  // namespace
}  // namespace stsr
