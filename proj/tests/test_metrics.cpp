#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "stsr/dataset.hpp"
#include "stsr/metrics.hpp"
#include "test_support.hpp"

namespace stsr {
namespace {

using testing::Gen;
using testing::building;
using testing::rect;

Mask from_rows(const std::vector<std::string>& rows) {
  Mask m(static_cast<std::int64_t>(rows.size()), static_cast<std::int64_t>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c] == '#' ? 1 : 0;
  }
  return m;
}

Mask invert(const Mask& m) {
  Mask out = m;
  for (auto& v : out.values()) v = v ? 0 : 1;
  return out;
}

TEST(PixelMetrics, Accuracy) {
  auto gt = from_rows({"##..", "##..", "....", "...."});
  EXPECT_EQ(pixel_accuracy(gt, gt), 1.0);
  EXPECT_EQ(pixel_accuracy(invert(gt), gt), 0.0);
  auto pred = from_rows({"####", "##..", "...#", "#..."});
  EXPECT_DOUBLE_EQ(pixel_accuracy(pred, gt), 12.0 / 16.0);
  EXPECT_THROW(pixel_accuracy(Mask(4, 4), Mask(4, 5)), ValidationError);
}

TEST(PixelMetrics, Iou) {
  auto a = from_rows({"####....", "####...."});
  EXPECT_EQ(iou(a, a, kBuilding), 1.0);
  EXPECT_EQ(iou(a, invert(a), kBuilding), 0.0);
  auto b = from_rows({"..####..", "..####.."});
  EXPECT_DOUBLE_EQ(iou(a, b, kBuilding), 4.0 / 12.0);
  EXPECT_EQ(iou(Mask(3, 3), Mask(3, 3), kBuilding), 1.0);
}

TEST(PixelMetrics, FwiouHandInstance) {
  auto gt = from_rows({"##..", "##..", "....", "...."});
  Mask pred(4, 4);
  // bg: intersection 12, union 16; building: intersection 0.
  EXPECT_DOUBLE_EQ(fwiou(pred, gt), (12.0 / 16.0) * (12.0 / 16.0) + (4.0 / 16.0) * 0.0);
  EXPECT_EQ(fwiou(gt, gt), 1.0);
  EXPECT_EQ(fwiou(Mask(4, 4), Mask(4, 4)), 1.0);
}

// Independent oracle: per-class sets from raw pixels.
double oracle_fwiou(const Mask& pred, const Mask& gt) {
  double total = 0.0;
  const double n = static_cast<double>(gt.size());
  for (int cls = 0; cls < 2; ++cls) {
    double inter = 0, uni = 0, freq = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const bool p = (pred.values()[i] != 0) == (cls == 1);
      const bool g = (gt.values()[i] != 0) == (cls == 1);
      inter += p && g;
      uni += p || g;
      freq += g;
    }
    total += (freq / n) * (uni == 0 ? 1.0 : inter / uni);
  }
  return total;
}

TEST(PixelMetrics, FwiouMatchesOracleAndSymmetries) {
  Gen g(1);
  for (int trial = 0; trial < 100; ++trial) {
    auto a = g.mask(8, 8, g.real(0.0, 1.0));
    auto b = g.mask(8, 8, g.real(0.0, 1.0));
    EXPECT_NEAR(fwiou(a, b), oracle_fwiou(a, b), 1e-12);
    EXPECT_EQ(iou(a, b, kBuilding), iou(b, a, kBuilding));
    EXPECT_EQ(pixel_accuracy(a, b), pixel_accuracy(b, a));
    for (double v : {pixel_accuracy(a, b), iou(a, b, 0), iou(a, b, 1), fwiou(a, b)}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

// ---- Tracking score ---------------------------------------------------------

// Independent oracle: masks from point-in-polygon scans, greedy matching over
// an explicitly sorted candidate list.
double oracle_ts(const FootprintSet& pred, const FootprintSet& gt, int T, int h, int w) {
  auto masks = [&](const FootprintSet& s) {
    std::vector<std::vector<bool>> out;
    for (const auto& p : s.polygons) {
      std::vector<bool> m(static_cast<std::size_t>(h * w));
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) m[r * w + c] = contains_point(p.vertices, c + 0.5, r + 0.5);
      }
      out.push_back(m);
    }
    return out;
  };
  const auto pm = masks(pred), gm = masks(gt);
  const auto np = pred.size(), ng = gt.size();
  if (np == 0 && ng == 0) return 1.0;
  std::vector<std::map<int, int>> matched(np);  // frame -> gt
  for (int k = 0; k < T; ++k) {
    struct Cand { double iou; std::size_t i, j; };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < np; ++i) {
      if (pred.polygons[i].appear_t > k) continue;
      for (std::size_t j = 0; j < ng; ++j) {
        if (gt.polygons[j].appear_t > k) continue;
        double inter = 0, uni = 0;
        for (std::size_t q = 0; q < pm[i].size(); ++q) {
          inter += pm[i][q] && gm[j][q];
          uni += pm[i][q] || gm[j][q];
        }
        const double v = uni > 0 ? inter / uni : 0.0;
        if (v >= 0.25) cands.push_back({v, i, j});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.iou != b.iou) return a.iou > b.iou;
      if (a.i != b.i) return a.i < b.i;
      return a.j < b.j;
    });
    std::vector<bool> pu(np), gu(ng);
    for (const auto& c : cands) {
      if (pu[c.i] || gu[c.j]) continue;
      pu[c.i] = gu[c.j] = true;
      matched[c.i][k] = static_cast<int>(c.j);
    }
  }
  int correct = 0;
  for (std::size_t i = 0; i < np; ++i) {
    if (matched[i].empty()) continue;
    const int j = matched[i].begin()->second;
    bool ok = true;
    for (auto [k, g] : matched[i]) ok = ok && g == j;
    const int from = std::max(pred.polygons[i].appear_t, gt.polygons[j].appear_t);
    for (int k = from; k < T; ++k) ok = ok && matched[i].count(k) && matched[i][k] == j;
    correct += ok;
  }
  return 2.0 * correct / static_cast<double>(np + ng);
}

FootprintSet two_buildings() {
  return {{building("A", rect(2, 2, 8, 8), 0), building("B", rect(12, 12, 18, 18), 1)}};
}

TEST(TrackingScore, PerfectAndEmpty) {
  auto gt = two_buildings();
  EXPECT_EQ(tracking_score(gt, gt, 4, 20, 20), 1.0);
  EXPECT_EQ(tracking_score({}, gt, 4, 20, 20), 0.0);
  EXPECT_EQ(tracking_score(gt, {}, 4, 20, 20), 0.0);
  EXPECT_EQ(tracking_score({}, {}, 4, 20, 20), 1.0);
}

TEST(TrackingScore, IdentitySwapHandOracle) {
  // Both buildings exist from step 0 over T = 4. The prediction follows A
  // with track p0 and B with p1, but from step 2 a second track p2 also
  // claims A's footprint. Per frame k >= 2: IoU(p0,A) = IoU(p2,A) = 1, the
  // tie goes to p0, so p2 is never matched. Correct tracks: p0, p1 (c = 2),
  // np = 3, ng = 2: TS = 2*2/(3+2) = 0.8.
  FootprintSet gt{{building("A", rect(2, 2, 8, 8), 0), building("B", rect(12, 12, 18, 18), 0)}};
  FootprintSet pred{{building("p0", rect(2, 2, 8, 8), 0), building("p1", rect(12, 12, 18, 18), 0),
                     building("p2", rect(2, 2, 8, 8), 2)}};
  EXPECT_DOUBLE_EQ(tracking_score(pred, gt, 4, 20, 20), 0.8);

  // p1 appears at step 2 on A's footprint instead of following B. It ties
  // with p0 and loses, and B is never matched. c = 1, np = ng = 2: TS = 0.5.
  FootprintSet swapped{{building("p0", rect(2, 2, 8, 8), 0), building("p1", rect(2, 2, 8, 8), 2)}};
  EXPECT_DOUBLE_EQ(tracking_score(swapped, gt, 4, 20, 20), 0.5);
  auto m = match_tracks(swapped, gt, 4, 20, 20);
  EXPECT_EQ(m.matches[3][0], 0);
  EXPECT_EQ(m.matches[3][1], -1);
}

TEST(TrackingScore, LateDetectionIsStillCorrectFromItsAppearance) {
  FootprintSet gt{{building("A", rect(2, 2, 8, 8), 1)}};
  // Predicted late: required frames start at max(2, 1) = 2.
  EXPECT_EQ(tracking_score({{building("p", rect(2, 2, 8, 8), 2)}}, gt, 4, 20, 20), 1.0);
  // Predicted early: frame 0 has no gt to match, frames 1.. must match.
  EXPECT_EQ(tracking_score({{building("p", rect(2, 2, 8, 8), 0)}}, gt, 4, 20, 20), 1.0);
  // Too little overlap: IoU 4/32 < 0.25.
  EXPECT_EQ(tracking_score({{building("p", rect(6, 6, 12, 12), 1)}}, gt, 4, 20, 20), 0.0);
}

TEST(TrackingScore, MalformedPolygonsFail) {
  auto gt = two_buildings();
  FootprintSet two_vertices{{building("p", {{0, 0}, {3, 3}}, 0)}};
  EXPECT_THROW(tracking_score(two_vertices, gt, 4, 20, 20), ValidationError);
  FootprintSet degenerate{{building("p", {{0, 0}, {3, 3}, {6, 6}}, 0)}};
  EXPECT_THROW(tracking_score(degenerate, gt, 4, 20, 20), ValidationError);
  FootprintSet late{{building("p", rect(0, 0, 3, 3), 7)}};
  EXPECT_THROW(tracking_score(late, gt, 4, 20, 20), ValidationError);
  FootprintSet nan{{building("p", {{0, 0}, {std::nan(""), 3}, {6, 0}}, 0)}};
  EXPECT_THROW(tracking_score(nan, gt, 4, 20, 20), ValidationError);
}

FootprintSet random_set(Gen& g, int n, int T, const std::string& prefix) {
  FootprintSet s;
  for (int i = 0; i < n; ++i) {
    const double x = g.integer(0, 20), y = g.integer(0, 20);
    s.polygons.push_back(building(prefix + std::to_string(i),
                                  rect(x, y, x + g.integer(2, 8), y + g.integer(2, 8)),
                                  g.integer(0, T - 1)));
  }
  return s;
}

// Perturbs a set: jitter, duplicate, drop, late appearance.
FootprintSet perturb(Gen& g, const FootprintSet& gt, int T) {
  FootprintSet out;
  int n = 0;
  for (const auto& p : gt.polygons) {
    if (g.coin(0.15)) continue;
    auto q = p;
    q.building_id = "q" + std::to_string(n++);
    if (g.coin(0.4)) {
      for (auto& v : q.vertices) v.x += g.integer(-2, 2);
    }
    if (g.coin(0.3)) q.appear_t = g.integer(0, T - 1);
    if (polygon_area(q.vertices) > 0 && is_simple(q.vertices)) out.polygons.push_back(q);
  }
  if (g.coin(0.5)) {
    auto extra = random_set(g, g.integer(1, 2), T, "x");
    out.polygons.insert(out.polygons.end(), extra.polygons.begin(), extra.polygons.end());
  }
  return out;
}

TEST(TrackingScore, MatchesIndependentOracleOnRandomScenes) {
  Gen g(2);
  for (int trial = 0; trial < 60; ++trial) {
    const int T = g.integer(1, 5);
    auto gt = random_set(g, g.integer(0, 5), T, "g");
    auto pred = perturb(g, gt, T);
    const double ts = tracking_score(pred, gt, T, 28, 28);
    EXPECT_NEAR(ts, oracle_ts(pred, gt, T, 28, 28), 1e-12) << "trial " << trial;
    EXPECT_GE(ts, 0.0);
    EXPECT_LE(ts, 1.0);
  }
}

TEST(TrackingScore, InvariantToVertexOrderAndRelabeling) {
  Gen g(3);
  for (int trial = 0; trial < 30; ++trial) {
    const int T = g.integer(1, 5);
    auto gt = random_set(g, g.integer(1, 5), T, "g");
    auto pred = perturb(g, gt, T);
    const double base = tracking_score(pred, gt, T, 28, 28);
    auto reorder = [&](FootprintSet s) {
      for (auto& p : s.polygons) {
        std::rotate(p.vertices.begin(), p.vertices.begin() + g.integer(0, 3), p.vertices.end());
        if (g.coin()) std::reverse(p.vertices.begin(), p.vertices.end());
        p.building_id = "r" + std::to_string(g.integer(0, 1 << 20)) + p.building_id;
      }
      return s;
    };
    EXPECT_DOUBLE_EQ(tracking_score(reorder(pred), reorder(gt), T, 28, 28), base);
  }
}

TEST(TrackingScore, Monotonicity) {
  Gen g(4);
  for (int trial = 0; trial < 30; ++trial) {
    const int T = g.integer(1, 4);
    // Well-separated gt buildings on a lattice so added tracks do not compete.
    FootprintSet gt;
    const int n = g.integer(1, 4);
    for (int i = 0; i < n; ++i) {
      const double x = 10.0 * i + 1;
      gt.polygons.push_back(building("g" + std::to_string(i), rect(x, 1, x + 6, 7), g.integer(0, T - 1)));
    }
    FootprintSet pred;
    for (int i = 0; i < n - 1; ++i) {
      if (g.coin()) pred.polygons.push_back(building("p" + std::to_string(i), gt.polygons[i].vertices, gt.polygons[i].appear_t));
    }
    const double base = tracking_score(pred, gt, T, 12, 48);
    auto with_correct = pred;
    with_correct.polygons.push_back(building("pc", gt.polygons.back().vertices, gt.polygons.back().appear_t));
    EXPECT_GE(tracking_score(with_correct, gt, T, 12, 48), base);
    auto with_spurious = pred;
    with_spurious.polygons.push_back(building("ps", rect(2, 9, 5, 11), 0));
    EXPECT_LE(tracking_score(with_spurious, gt, T, 12, 48), base);
  }
}

// ---- Reports -----------------------------------------------------------------

TEST(EvaluateAoi, PooledPerFrameCounts) {
  FootprintSet gt{{building("A", rect(0, 0, 4, 4), 1)}};
  FootprintSet pred{{building("p", rect(0, 0, 4, 4), 0)}};
  auto m = evaluate_aoi("x", pred, gt, 2, 8, 8);
  // Frame 0: 16 false positives; frame 1: exact. Pooled over 128 pixels.
  EXPECT_DOUBLE_EQ(m.acc, 112.0 / 128.0);
  ConfusionCounts c;
  c.n[0][0] = 48 + 64 - 16;
  c.n[0][1] = 16;
  c.n[1][1] = 16;
  EXPECT_DOUBLE_EQ(m.iou, mean_iou(c));
  EXPECT_DOUBLE_EQ(mean_iou(c), (96.0 / 112.0 + 16.0 / 32.0) / 2.0);
  EXPECT_DOUBLE_EQ(m.fwiou, fwiou(c));
  EXPECT_EQ(m.ts, 1.0);
}

TEST(Aggregate, UnweightedMean) {
  AoiMetrics a{"a", 1.0, 0.5, 0.8, 1.0, 1, 1};
  AoiMetrics b{"b", 0.5, 0.3, 0.6, 0.0, 1, 1};
  auto one = aggregate({a});
  EXPECT_EQ(one.acc, a.acc);
  EXPECT_EQ(one.ts, a.ts);
  auto twice = aggregate({a, a});
  EXPECT_EQ(twice.fwiou, a.fwiou);
  auto both = aggregate({a, b});
  EXPECT_DOUBLE_EQ(both.acc, 0.75);
  EXPECT_DOUBLE_EQ(both.ts, 0.5);
  auto round = MetricsReport::from_json(both.to_json());
  EXPECT_EQ(round.to_json(), both.to_json());
  auto table = format_table({{"hr", both}, {"lr", one}});
  EXPECT_NE(table.find("Acc"), std::string::npos);
  EXPECT_LT(table.find("Acc"), table.find("IoU"));
  EXPECT_LT(table.find("IoU"), table.find("FWIoU"));
  EXPECT_LT(table.find("FWIoU"), table.find("TS"));
  EXPECT_THROW(aggregate({}), ValidationError);
}

TEST(EvaluateRun, DirectoryContract) {
  auto root = testing::scratch_dir("eval_run");
  SyntheticDatasetSpec spec;
  spec.scene.hr_size = 32;
  spec.scene.scale_factor = 4;
  spec.scene.max_building_size = 8;
  spec.scene.n_timesteps = 3;
  spec.n_aois = 2;
  auto ids = write_synthetic_dataset(root / "data", spec);
  std::filesystem::create_directories(root / "pred");
  EXPECT_THROW(evaluate_run(root / "pred", root / "data"), ValidationError);

  auto labels = load_aoi(root / "data" / ids[0]).labels.value();
  write_geojson(root / "pred" / (ids[0] + ".geojson"), labels);
  auto report = evaluate_run(root / "pred", root / "data");
  EXPECT_EQ(report.per_aoi.size(), 1u);
  EXPECT_EQ(report.missing, std::vector<std::string>{ids[1]});
  EXPECT_EQ(report.acc, 1.0);
  EXPECT_EQ(report.ts, 1.0);
  write_report(root / "out", report, "gt");
  EXPECT_TRUE(std::filesystem::exists(root / "out" / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(root / "out" / "report.txt"));
}

}  // namespace
}  // namespace stsr
