// Acceptance checks, one PASS/FAIL line per criterion.
//
//   stsr_acceptance [criterion ...]
//
// Without arguments every criterion runs. Criteria 9 and 10 train two full
// desk-preset pipelines under ./acceptance_runs.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "stsr/metrics.hpp"
#include "stsr/patch_inference.hpp"
#include "stsr/pipeline.hpp"
#include "stsr/tracker.hpp"
#include "stsr/training.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace stsr;
using testing::Gen;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      out_.pass = false;
      if (!out_.detail.empty()) out_.detail += "; ";
      out_.detail += what;
    }
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : ", ") + s; }
  Outcome result() const {
    Outcome o = out_;
    if (o.pass) o.detail = notes_;
    return o;
  }

 private:
  Outcome out_;
  std::string notes_;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

// ---- 1 ----------------------------------------------------------------------

Outcome metric_oracles() {
  Check c;
  Gen g(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto pred = g.mask(8, 8, g.real(0.0, 1.0));
    auto gt = g.mask(8, 8, g.real(0.0, 1.0));
    double agree = 0, n = 64;
    double inter[2]{}, uni[2]{}, freq[2]{};
    for (std::size_t i = 0; i < 64; ++i) {
      const int p = pred.values()[i] ? 1 : 0, t = gt.values()[i] ? 1 : 0;
      agree += p == t;
      for (int cls = 0; cls < 2; ++cls) {
        inter[cls] += p == cls && t == cls;
        uni[cls] += p == cls || t == cls;
        freq[cls] += t == cls;
      }
    }
    double ious[2], fw = 0;
    for (int cls = 0; cls < 2; ++cls) {
      ious[cls] = uni[cls] == 0 ? 1.0 : inter[cls] / uni[cls];
      fw += freq[cls] / n * ious[cls];
    }
    const auto counts = confusion(pred, gt);
    worst = std::max({worst, std::abs(pixel_accuracy(pred, gt) - agree / n),
                      std::abs(iou(pred, gt, kBackground) - ious[0]),
                      std::abs(iou(pred, gt, kBuilding) - ious[1]),
                      std::abs(mean_iou(counts) - (ious[0] + ious[1]) / 2),
                      std::abs(fwiou(pred, gt) - fw)});
  }
  c.expect(worst <= 1e-12, "max deviation " + fmt(worst));
  c.note("max deviation " + fmt(worst));
  return c.result();
}

// ---- 2 ----------------------------------------------------------------------

Outcome pairing() {
  Check c;
  for (int k = 2; k <= 6; ++k) {
    auto lr = testing::constant_series("a", k, 3, 2, 2);
    auto hr = testing::constant_series("a", k, 3, 16, 16);
    const auto pairs = make_training_pairs(lr, hr);
    std::vector<std::pair<int, int>> brute;
    for (int t = 0; t < k; ++t) {
      for (int u = 0; u < k; ++u) {
        if (t != u) brute.emplace_back(t, u);
      }
    }
    c.expect(pairs.size() == static_cast<std::size_t>(k * (k - 1)), "K=" + std::to_string(k) + " count");
    for (std::size_t i = 0; i < std::min(pairs.size(), brute.size()); ++i) {
      c.expect(pairs[i].t_index == brute[i].first && pairs[i].t_ref_index == brute[i].second,
               "K=" + std::to_string(k) + " order");
    }
  }
  auto lr = testing::constant_series("a", 4, 3, 2, 2);
  auto latest = make_raster(torch::zeros({3, 16, 16}), 3, "a");
  for (const auto& p : make_inference_pairs(lr, latest)) {
    c.expect(p.hr_reference.timestamp == 3 && !p.is_training(), "inference reference");
  }
  bool rejected = false;
  try {
    make_inference_pairs(lr, make_raster(torch::zeros({3, 16, 16}), 2, "a"));
  } catch (const ValidationError&) {
    rejected = true;
  }
  c.expect(rejected, "stale HR reference accepted");
  return c.result();
}

// ---- 3 ----------------------------------------------------------------------

Outcome gradients() {
  Check c;
  torch::manual_seed(3);
  auto cfg = GeneratorConfig::tiny();
  Generator gen(cfg);
  Discriminator disc(cfg);
  PerceptualNet net(cfg.bands);
  gen->to(torch::kFloat64);
  disc->to(torch::kFloat64);
  net->to(torch::kFloat64);
  const LossWeights weights{100.0, 10.0};
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto cat = torch::rand({1, 6, 16, 16}, opts) * 2 - 1;
  auto target = torch::rand({1, 3, 16, 16}, opts) * 2 - 1;
  auto coords = CoordinateGrid::full(16, 16).coords().to(torch::kFloat64).unsqueeze(0);
  auto t = torch::tensor({0.4}, opts);
  auto lr_up = cat.slice(1, 0, 3), hr_ref = cat.slice(1, 3, 6);
  auto loss = [&] {
    auto pred = gen->forward(cat, coords, t);
    auto d_fake = disc->forward(pred, coords, lr_up, hr_ref);
    return total_generator_loss(pred, target, d_fake, weights, net);
  };

  int checked = 0, agree = 0;
  Gen g(33);
  auto compare = [&](torch::Tensor flat, torch::Tensor grad, int samples) {
    for (int s = 0; s < samples; ++s) {
      const auto i = g.integer(0, static_cast<int>(flat.numel()) - 1);
      torch::NoGradGuard ng;
      // The loss is O(50); a smaller step drowns gradients near 1e-7 in
      // round-off.
      const double h = 1e-4, orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double up = loss().item<double>();
      flat[i] = orig - h;
      const double down = loss().item<double>();
      flat[i] = orig;
      const double numeric = (up - down) / (2 * h), analytic = grad[i].item<double>();
      ++checked;
      if (std::abs(numeric - analytic) <= 1e-3 * std::max({std::abs(numeric), std::abs(analytic), 1e-6})) {
        ++agree;
      } else if (std::getenv("STSR_DEBUG_FD")) {
        std::cerr << "param fd " << numeric << " analytic " << analytic << "\n";
      }
    }
  };
  gen->zero_grad();
  loss().backward();
  for (auto& p : gen->parameters()) compare(p.detach().view(-1), p.grad().view(-1), 3);

  // With respect to the generated image itself.
  auto pred = gen->forward(cat, coords, t).detach().requires_grad_(true);
  auto d_fake = disc->forward(pred, coords, lr_up, hr_ref).detach();
  total_generator_loss(pred, target, d_fake, weights, net).backward();
  const int before = checked, agree_before = agree;
  {
    auto flat = pred.detach().view(-1);
    auto grad = pred.grad().view(-1);
    for (int s = 0; s < 60; ++s) {
      const auto i = g.integer(0, static_cast<int>(flat.numel()) - 1);
      torch::NoGradGuard ng;
      const double h = 1e-6, orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double up = total_generator_loss(pred, target, d_fake, weights, net).item<double>();
      flat[i] = orig - h;
      const double down = total_generator_loss(pred, target, d_fake, weights, net).item<double>();
      flat[i] = orig;
      const double numeric = (up - down) / (2 * h), analytic = grad[i].item<double>();
      ++checked;
      if (std::abs(numeric - analytic) <= 1e-3 * std::max(std::abs(numeric), 1e-6)) {
        ++agree;
      } else if (std::getenv("STSR_DEBUG_FD")) {
        std::cerr << "image fd " << numeric << " analytic " << analytic << "\n";
      }
    }
  }
  const double share = static_cast<double>(agree) / checked;
  c.expect(share >= 0.95, "agreement " + std::to_string(agree) + "/" + std::to_string(checked));
  c.note("parameters " + std::to_string(agree_before) + "/" + std::to_string(before) + ", image " +
         std::to_string(agree - agree_before) + "/" + std::to_string(checked - before));
  return c.result();
}

// ---- 4 ----------------------------------------------------------------------

Outcome loss_identities() {
  Check c;
  Gen g(4);
  PerceptualNet net(3);
  auto img = to_model_space(g.image(3, 32, 32)).pixels;
  const double l1 = loss_l1(img, img).item<double>();
  const double lp = loss_lpips(img, img, net).item<double>();
  auto half = torch::full({1, 1, 4, 4}, 0.5, torch::kFloat64);
  const double d = loss_cgan(half, half, GanSide::Discriminator).item<double>();
  c.expect(l1 == 0.0, "L1(I,I) = " + fmt(l1));
  c.expect(lp <= 1e-8, "LPIPS(I,I) = " + fmt(lp));
  c.expect(std::abs(d - 2 * std::log(2.0)) <= 1e-6, "D loss at 0.5 = " + fmt(d, 10));
  c.note("D loss at 0.5 = " + fmt(d, 10));
  return c.result();
}

// ---- 5 ----------------------------------------------------------------------

Outcome overfit() {
  Check c;
  SceneSpec spec;
  spec.seed = 5;
  spec.n_timesteps = 2;
  auto scene = synthesize_scene(spec);
  ImageTimeSeries lr{scene.hr.aoi_id, {}};
  for (const auto& f : scene.hr.frames) lr.frames.push_back(degrade(f, 8, 2.0, 0.005, 1));
  const auto pairs = make_training_pairs(lr, scene.hr);
  std::vector<PairedSample> one{pairs.back()};

  torch::manual_seed(5);
  auto cfg = GeneratorConfig::desk();
  Generator gen(cfg);
  Discriminator disc(cfg);
  PerceptualNet net(cfg.bands);
  TrainConfig tc;
  tc.max_steps = 1000;
  tc.seed = 5;
  const auto log = train_sr(one, gen, disc, net, LossWeights{}, tc).log;
  const double initial = log.front().l1;
  int reached = -1;
  for (const auto& s : log) {
    if (s.l1 <= 0.1 * initial) {
      reached = s.step;
      break;
    }
  }
  c.expect(reached > 0, "L1 " + fmt(initial) + " -> " + fmt(log.back().l1) + " after 1000 steps");
  c.note("L1 " + fmt(initial) + " -> 10% at step " + std::to_string(reached) + ", final " +
         fmt(log.back().l1));
  return c.result();
}

// ---- 6 ----------------------------------------------------------------------

Outcome patch_inference() {
  Check c;
  torch::manual_seed(6);
  Generator gen(GeneratorConfig::desk());
  Gen g(6);
  PairedSample s;
  s.lr_target = g.image(3, 8, 8, 1);
  s.hr_reference = g.image(3, 64, 64, 2);
  c.expect(torch::equal(generate_full(s, 0.5, gen, 64).pixels, generate(s, 0.5, gen).pixels),
           "single tile differs from generate");
  auto plan = plan_tiles(256, 256, 64);
  auto full = positional_encode(CoordinateGrid::full(256, 256), 0.5, gen);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    auto [r, col] = plan.origins[i];
    c.expect(torch::equal(positional_encode(plan.grid(i), 0.5, gen),
                          full.slice(1, r, r + 64).slice(2, col, col + 64)),
             "tile " + std::to_string(i) + " encoding");
  }
  const auto n = plan_tiles(1024, 1024, 256).size();
  c.expect(n == 16, "1024/256 gives " + std::to_string(n) + " tiles");
  return c.result();
}

// ---- 7 ----------------------------------------------------------------------

Outcome collapse() {
  Check c;
  Gen g(7);
  for (int trial = 0; trial < 50; ++trial) {
    ProbabilityMapSeries probs;
    const int t = g.integer(1, 6), h = g.integer(1, 12), w = g.integer(1, 12);
    for (int k = 0; k < t; ++k) probs.push_back(g.probability_map(h, w));
    const auto out = temporal_collapse(probs);
    for (std::size_t i = 0; i < out.size(); ++i) {
      float m = 0.0f;
      for (const auto& p : probs) m = std::max(m, p.values()[i]);
      if (out.values()[i] != m) {
        c.expect(false, "temporal collapse is not the pixelwise max");
        trial = 50;
        break;
      }
    }
  }

  auto series = [](std::vector<float> levels) {
    ProbabilityMapSeries probs;
    for (float v : levels) {
      ProbabilityMap m(10, 10, 0.0f);
      for (int r = 2; r < 6; ++r) {
        for (int col = 2; col < 6; ++col) m(r, col) = v;
      }
      probs.push_back(m);
    }
    return probs;
  };
  const auto probs = series({0.1f, 0.8f, 0.9f});
  const auto polys = polygonize(temporal_collapse(probs), 0.5, 0);
  const auto fs = spatial_collapse(polys, probs, 0.5);
  c.expect(fs.size() == 1 && fs.polygons[0].appear_t == 1, "appear_t for [0.1, 0.8, 0.9]");
  c.expect(spatial_collapse(polys, series({0.6f, 0.7f, 0.9f}), 0.5).polygons.at(0).appear_t == 0,
           "appear_t when always above");
  c.expect(spatial_collapse(polys, series({0.1f, 0.2f, 0.3f}), 0.5).empty(), "never-above kept");

  for (int trial = 0; trial < 20; ++trial) {
    ProbabilityMapSeries rnd;
    for (int k = 0; k < 5; ++k) rnd.push_back(g.probability_map(12, 12));
    const auto comps = polygonize(temporal_collapse(rnd), 0.5, 0);
    for (const auto& p : comps) {
      int last = -1;
      for (double tau : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        const auto one = spatial_collapse({p}, rnd, tau);
        const int a = one.empty() ? 1000 : one.polygons[0].appear_t;
        c.expect(a >= last, "appear_t decreased as tau_app rose");
        last = a;
      }
    }
  }
  return c.result();
}

// ---- 8 ----------------------------------------------------------------------

Outcome tracking_sanity() {
  Check c;
  using testing::building;
  using testing::rect;
  FootprintSet gt{{building("A", rect(2, 2, 8, 8), 0), building("B", rect(12, 12, 18, 18), 0)}};
  c.expect(tracking_score(gt, gt, 4, 20, 20) == 1.0, "perfect != 1");
  c.expect(tracking_score({}, gt, 4, 20, 20) == 0.0, "empty != 0");
  // p2 duplicates A from step 2 and loses every tie to p0: c = 2, np = 3,
  // ng = 2, TS = 4/5.
  FootprintSet pred{{building("p0", rect(2, 2, 8, 8), 0), building("p1", rect(12, 12, 18, 18), 0),
                     building("p2", rect(2, 2, 8, 8), 2)}};
  const double swap = tracking_score(pred, gt, 4, 20, 20);
  c.expect(std::abs(swap - 0.8) < 1e-12, "identity swap TS " + fmt(swap));
  // p1 leaves B for A at step 2: c = 1, np = ng = 2, TS = 1/2.
  FootprintSet moved{{building("p0", rect(2, 2, 8, 8), 0), building("p1", rect(2, 2, 8, 8), 2)}};
  const double moved_ts = tracking_score(moved, gt, 4, 20, 20);
  c.expect(std::abs(moved_ts - 0.5) < 1e-12, "switched track TS " + fmt(moved_ts));
  c.note("swap TS " + fmt(swap) + ", switch TS " + fmt(moved_ts));
  return c.result();
}

// ---- 9 / 10 -----------------------------------------------------------------

ExperimentConfig ordering_config() {
  auto cfg = ExperimentConfig::desk();
  cfg.seed = 0;
  cfg.deterministic = true;
  return cfg;
}

fs::path runs_root() { return fs::current_path() / "acceptance_runs"; }

double ts_of(const Comparison& cmp, const std::string& name) {
  for (const auto& [n, r] : cmp.rows) {
    if (n == name) return r.ts;
  }
  return -1.0;
}

Outcome ordering() {
  Check c;
  const auto dir = runs_root() / "run_a";
  fs::remove_all(dir);
  const auto cfg = ordering_config();
  run_pipeline(cfg, dir);
  const auto cmp = compare_sources(cfg, dir);
  std::cout << cmp.table();
  const double hr = ts_of(cmp, "hr"), ours = ts_of(cmp, cmp.ours), lr = ts_of(cmp, "lr");
  c.expect(hr >= ours, "TS(hr) " + fmt(hr) + " < TS(" + cmp.ours + ") " + fmt(ours));
  c.expect(ours > lr, "TS(" + cmp.ours + ") " + fmt(ours) + " <= TS(lr) " + fmt(lr));
  c.note("TS hr " + fmt(hr) + " >= " + cmp.ours + " " + fmt(ours) + " > lr " + fmt(lr));
  return c.result();
}

Outcome determinism() {
  Check c;
  const auto a = runs_root() / "run_a";
  const auto b = runs_root() / "run_b";
  const auto cfg = ordering_config();
  if (!fs::exists(a / "report.json")) run_pipeline(cfg, a);
  fs::remove_all(b);
  run_pipeline(cfg, b);
  const auto ja = nlohmann::json::parse(std::ifstream(a / "report.json"));
  const auto jb = nlohmann::json::parse(std::ifstream(b / "report.json"));
  double worst = 0.0;
  for (const auto& [name, ra] : ja["sources"].items()) {
    if (!jb["sources"].contains(name)) {
      c.expect(false, "source " + name + " missing from second run");
      continue;
    }
    const auto& rb = jb["sources"][name];
    for (const auto* key : {"acc", "iou", "fwiou", "ts"}) {
      worst = std::max(worst, std::abs(ra[key].get<double>() - rb[key].get<double>()));
    }
    for (std::size_t i = 0; i < ra["per_aoi"].size(); ++i) {
      for (const auto* key : {"acc", "iou", "fwiou", "ts"}) {
        worst = std::max(worst, std::abs(ra["per_aoi"][i][key].get<double>() -
                                         rb["per_aoi"][i][key].get<double>()));
      }
    }
  }
  c.expect(worst <= 1e-5, "max metric difference " + fmt(worst));
  c.note("max metric difference " + fmt(worst));
  return c.result();
}

// ---- 11 ---------------------------------------------------------------------

Outcome ablation() {
  Check c;
  SceneSpec spec;
  spec.seed = 11;
  spec.n_timesteps = 3;
  auto scene = synthesize_scene(spec);
  ImageTimeSeries lr{scene.hr.aoi_id, {}};
  for (const auto& f : scene.hr.frames) lr.frames.push_back(degrade(f, 8, 2.0, 0.0, 0));
  const auto pairs = make_training_pairs(lr, scene.hr);

  auto run = [&](const std::string& variant) {
    torch::manual_seed(11);
    const auto gcfg = variant_generator(variant, GeneratorConfig::desk());
    Generator gen(gcfg);
    Discriminator disc(gcfg);
    PerceptualNet net(gcfg.bands);
    TrainConfig tc;
    tc.max_steps = 1;
    tc.batch_size = 2;
    tc.seed = 11;
    return train_sr(pairs, gen, disc, net, variant_weights(variant, LossWeights{}), tc).log.at(0);
  };
  const auto ead = run("ead");
  const auto lpips = run("ead-lpips");
  const double lambda2 = variant_weights("ead-lpips", LossWeights{}).lambda2;
  c.expect(variant_weights("ead", LossWeights{}).lambda2 == 0.0, "ead keeps a perceptual weight");
  c.expect(ead.lpips == lpips.lpips && ead.l1 == lpips.l1 && ead.cgan_g == lpips.cgan_g,
           "shared batch gave different terms");
  const double diff = lpips.g_total - ead.g_total;
  const double expected = lambda2 * lpips.lpips;
  c.expect(std::abs(diff - expected) <= 1e-6 * std::max(1.0, expected),
           "objective gap " + fmt(diff, 10) + " vs " + fmt(expected, 10));
  c.note("gap " + fmt(diff, 8) + " = lambda2 * LPIPS " + fmt(expected, 8));
  return c.result();
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "metric oracle suite", 5, metric_oracles},
      {2, "pairing combinatorics", 1, pairing},
      {3, "gradient correctness", 120, gradients},
      {4, "loss identities", 0, loss_identities},
      {5, "single-sample overfit", 600, overfit},
      {6, "patch-inference exactness", 0, patch_inference},
      {7, "collapse correctness", 0, collapse},
      {8, "tracking score sanity", 0, tracking_sanity},
      {9, "end-to-end synthetic ordering", 3600, ordering},
      {10, "determinism", 0, determinism},
      {11, "ablation plumbing", 0, ablation},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  torch::set_num_threads(1);
  int failed = 0;
  for (const auto& crit : all) {
    if (!wanted.empty() && !wanted.count(crit.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = crit.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (crit.budget_s > 0 && secs > crit.budget_s) {
      out.pass = false;
      out.detail += (out.detail.empty() ? "" : "; ") + std::string("over the ") +
                    fmt(crit.budget_s) + " s budget";
    }
    if (!out.pass) ++failed;
    std::cout << (out.pass ? "PASS" : "FAIL") << "  criterion " << std::setw(2) << crit.id << "  "
              << crit.name << "  (" << std::fixed << std::setprecision(1) << secs << " s)"
              << std::defaultfloat;
    if (!out.detail.empty()) std::cout << "  " << out.detail;
    std::cout << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
