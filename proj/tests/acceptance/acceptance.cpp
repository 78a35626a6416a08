// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance            all criteria
//   acceptance 1 4 9      a subset

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include "floodseg/cli.hpp"
#include "floodseg/datagen.hpp"
#include "floodseg/eval.hpp"
#include "floodseg/gradcheck.hpp"
#include "floodseg/labeling.hpp"
#include "floodseg/trainer.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace floodseg;
namespace fs = std::filesystem;

namespace {

constexpr int kSeeds = 5;
constexpr int kSize = 64;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

enum class LabelKind { Truth, RawWeak, ImprovedWeak };

// NDWI weak labels with dilated clouds, river dropout, optional occurrence fusion.
ClassMask weak_label(const SceneBundle& b, double severity, std::uint64_t corrupt_seed, bool improve) {
  ClassMask w = weak_label_from_ndwi(ndwi(b.s2), dilate_cloud_mask(b.cloud));
  w = corrupt_weak_label(w, CorruptMode::RiverDropout, severity, corrupt_seed);
  return improve ? improve_weak_label(w, b.occurrence, 0.5) : w;
}

Dataset corpus(int n, std::uint64_t seed, const char* tag, LabelKind kind = LabelKind::Truth, double severity = 0.6) {
  Dataset d;
  d.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const SceneBundle b = generate_scene(derive_seed(seed, tag, i), kSize);
    const ClassMask label = kind == LabelKind::Truth
                                ? b.truth
                                : weak_label(b, severity, derive_seed(seed, "corrupt", i), kind == LabelKind::ImprovedWeak);
    d.push_back(make_sample(std::string(tag) + std::to_string(i), b.s1, &b.s2, &label));
  }
  return d;
}

TrainConfig student_config(std::uint64_t seed) {
  TrainConfig c;
  c.total_steps = 1000;
  c.lr0 = 0.1;
  c.seed = seed;
  c.model.seed = seed;
  return c;
}

TrainConfig teacher_config(std::uint64_t seed) {
  TrainConfig c = student_config(seed);
  c.total_steps = 500;
  c.lr0 = 0.05;
  c.model.in_channels = 6;
  c.model.skip_strides = {4, 2, 1};
  return c;
}

std::uint64_t run_seed(int sd) { return 100 + static_cast<std::uint64_t>(sd); }

// ECE over every val pixel, pooled.
double pooled_ece(const SegNet& net, const Dataset& data, InputBands bands) {
  std::vector<float> probs;
  std::vector<Code> truth;
  for (const auto& s : data) {
    const Grid<float> p = water_probability(softmax_probs(forward(net, stack_input(s, bands)).logits));
    probs.insert(probs.end(), p.cells().begin(), p.cells().end());
    truth.insert(truth.end(), s.label.cells().begin(), s.label.cells().end());
  }
  const int n = static_cast<int>(probs.size());
  return ece(Grid<float>(n, 1, std::move(probs)), ClassMask(n, 1, std::move(truth)));
}

// ---- criteria ----

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto suites = run_gradcheck();
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string parts;
  for (const auto& s : suites) {
    worst = std::max(worst, s.max_rel_error);
    parts += fmt(" %s=%.2e", s.name.c_str(), s.max_rel_error);
  }
  return {worst <= 1e-3 && secs < 30.0 && suites.size() == 4,
          fmt("gradient suite, 20 seeds 16x16:%s; %.1f s (limits 1e-3, 30 s)", parts.c_str(), secs)};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(2024);
  constexpr int kInstances = 60;
  int bad_conf = 0, bad_iou = 0, bad_edges = 0, bad_morph = 0, bad_otsu = 0;
  for (int t = 0; t < kInstances; ++t) {
    const int w = 1 + static_cast<int>(rng() % 48), h = 1 + static_cast<int>(rng() % 48);
    const int iters = 1 + static_cast<int>(rng() % 3);

    std::vector<ClassMask> preds, truths;
    std::vector<ConfusionCounts> counts;
    const int images = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < images; ++k) {
      truths.push_back(fixture::random_mask(rng, w, h, 0.2));
      preds.push_back(fixture::random_mask(rng, w, h, 0.05));
      const ConfusionCounts got = confusion(preds.back(), truths.back());
      const oracle::Counts want = oracle::confusion(preds.back(), truths.back());
      bad_conf += got.tp != want.tp || got.fp != want.fp || got.fn != want.fn || got.tn != want.tn;
      counts.push_back(got);
    }
    // keep the instance non-degenerate
    truths[0][0] = preds[0][0] = Code::Water;
    counts[0] = confusion(preds[0], truths[0]);
    bad_iou += pooled_iou(counts) != oracle::pooled_iou(preds, truths);

    const ClassMask label = fixture::random_mask(rng, w, h, 0.15);
    const EdgeMaps e = edge_maps(label, iters);
    const oracle::Edges oe = oracle::edge_maps(label, iters);
    bad_edges += !(e.inner == oe.inner && e.outer == oe.outer);

    const BinaryGrid m = fixture::random_binary(rng, w, h, 0.5);
    bad_morph += !(erode(m, iters) == oracle::erode(m, iters) && dilate(m, iters) == oracle::dilate(m, iters));

    const int bins = 2 + static_cast<int>(rng() % 255);
    std::vector<float> v(2 + rng() % 2000);
    std::normal_distribution<float> dark(-18.0F, 2.0F), bright(-8.0F, 2.5F);
    for (auto& x : v) x = (rng() % 3 == 0) ? dark(rng) : bright(rng);
    bad_otsu += otsu_threshold(v, bins) != oracle::otsu_threshold(v, bins);
  }
  const int bad = bad_conf + bad_iou + bad_edges + bad_morph + bad_otsu;
  return {bad == 0, fmt("oracle equivalence, %d instances each: mismatches confusion=%d pooled_iou=%d edge_maps=%d "
                        "erode/dilate=%d otsu=%d",
                        kInstances, bad_conf, bad_iou, bad_edges, bad_morph, bad_otsu)};
}

Outcome label_improvement() {
  std::int64_t dropped = 0, restored = 0, converted_low = 0;
  for (int i = 0; i < 50; ++i) {
    const SceneBundle b = generate_scene(derive_seed(7, "improve", i), kSize);
    const ClassMask weak = weak_label_from_ndwi(ndwi(b.s2), dilate_cloud_mask(b.cloud));
    const ClassMask broken = corrupt_weak_label(weak, CorruptMode::RiverDropout, 0.5, derive_seed(7, "corrupt", i));
    const ClassMask fixed = improve_weak_label(broken, b.occurrence, 0.5);
    for (int r = 0; r < kSize; ++r) {
      for (int c = 0; c < kSize; ++c) {
        const bool lost = b.permanent.at(r, c) && weak.at(r, c) == Code::Water && broken.at(r, c) != Code::Water;
        dropped += lost;
        restored += lost && fixed.at(r, c) == Code::Water;
        converted_low += fixed.at(r, c) != broken.at(r, c) && b.occurrence.at(r, c) <= 0.5F;
      }
    }
  }
  const double share = dropped > 0 ? static_cast<double>(restored) / static_cast<double>(dropped) : 0.0;
  return {dropped > 0 && share >= 0.95 && converted_low == 0,
          fmt("label improvement, 50 scenes, 50%% river dropout: restored %lld/%lld dropped river pixels (%.4f, "
              "need >= 0.95); converted at occurrence <= 0.5: %lld (need 0)",
              static_cast<long long>(restored), static_cast<long long>(dropped), share,
              static_cast<long long>(converted_low))};
}

Outcome teacher_vs_s1() {
  const auto t0 = Clock::now();
  double s1_sum = 0.0, teacher_sum = 0.0;
  std::string per_seed;
  for (int sd = 0; sd < kSeeds; ++sd) {
    const std::uint64_t seed = run_seed(sd);
    const Dataset train = corpus(200, seed, "train"), val = corpus(50, seed, "val"), test = corpus(50, seed, "test");
    const TrainResult s1 = train_supervised(student_config(seed), train, val, InputBands::S1);
    const TrainResult teacher = train_teacher(teacher_config(seed), train, val);
    const double a = evaluate_iou(s1.best, test, InputBands::S1);
    const double b = evaluate_iou(teacher.best, test, InputBands::S1S2);
    per_seed += fmt(" %.3f/%.3f", a, b);
    s1_sum += a;
    teacher_sum += b;
  }
  const double secs = seconds_since(t0);
  const double s1 = s1_sum / kSeeds, teacher = teacher_sum / kSeeds;
  return {teacher - s1 >= 0.02 && secs < 600.0,
          fmt("teacher vs S1-only, 5-seed mean test IoU: S1 %.4f, S1+S2 %.4f, gap %.4f (need >= 0.02); seeds%s; "
              "%.0f s (limit 600 s)",
              s1, teacher, teacher - s1, per_seed.c_str(), secs)};
}

Outcome distillation_ordering() {
  const auto t0 = Clock::now();
  double raw_sum = 0.0, imp_sum = 0.0, dist_sum = 0.0;
  std::string per_seed;
  for (int sd = 0; sd < kSeeds; ++sd) {
    const std::uint64_t seed = run_seed(sd);
    const Dataset hand = corpus(100, seed, "hand"), val = corpus(50, seed, "val"), test = corpus(50, seed, "test");
    const Dataset raw = corpus(200, seed, "weak", LabelKind::RawWeak, 0.6);
    const Dataset imp = corpus(200, seed, "weak", LabelKind::ImprovedWeak, 0.6);
    const TrainConfig c = student_config(seed);
    const TrainResult r = train_supervised(c, raw, val, InputBands::S1);
    const TrainResult i = train_supervised(c, imp, val, InputBands::S1);
    const TrainResult teacher = train_teacher(teacher_config(seed), hand, val);
    const TrainResult d = distill_student(teacher.best, c, hand, raw, val);
    const double a = evaluate_iou(r.best, test, InputBands::S1);
    const double b = evaluate_iou(i.best, test, InputBands::S1);
    const double e = evaluate_iou(d.best, test, InputBands::S1);
    per_seed += fmt(" %.3f/%.3f/%.3f", a, b, e);
    raw_sum += a;
    imp_sum += b;
    dist_sum += e;
  }
  const double secs = seconds_since(t0);
  const double raw = raw_sum / kSeeds, imp = imp_sum / kSeeds, dist = dist_sum / kSeeds;
  return {imp - raw >= 0.01 && dist - imp >= 0.01 && secs < 1200.0,
          fmt("distilled > improved > raw, severity 0.6, 5-seed mean test IoU: raw %.4f, improved %.4f, distilled "
              "%.4f, gaps %.4f %.4f (need >= 0.01 each); seeds%s; %.0f s (limit 1200 s)",
              raw, imp, dist, imp - raw, dist - imp, per_seed.c_str(), secs)};
}

// run_cli with stdout discarded.
int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "floodseg");
  std::fflush(stdout);
  const int saved = ::dup(STDOUT_FILENO);
  const int null = ::open("/dev/null", O_WRONLY);
  ::dup2(null, STDOUT_FILENO);
  ::close(null);
  const int rc = cli::run_cli(args);
  std::fflush(stdout);
  ::dup2(saved, STDOUT_FILENO);
  ::close(saved);
  return rc;
}

std::string kv(const std::string& k, const fs::path& p) { return k + "=" + p.string(); }

Outcome frozen_teacher() {
  // in memory
  const Dataset hand = corpus(8, 1, "hand"), weak = corpus(8, 1, "weak", LabelKind::RawWeak), val = corpus(4, 1, "val");
  TrainConfig tc = teacher_config(1);
  tc.total_steps = 20;
  tc.eval_every = 10;
  const SegNet teacher = train_teacher(tc, hand, val).best;
  const std::uint64_t before = checksum(teacher);
  TrainConfig sc = student_config(1);
  sc.total_steps = 20;
  sc.eval_every = 10;
  const TrainResult student = distill_student(teacher, sc, hand, weak, val);
  const std::uint64_t after = checksum(teacher);

  // on disk, through the distill subcommand
  fixture::TempDir dir("accept6");
  save_checkpoint(teacher, dir / "teacher.ckpt");
  const auto bytes_before = fixture::file_bytes(dir / "teacher.ckpt");
  bool ok = cli({"synth", "--set", kv("out_dir", dir / "hand"), "--set", "n_scenes=4", "--set", "size=32"}) == 0;
  ok = ok && cli({"synth", "--set", kv("out_dir", dir / "weak"), "--set", "n_scenes=4", "--set", "size=32", "--set",
                  "seed=1", "--set", "source=weak_sen1floods11-like"}) == 0;
  ok = ok && cli({"distill", "--set", kv("teacher", dir / "teacher.ckpt"), "--set",
                  kv("source_a", dir / "hand" / "manifest.csv"), "--set", kv("source_b", dir / "weak" / "manifest.csv"),
                  "--set", kv("val_manifest", dir / "hand" / "manifest.csv"), "--set", kv("out_dir", dir / "student"),
                  "--set", "total_steps=4", "--set", "batch=2", "--set", "eval_every=2"}) == 0;
  const bool file_same = fixture::file_bytes(dir / "teacher.ckpt") == bytes_before;
  const bool file_ckpt = checksum(load_checkpoint(dir / "teacher.ckpt")) == before;
  return {before == after && ok && file_same && file_ckpt && !student.history.evals.empty(),
          fmt("frozen teacher: checksum %016llx before, %016llx after Stage 2; checkpoint file unchanged after "
              "distill subcommand: %s",
              static_cast<unsigned long long>(before), static_cast<unsigned long long>(after),
              ok && file_same && file_ckpt ? "yes" : "no")};
}

bool pipeline(const fs::path& root) {
  const auto synth = [&](const char* name, int n, int seed, const char* source) {
    return cli({"synth", "--set", kv("out_dir", root / name), "--set", "n_scenes=" + std::to_string(n), "--set",
                "size=32", "--set", "seed=" + std::to_string(seed), "--set", std::string("source=") + source,
                "--set", std::string("id_prefix=") + name}) == 0;
  };
  const auto m = [&](const char* name) { return root / name / "manifest.csv"; };
  return synth("hand", 6, 11, "handlabel") && synth("weak", 8, 12, "weak_sen1floods11-like") &&
         synth("val", 4, 13, "handlabel") && synth("test", 4, 14, "handlabel") &&
         cli({"weaklabel", "--set", kv("manifest", m("weak")), "--set", kv("out_dir", root / "weaklabel"), "--set",
              "corrupt.mode=river_dropout", "--set", "corrupt.severity=0.6", "--set", "seed=3"}) == 0 &&
         cli({"teacher", "--set", kv("train_manifest", m("hand")), "--set", kv("val_manifest", m("val")), "--set",
              kv("out_dir", root / "teacher"), "--set", "total_steps=60", "--set", "batch=4", "--set", "eval_every=20",
              "--set", "seed=5"}) == 0 &&
         cli({"distill", "--set", kv("teacher", root / "teacher" / "best.ckpt"), "--set", kv("source_a", m("hand")),
              "--set", kv("source_b", m("weaklabel")), "--set", kv("val_manifest", m("val")), "--set",
              kv("out_dir", root / "student"), "--set", "total_steps=60", "--set", "batch=4", "--set", "eval_every=20",
              "--set", "seed=5"}) == 0 &&
         cli({"eval", "--set", kv("manifest", m("test")), "--set", kv("checkpoint", root / "student" / "best.ckpt"),
              "--set", kv("out_dir", root / "eval")}) == 0;
}

Outcome determinism() {
  fixture::TempDir dir("accept7");
  const bool ran = pipeline(dir / "a") && pipeline(dir / "b");
  const char* artifacts[] = {"eval/report.csv",    "teacher/best.ckpt", "teacher/last.ckpt",
                             "student/best.ckpt", "student/last.ckpt", "weaklabel/manifest.csv"};
  int same = 0;
  for (const char* a : artifacts) {
    const auto x = fixture::file_bytes(dir / "a" / a), y = fixture::file_bytes(dir / "b" / a);
    same += !x.empty() && x == y;
  }
  const int n = static_cast<int>(std::size(artifacts));
  return {ran && same == n,
          fmt("determinism, synth->weaklabel->teacher->distill->eval twice: pipeline %s, %d/%d artifacts "
              "bit-identical (report.csv, checkpoints, weak manifest)",
              ran ? "ok" : "failed", same, n)};
}

Outcome edge_weighting() {
  double weighted = 0.0, plain = 0.0, tversky = 0.0, ece_w = 0.0, ece_p = 0.0, ece_t = 0.0;
  std::string per_seed;
  for (int sd = 0; sd < kSeeds; ++sd) {
    const std::uint64_t seed = run_seed(sd);
    const Dataset train = corpus(200, seed, "train"), val = corpus(50, seed, "val");
    const TrainConfig c = student_config(seed);
    TrainConfig u = c;
    u.edge_weighting = false;
    TrainConfig t = c;
    t.loss = LossKind::TverskyFocal;
    t.lr0 = 0.05;
    const TrainResult a = train_supervised(c, train, val, InputBands::S1);
    const TrainResult b = train_supervised(u, train, val, InputBands::S1);
    const TrainResult v = train_supervised(t, train, val, InputBands::S1);
    per_seed += fmt(" %.3f/%.3f", a.history.best_val_iou, b.history.best_val_iou);
    weighted += a.history.best_val_iou / kSeeds;
    plain += b.history.best_val_iou / kSeeds;
    tversky += v.history.best_val_iou / kSeeds;
    ece_w += pooled_ece(a.best, val, InputBands::S1) / kSeeds;
    ece_p += pooled_ece(b.best, val, InputBands::S1) / kSeeds;
    ece_t += pooled_ece(v.best, val, InputBands::S1) / kSeeds;
  }
  return {weighted - plain >= 0.01,
          fmt("edge-weighted vs plain CE, 5-seed mean val IoU: weighted %.4f, plain %.4f, gap %.4f (need >= 0.01); "
              "seeds%s; reported only: tversky-focal %.4f, ECE weighted %.4f plain %.4f tversky %.4f",
              weighted, plain, weighted - plain, per_seed.c_str(), tversky, ece_w, ece_p, ece_t)};
}

Outcome protocol_10m() {
  SceneParams p;
  p.resolution_m = 10.0F;
  const SceneBundle b = generate_scene(9, 512, p);
  SegNetConfig cfg;
  cfg.seed = 9;
  const Inference10m r = infer_10m(SegNet(cfg), b.s1);
  const std::size_t n = r.probs.plane_size();
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const float d = r.probs.data[i], w = r.probs.data[n + i];
    off += !(d >= 0.0F && w >= 0.0F && d + w == 1.0F);
  }
  const bool shape = r.probs.channels == 2 && r.probs.width == 512 && r.probs.height == 512;
  return {r.internal_width == 320 && r.internal_height == 320 && shape && off == 0,
          fmt("10 m protocol: 512x512 @10 m processed at %dx%d, output %dx%dx%d, %zu pixels not summing to 1",
              r.internal_width, r.internal_height, r.probs.channels, r.probs.height, r.probs.width, off)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria = {
      gradient_suite, oracle_equivalence, label_improvement, teacher_vs_s1,  distillation_ordering,
      frozen_teacher, determinism,        edge_weighting,    protocol_10m,
  };
  std::vector<int> pick;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "unknown criterion '%s'\n", argv[i]);
      return 2;
    }
    pick.push_back(k);
  }
  if (pick.empty()) {
    for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) pick.push_back(k);
  }

  int failed = 0;
  for (int k : pick) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(k - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %d: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", k, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
