#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "floodseg/errors.hpp"
#include "floodseg/eval.hpp"
#include "floodseg/gradcheck.hpp"
#include "floodseg/labeling.hpp"
#include "floodseg/raster.hpp"

namespace floodseg::cli {

namespace fs = std::filesystem;

namespace {

fs::path required_path(const RunSpec& spec, const std::string& key) {
  if (!spec.is_set(key)) throw ConfigError("key '" + key + "' is required");
  return spec.path(key);
}

int to_int(const RunSpec& spec, const std::string& key) { return static_cast<int>(spec.integer(key)); }

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

std::string scene_name(const std::string& prefix, int index) {
  std::ostringstream s;
  s << prefix << '_' << std::setw(4) << std::setfill('0') << index;
  return s.str();
}

Dataset load_labelled(const fs::path& manifest, bool with_s2) {
  Dataset d = load_dataset(read_manifest(manifest), with_s2, true);
  if (d.empty()) throw SchemaError("manifest '" + manifest.string() + "' has no rows");
  return d;
}

void write_run(const RunSpec& spec, const fs::path& dir, const TrainResult& result) {
  write_text(dir / "config.txt", spec.echo());
  write_history_csv(result.history, dir / "history.csv");
  save_checkpoint(result.best, dir / "best.ckpt");
  save_checkpoint(result.last, dir / "last.ckpt");
  std::printf("best_step=%d best_val_iou=%.6f\n", result.history.best_step, result.history.best_val_iou);
}

// Pixels of all images concatenated into one row, for pooled ECE.
struct PooledPixels {
  std::vector<float> water;
  std::vector<Code> truth;

  void add(const Grid<float>& probs, const ClassMask& label) {
    water.insert(water.end(), probs.cells().begin(), probs.cells().end());
    truth.insert(truth.end(), label.cells().begin(), label.cells().end());
  }
  double ece(int bins) const {
    const int n = static_cast<int>(truth.size());
    if (n == 0) throw DegenerateInputError("eval: no pixels");
    Grid<float> p(n, 1);
    ClassMask t(n, 1);
    std::copy(water.begin(), water.end(), p.cells().begin());
    std::copy(truth.begin(), truth.end(), t.cells().begin());
    return floodseg::ece(p, t, bins);
  }
};

}  // namespace

SceneParams scene_params(const RunSpec& spec) {
  SceneParams p;
  p.water_fraction = spec.real("scene.water_fraction");
  p.river_width = spec.real("scene.river_width");
  p.max_flood_lobes = to_int(spec, "scene.max_flood_lobes");
  p.shallow_fraction = spec.real("scene.shallow_fraction");
  p.cloud_cover = spec.real("scene.cloud_cover");
  p.cloud_shadow_shift = to_int(spec, "scene.cloud_shadow_shift");
  p.dark_patches = to_int(spec, "scene.dark_patches");
  p.speckle_looks = spec.real("scene.speckle_looks");
  p.noise_free = spec.flag("scene.noise_free");
  p.resolution_m = static_cast<float>(spec.real("scene.resolution_m"));
  p.validate();
  return p;
}

TrainConfig train_config(const RunSpec& spec) {
  TrainConfig c;
  c.seed = spec.u64("seed");
  c.lr0 = spec.real("lr0");
  c.weight_decay = spec.real("weight_decay");
  c.momentum = spec.real("momentum");
  c.total_steps = to_int(spec, "total_steps");
  c.lr_power = spec.real("lr_power");
  c.batch = to_int(spec, "batch");
  c.eval_every = to_int(spec, "eval_every");
  c.model.base_width = to_int(spec, "model.base_width");
  c.model.skip_strides = spec.int_list("model.skip_strides");
  c.model.seed = c.seed;
  c.augment.flip_h = spec.flag("augment.flip_h");
  c.augment.flip_v = spec.flag("augment.flip_v");
  c.augment.crop_min = spec.real("augment.crop_min");
  c.augment.crop_max = spec.real("augment.crop_max");
  c.augment.jitter_sigma = spec.real("augment.jitter_sigma");
  if (spec.has_key("loss")) {
    c.loss = parse_loss_kind(spec.str("loss"));
    c.edge_weighting = spec.flag("edge_weighting");
    c.w_inner = static_cast<float>(spec.real("w_inner"));
    c.w_outer = static_cast<float>(spec.real("w_outer"));
    c.edge_iterations = to_int(spec, "edge_iterations");
    c.tversky.alpha = spec.real("tversky.alpha");
    c.tversky.beta = spec.real("tversky.beta");
    c.tversky.gamma = spec.real("tversky.gamma");
  }
  return c;
}

void cmd_synth(const RunSpec& spec) {
  const SceneParams params = scene_params(spec);
  const fs::path dir = required_path(spec, "out_dir");
  const int n = to_int(spec, "n_scenes");
  const int size = to_int(spec, "size");
  if (n < 0) throw ConfigError("key 'n_scenes' must be >= 0");
  if (size < 16) throw ConfigError("key 'size' must be >= 16");
  const std::uint64_t seed = spec.u64("seed");
  const Source source = parse_source(spec.str("source"));
  const Timestamp t0 = parse_timestamp(spec.str("start_time"));
  make_dir(dir);

  Manifest m;
  for (int i = 0; i < n; ++i) {
    const std::string id = scene_name(spec.str("id_prefix"), i);
    const SceneBundle b = generate_scene(derive_seed(seed, "scene", static_cast<std::uint64_t>(i)), size, params);
    SampleRecord r;
    r.scene_id = id;
    r.source = source;
    r.s1_path = dir / (id + ".s1.fsr");
    r.s2_path = dir / (id + ".s2.fsr");
    r.label_path = dir / (id + ".label.fsm");
    r.occurrence_path = dir / (id + ".occ.fsr");
    r.timestamp = t0 + std::chrono::hours(i);
    r.cloud_fraction = cloud_fraction(b.cloud);
    write_raster(b.s1, r.s1_path);
    write_raster(b.s2, r.s2_path);
    write_mask(b.cloud, cloud_mask_path(r.s2_path));
    write_mask(b.truth, r.label_path);
    write_raster(b.occurrence.raster(), r.occurrence_path);
    m.rows.push_back(std::move(r));
  }
  write_manifest(m, dir / "manifest.csv");
  std::printf("wrote %d scenes to %s\n", n, dir.string().c_str());
}

void cmd_weaklabel(const RunSpec& spec) {
  const Manifest in = read_manifest(required_path(spec, "manifest"));
  const fs::path dir = required_path(spec, "out_dir");
  const int radius = to_int(spec, "cloud_radius");
  const bool improve = spec.flag("improve");
  const double threshold = spec.real("occ_threshold");
  const std::string mode = spec.str("corrupt.mode");
  const double severity = spec.real("corrupt.severity");
  const std::uint64_t seed = spec.u64("seed");
  const bool corrupt = mode != "none";
  const CorruptMode corrupt_mode = corrupt ? parse_corrupt_mode(mode) : CorruptMode::RiverDropout;
  make_dir(dir);

  Manifest out = in;
  std::int64_t water = 0;
  for (auto& r : out.rows) {
    const Raster s2 = read_raster(r.s2_path);
    const ClassMask cloud = dilate_cloud_mask(read_mask(cloud_mask_path(r.s2_path)), radius);
    ClassMask label = weak_label_from_ndwi(ndwi(s2), cloud);
    if (corrupt) label = corrupt_weak_label(label, corrupt_mode, severity, derive_seed(seed, r.scene_id));
    if (improve) {
      if (r.occurrence_path.empty()) throw SchemaError("scene '" + r.scene_id + "' has no occurrence map");
      const OccurrenceMap occ(read_raster(r.occurrence_path));
      label = improve_weak_label(label, occ.resampled_to(label.width(), label.height()), threshold);
    }
    for (Code c : label.cells()) water += c == Code::Water;
    r.label_path = dir / (r.scene_id + ".weak.fsm");
    write_mask(label, r.label_path);
  }
  write_manifest(out, dir / "manifest.csv");
  std::printf("labelled %zu scenes, %lld water pixels\n", out.rows.size(), static_cast<long long>(water));
}

void cmd_otsu(const RunSpec& spec) {
  const Manifest in = read_manifest(required_path(spec, "manifest"));
  const fs::path dir = required_path(spec, "out_dir");
  const std::string band = spec.str("band");
  const int bins = to_int(spec, "bins");
  make_dir(dir);
  Manifest out = in;
  for (auto& r : out.rows) {
    const Raster s1 = read_raster(r.s1_path);
    const double t = otsu_threshold(s1.band(band), bins);
    ClassMask mask(s1.width(), s1.height());
    const auto values = s1.band(band);
    for (std::size_t i = 0; i < values.size(); ++i) {
      mask[i] = !std::isfinite(values[i]) ? Code::Invalid : (values[i] < t ? Code::Water : Code::Dry);
    }
    r.label_path = dir / (r.scene_id + ".otsu.fsm");
    write_mask(mask, r.label_path);
  }
  write_manifest(out, dir / "manifest.csv");
  std::printf("thresholded %zu scenes\n", out.rows.size());
}

void cmd_train(const RunSpec& spec) {
  TrainConfig cfg = train_config(spec);
  const std::string band_name = spec.str("bands");
  if (band_name != "s1" && band_name != "s1s2") throw ConfigError("key 'bands' must be s1 or s1s2");
  const InputBands bands = band_name == "s1" ? InputBands::S1 : InputBands::S1S2;
  cfg.model.in_channels = bands == InputBands::S1 ? 2 : 6;
  cfg.validate();
  const Dataset train = load_labelled(required_path(spec, "train_manifest"), bands == InputBands::S1S2);
  const Dataset val = load_labelled(required_path(spec, "val_manifest"), bands == InputBands::S1S2);
  const fs::path dir = required_path(spec, "out_dir");
  make_dir(dir);

  if (spec.is_set("lr_grid") || spec.is_set("wd_grid")) {
    std::vector<double> lrs = spec.real_list("lr_grid");
    std::vector<double> wds = spec.real_list("wd_grid");
    if (lrs.empty()) lrs = {cfg.lr0};
    if (wds.empty()) wds = {cfg.weight_decay};
    const GridSearchResult g = grid_search(lrs, wds, cfg, train, val, bands);
    std::ostringstream csv;
    csv << "lr0,weight_decay,best_val_iou\n";
    for (const auto& t : g.trials) {
      char line[96];
      std::snprintf(line, sizeof line, "%.9g,%.9g,%.9g\n", t.lr0, t.weight_decay, t.best_val_iou);
      csv << line;
    }
    write_text(dir / "grid.csv", csv.str());
    std::printf("selected lr0=%g weight_decay=%g\n", g.best_config.lr0, g.best_config.weight_decay);
    write_run(spec, dir, g.best);
    return;
  }
  write_run(spec, dir, train_supervised(cfg, train, val, bands));
}

void cmd_teacher(const RunSpec& spec) {
  TrainConfig cfg = train_config(spec);
  cfg.model.in_channels = 6;
  cfg.validate();
  const Dataset train = load_labelled(required_path(spec, "train_manifest"), true);
  const Dataset val = load_labelled(required_path(spec, "val_manifest"), true);
  const fs::path dir = required_path(spec, "out_dir");
  make_dir(dir);
  write_run(spec, dir, train_teacher(cfg, train, val));
}

void cmd_distill(const RunSpec& spec) {
  TrainConfig cfg = train_config(spec);
  cfg.model.in_channels = 2;
  cfg.validate();
  const SegNet teacher = load_checkpoint(required_path(spec, "teacher"));
  const Dataset a = load_dataset(read_manifest(required_path(spec, "source_a"), false), true, false);
  const Dataset b = load_dataset(read_manifest(required_path(spec, "source_b"), false), true, false);
  const Dataset val = load_labelled(required_path(spec, "val_manifest"), false);
  const fs::path dir = required_path(spec, "out_dir");
  make_dir(dir);
  write_run(spec, dir, distill_student(teacher, cfg, a, b, val));
}

void cmd_eval(const RunSpec& spec) {
  const Manifest m = read_manifest(required_path(spec, "manifest"));
  const bool use_model = spec.is_set("checkpoint");
  if (use_model == spec.is_set("pred_manifest")) {
    throw ConfigError("exactly one of keys 'checkpoint' and 'pred_manifest' must be set");
  }
  const std::string protocol = spec.str("protocol");
  if (protocol != "native" && protocol != "10m") throw ConfigError("key 'protocol' must be native or 10m");
  const int bins = to_int(spec, "bins");

  std::vector<ConfusionCounts> counts;
  PooledPixels pixels;
  if (use_model) {
    const SegNet net = load_checkpoint(spec.path("checkpoint"));
    const int ch = net.config().in_channels;
    if (ch != 2 && ch != 6) throw ConfigError("checkpoint must have 2 or 6 input channels");
    const InputBands bands = ch == 6 ? InputBands::S1S2 : InputBands::S1;
    if (protocol == "10m" && bands != InputBands::S1) throw ConfigError("the 10m protocol takes S1-only models");
    for (const auto& r : m.rows) {
      Tensor probs;
      ClassMask truth;
      if (protocol == "10m") {
        truth = read_mask(r.label_path);
        probs = infer_10m(net, read_raster(r.s1_path), static_cast<float>(spec.real("model_resolution_m"))).probs;
      } else {
        const Sample s = load_sample(r, bands == InputBands::S1S2, true);
        probs = softmax_probs(forward(net, stack_input(s, bands)).logits);
        truth = s.label;
      }
      counts.push_back(confusion(probs_to_mask(probs), truth));
      pixels.add(water_probability(probs), truth);
    }
  } else {
    std::unordered_map<std::string, fs::path> preds;
    for (const auto& r : read_manifest(spec.path("pred_manifest")).rows) preds[r.scene_id] = r.label_path;
    for (const auto& r : m.rows) {
      auto it = preds.find(r.scene_id);
      if (it == preds.end()) throw SchemaError("no prediction for scene '" + r.scene_id + "'");
      const ClassMask pred = read_mask(it->second);
      const ClassMask truth = read_mask(r.label_path);
      counts.push_back(confusion(pred, truth));
      Grid<float> hard(pred.width(), pred.height());
      for (std::size_t i = 0; i < pred.size(); ++i) hard[i] = pred[i] == Code::Water ? 1.0F : 0.0F;
      pixels.add(hard, truth);
    }
  }

  ConfusionCounts total;
  for (const auto& c : counts) total += c;
  const double iou = pooled_iou(counts);
  const double e = pixels.ece(bins);

  const fs::path dir = required_path(spec, "out_dir");
  make_dir(dir);
  write_text(dir / "config.txt", spec.echo());
  const fs::path report = dir / spec.str("report");
  const bool append = spec.flag("append") && fs::exists(report);
  std::ofstream out(report, append ? std::ios::app : std::ios::trunc);
  if (!append) out << "split,n_images,tp,fp,fn,tn,iou,ece\n";
  char line[256];
  std::snprintf(line, sizeof line, "%s,%zu,%lld,%lld,%lld,%lld,%.9g,%.9g\n", spec.str("split").c_str(),
                m.rows.size(), static_cast<long long>(total.tp), static_cast<long long>(total.fp),
                static_cast<long long>(total.fn), static_cast<long long>(total.tn), iou, e);
  out << line;
  if (!out) throw IoError("cannot write '" + report.string() + "'");
  std::printf("%s iou=%.6f ece=%.6f\n", spec.str("split").c_str(), iou, e);
}

void cmd_render(const RunSpec& spec) {
  const fs::path output = required_path(spec, "output");
  if (spec.is_set("checkpoint")) {
    const SegNet net = load_checkpoint(spec.path("checkpoint"));
    const Raster s1 = read_raster(required_path(spec, "s1"));
    const bool stacked = net.config().in_channels == 6;
    std::optional<Raster> s2;
    if (stacked) s2 = read_raster(required_path(spec, "s2"));
    const Sample s = make_sample("render", s1, s2 ? &*s2 : nullptr, nullptr);
    const Tensor probs =
        softmax_probs(forward(net, stack_input(s, stacked ? InputBands::S1S2 : InputBands::S1)).logits);
    const std::string mode = spec.str("mode");
    if (mode == "mask") {
      render_png(probs_to_mask(probs), output);
    } else if (mode == "probs") {
      render_png(water_probability(probs), output);
    } else {
      throw ConfigError("key 'mode' must be mask or probs");
    }
    return;
  }
  const fs::path input = required_path(spec, "input");
  if (input.extension() == ".fsm") {
    render_png(read_mask(input), output);
  } else {
    const Raster r = read_raster(input);
    Grid<float> g(r.width(), r.height());
    const auto band = r.band(std::size_t{0});
    std::copy(band.begin(), band.end(), g.cells().begin());
    render_png(g, output);
  }
}

bool cmd_gradcheck(const RunSpec& spec) {
  GradcheckOptions opt;
  opt.seeds = to_int(spec, "seeds");
  opt.size = to_int(spec, "size");
  opt.base_width = to_int(spec, "base_width");
  opt.samples_per_tensor = to_int(spec, "samples_per_tensor");
  opt.eps = spec.real("eps");
  opt.seed = spec.u64("seed");
  if (opt.seeds < 1 || opt.size < 16 || opt.size % 16 != 0) {
    throw ConfigError("keys 'seeds' must be >= 1 and 'size' a positive multiple of 16");
  }
  const double tol = spec.real("tolerance");
  const auto suites = run_gradcheck(opt);
  bool ok = true;
  std::ostringstream csv;
  csv << "suite,max_rel_error,checked,skipped_kinks\n";
  for (const auto& s : suites) {
    const bool pass = s.max_rel_error <= tol && s.checked > 0;
    ok = ok && pass;
    std::printf("%-14s max_rel_error=%.3e checked=%ld skipped=%ld %s\n", s.name.c_str(), s.max_rel_error,
                s.checked, s.skipped_kinks, pass ? "ok" : "FAIL");
    char line[160];
    std::snprintf(line, sizeof line, "%s,%.9g,%ld,%ld\n", s.name.c_str(), s.max_rel_error, s.checked,
                  s.skipped_kinks);
    csv << line;
  }
  if (spec.is_set("out_dir")) {
    make_dir(spec.path("out_dir"));
    write_text(spec.path("out_dir") / "gradcheck.csv", csv.str());
  }
  return ok;
}

}  // namespace floodseg::cli
