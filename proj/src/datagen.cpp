#include "floodseg/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <deque>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace floodseg {

// ---- weak-label corruption ----

CorruptMode parse_corrupt_mode(const std::string& name) {
  if (name == "river_dropout") return CorruptMode::RiverDropout;
  if (name == "overflood") return CorruptMode::Overflood;
  if (name == "speckle_noise") return CorruptMode::SpeckleNoise;
  throw ConfigError("unknown corruption mode '" + name + "'");
}

ClassMask corrupt_weak_label(const ClassMask& label, CorruptMode mode, double severity, std::uint64_t seed) {
  if (!(severity >= 0.0 && severity <= 1.0)) throw ConfigError("severity must be in [0, 1]");
  ClassMask out = label;
  if (severity == 0.0) return out;
  Rng rng(derive_seed(seed, "corrupt"));
  const int w = label.width();
  const int h = label.height();

  switch (mode) {
    case CorruptMode::RiverDropout: {
      std::vector<std::size_t> water;
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] == Code::Water) water.push_back(i);
      }
      const auto target = static_cast<std::size_t>(std::llround(severity * static_cast<double>(water.size())));
      std::size_t removed = 0;
      std::deque<std::size_t> queue;
      while (removed < target) {
        if (queue.empty()) {
          // Restart the flood from a random water pixel still present.
          std::erase_if(water, [&](std::size_t i) { return out[i] != Code::Water; });
          const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, water.size() - 1)(rng);
          out[water[pick]] = Code::Dry;
          ++removed;
          queue.push_back(water[pick]);
          continue;
        }
        const std::size_t i = queue.front();
        queue.pop_front();
        const int r = static_cast<int>(i / static_cast<std::size_t>(w));
        const int c = static_cast<int>(i % static_cast<std::size_t>(w));
        const int dr[] = {-1, 1, 0, 0};
        const int dc[] = {0, 0, -1, 1};
        for (int k = 0; k < 4 && removed < target; ++k) {
          const int rr = r + dr[k];
          const int cc = c + dc[k];
          if (rr < 0 || rr >= h || cc < 0 || cc >= w || out.at(rr, cc) != Code::Water) continue;
          out.at(rr, cc) = Code::Dry;
          ++removed;
          queue.push_back(static_cast<std::size_t>(rr) * w + cc);
        }
      }
      break;
    }
    case CorruptMode::Overflood: {
      const int iterations = static_cast<int>(std::lround(10.0 * severity));
      const BinaryGrid grown = dilate(water_of(label), iterations);
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] == Code::Dry && grown[i] != 0) out[i] = Code::Water;
      }
      break;
    }
    case CorruptMode::SpeckleNoise: {
      std::bernoulli_distribution flip(severity);
      for (auto& c : out.cells()) {
        const bool f = flip(rng);
        if (is_ignored(c) || !f) continue;
        c = c == Code::Water ? Code::Dry : Code::Water;
      }
      break;
    }
  }
  return out;
}

// ---- timestamps and sources ----

Timestamp parse_timestamp(const std::string& s) {
  std::tm tm{};
  std::istringstream in(s);
  in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
  if (in.fail()) throw FormatError("bad ISO-8601 timestamp '" + s + "'");
  std::string rest;
  in >> rest;
  if (rest != "Z" && !rest.empty() && rest != "+00:00") {
    throw FormatError("timestamp must be UTC: '" + s + "'");
  }
  const std::time_t t = timegm(&tm);
  return Timestamp(std::chrono::seconds(t));
}

std::string format_timestamp(Timestamp t) {
  const std::time_t tt = t.time_since_epoch().count();
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

Source parse_source(const std::string& name) {
  if (name == "handlabel") return Source::HandLabel;
  if (name == "weak_sen1floods11-like") return Source::WeakSen1Floods11;
  if (name == "weak_floods208-like") return Source::WeakFloods208;
  throw FormatError("unknown manifest source '" + name + "'");
}

std::string source_name(Source s) {
  switch (s) {
    case Source::HandLabel: return "handlabel";
    case Source::WeakSen1Floods11: return "weak_sen1floods11-like";
    case Source::WeakFloods208: return "weak_floods208-like";
  }
  return "handlabel";
}

std::filesystem::path cloud_mask_path(const std::filesystem::path& s2_path) {
  auto p = s2_path;
  p.replace_extension(".cloud.fsm");
  return p;
}

// ---- manifest CSV ----

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (quoted) throw FormatError("unterminated quote in manifest line");
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  return out + "\"";
}

std::string relative_to(const std::filesystem::path& p, const std::filesystem::path& dir) {
  if (p.empty()) return {};
  const auto abs_p = std::filesystem::absolute(p).lexically_normal();
  const auto rel = abs_p.lexically_relative(std::filesystem::absolute(dir).lexically_normal());
  return rel.empty() ? abs_p.generic_string() : rel.generic_string();
}

}  // namespace

Manifest read_manifest(const std::filesystem::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  const auto dir = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw FormatError("manifest '" + path.string() + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) throw FormatError("manifest header mismatch in '" + path.string() + "'");
  Manifest m;
  std::unordered_set<std::string> ids;
  int line_no = 1;
  auto resolve = [&](const std::string& s) {
    std::filesystem::path p(s);
    if (p.empty() || p.is_absolute()) return p;
    return (dir / p).lexically_normal();
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) {
      throw FormatError("manifest line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                        " fields, expected 8");
    }
    SampleRecord r;
    r.scene_id = f[0];
    if (r.scene_id.empty() || !ids.insert(r.scene_id).second) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": missing or duplicate scene_id '" +
                        r.scene_id + "'");
    }
    r.source = parse_source(f[1]);
    r.s1_path = resolve(f[2]);
    r.s2_path = resolve(f[3]);
    r.label_path = resolve(f[4]);
    r.occurrence_path = resolve(f[5]);
    r.timestamp = parse_timestamp(f[6]);
    try {
      std::size_t used = 0;
      r.cloud_fraction = std::stod(f[7], &used);
      if (used != f[7].size()) throw std::invalid_argument(f[7]);
    } catch (const std::exception&) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": bad cloud_fraction '" + f[7] + "'");
    }
    if (!(r.cloud_fraction >= 0.0 && r.cloud_fraction <= 1.0)) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": cloud_fraction outside [0, 1]");
    }
    if (check_files) {
      for (const auto* p : {&r.s1_path, &r.s2_path, &r.label_path, &r.occurrence_path}) {
        if (!p->empty() && !std::filesystem::exists(*p)) throw IoError("manifest references missing file '" + p->string() + "'");
      }
    }
    m.rows.push_back(std::move(r));
  }
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  const auto dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << kManifestHeader << '\n';
  std::ostringstream cf;
  for (const auto& r : manifest.rows) {
    cf.str("");
    cf << std::setprecision(6) << r.cloud_fraction;
    out << csv_field(r.scene_id) << ',' << source_name(r.source) << ','
        << csv_field(relative_to(r.s1_path, dir)) << ',' << csv_field(relative_to(r.s2_path, dir)) << ','
        << csv_field(relative_to(r.label_path, dir)) << ',' << csv_field(relative_to(r.occurrence_path, dir))
        << ',' << format_timestamp(r.timestamp) << ',' << cf.str() << '\n';
  }
  if (!out) throw IoError("write failed for manifest '" + path.string() + "'");
}

// ---- pairing ----

std::optional<std::size_t> pair_filter(Timestamp s1_time, std::span<const PairCandidate> candidates,
                                       std::chrono::seconds max_gap, double max_cloud) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const auto gap = std::chrono::abs(c.timestamp - s1_time);
    if (gap > max_gap || !(c.cloud_fraction <= max_cloud)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = candidates[*best];
    const auto best_gap = std::chrono::abs(b.timestamp - s1_time);
    if (gap < best_gap || (gap == best_gap && c.timestamp < b.timestamp)) best = i;
  }
  return best;
}

// ---- balanced batching ----

BalancedSampler::BalancedSampler(std::size_t size_a, std::size_t size_b, int batch, std::uint64_t seed) {
  if (size_a == 0 || size_b == 0) throw ConfigError("balanced batches need two non-empty sources");
  if (batch < 2 || batch % 2 != 0) throw ConfigError("balanced batch size must be even and >= 2");
  half_ = batch / 2;
  a_.size = size_a;
  a_.seed = derive_seed(seed, "source_a");
  b_.size = size_b;
  b_.seed = derive_seed(seed, "source_b");
}

std::size_t BalancedSampler::Cursor::draw() {
  if (order.empty() || pos == order.size()) {
    order.resize(size);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "epoch", epoch++));
    std::shuffle(order.begin(), order.end(), rng);
    pos = 0;
  }
  return order[pos++];
}

BalancedSampler::Batch BalancedSampler::next() {
  Batch b;
  for (int i = 0; i < half_; ++i) b.a.push_back(a_.draw());
  for (int i = 0; i < half_; ++i) b.b.push_back(b_.draw());
  return b;
}

std::size_t BalancedSampler::batches_per_epoch() const noexcept {
  const std::size_t larger = std::max(a_.size, b_.size);
  return (larger + static_cast<std::size_t>(half_) - 1) / static_cast<std::size_t>(half_);
}

// ---- augmentation ----

void AugmentConfig::validate() const {
  if (!(crop_min > 0.0 && crop_min <= crop_max && crop_max <= 1.0)) {
    throw ConfigError("augment crop scale range must satisfy 0 < min <= max <= 1");
  }
  if (!(jitter_sigma >= 0.0)) throw ConfigError("augment jitter sigma must be >= 0");
}

bool AugmentPlan::is_identity_geometry() const noexcept {
  return !flip_h && !flip_v && crop_x0 == 0.0 && crop_y0 == 0.0 && crop_w == width && crop_h == height;
}

AugmentPlan sample_augment_plan(const AugmentConfig& config, std::uint64_t seed, int width, int height) {
  config.validate();
  Rng rng(derive_seed(seed, "augment"));
  AugmentPlan p;
  p.width = width;
  p.height = height;
  // Fixed draw order regardless of which options are on.
  const double u_flip_h = uniform01(rng);
  const double u_flip_v = uniform01(rng);
  const double u_sx = uniform01(rng);
  const double u_sy = uniform01(rng);
  const double u_x0 = uniform01(rng);
  const double u_y0 = uniform01(rng);
  p.flip_h = config.flip_h && u_flip_h < 0.5;
  p.flip_v = config.flip_v && u_flip_v < 0.5;
  const double sx = config.crop_min + (config.crop_max - config.crop_min) * u_sx;
  const double sy = config.crop_min + (config.crop_max - config.crop_min) * u_sy;
  p.crop_w = sx >= 1.0 ? width : sx * width;
  p.crop_h = sy >= 1.0 ? height : sy * height;
  p.crop_x0 = (width - p.crop_w) * u_x0;
  p.crop_y0 = (height - p.crop_h) * u_y0;
  p.jitter_sigma = config.jitter_sigma;
  p.jitter_seed = derive_seed(seed, "jitter");
  return p;
}

namespace detail {

namespace {
int unflip(const AugmentPlan& plan, int out, bool horizontal) {
  const bool flip = horizontal ? plan.flip_h : plan.flip_v;
  const int n = horizontal ? plan.width : plan.height;
  return flip ? n - 1 - out : out;
}
}  // namespace

int geometry_source_nearest(const AugmentPlan& plan, int out, bool horizontal) {
  const int o = unflip(plan, out, horizontal);
  const int n = horizontal ? plan.width : plan.height;
  const double x0 = horizontal ? plan.crop_x0 : plan.crop_y0;
  const double len = horizontal ? plan.crop_w : plan.crop_h;
  const int i = static_cast<int>(std::floor(x0 + (o + 0.5) * len / n));
  return std::clamp(i, 0, n - 1);
}

struct Tap {
  int i0;
  int i1;
  float t;
};

std::vector<Tap> geometry_taps(const AugmentPlan& plan, bool horizontal) {
  const int n = horizontal ? plan.width : plan.height;
  const double x0 = horizontal ? plan.crop_x0 : plan.crop_y0;
  const double len = horizontal ? plan.crop_w : plan.crop_h;
  std::vector<Tap> taps(n);
  for (int out = 0; out < n; ++out) {
    const int o = unflip(plan, out, horizontal);
    const double src = std::clamp(x0 + (o + 0.5) * len / n - 0.5, 0.0, static_cast<double>(n - 1));
    const int i0 = static_cast<int>(std::floor(src));
    taps[out] = {i0, std::min(i0 + 1, n - 1), static_cast<float>(src - i0)};
  }
  return taps;
}

}  // namespace detail

Tensor apply_geometry(const Tensor& x, const AugmentPlan& plan) {
  if (x.width != plan.width || x.height != plan.height) throw SchemaError("augment plan drawn for another size");
  if (plan.is_identity_geometry()) return x;
  const auto xs = detail::geometry_taps(plan, true);
  const auto ys = detail::geometry_taps(plan, false);
  Tensor out(x.channels, x.height, x.width);
  for (int c = 0; c < x.channels; ++c) {
    auto src = x.plane(c);
    auto dst = out.plane(c);
    for (int r = 0; r < x.height; ++r) {
      const float* row0 = src.data() + static_cast<std::size_t>(ys[r].i0) * x.width;
      const float* row1 = src.data() + static_cast<std::size_t>(ys[r].i1) * x.width;
      for (int col = 0; col < x.width; ++col) {
        const auto& t = xs[col];
        const float top = row0[t.i0] + t.t * (row0[t.i1] - row0[t.i0]);
        const float bottom = row1[t.i0] + t.t * (row1[t.i1] - row1[t.i0]);
        dst[static_cast<std::size_t>(r) * x.width + col] = top + ys[r].t * (bottom - top);
      }
    }
  }
  return out;
}

void apply_jitter(Tensor& x, const AugmentPlan& plan) {
  if (plan.jitter_sigma <= 0.0) return;
  Rng rng(plan.jitter_seed);
  std::normal_distribution<double> dist(0.0, plan.jitter_sigma);
  for (int c = 0; c < x.channels; ++c) {
    const auto offset = static_cast<float>(dist(rng));
    for (float& v : x.plane(c)) v = std::clamp(v + offset, 0.0F, 1.0F);
  }
}

AugmentedView augment(const std::vector<Raster>& rasters, const ClassMask& mask, const AugmentConfig& config,
                      std::uint64_t seed) {
  const AugmentPlan plan = sample_augment_plan(config, seed, mask.width(), mask.height());
  AugmentedView out;
  out.mask = apply_geometry(mask, plan);
  std::uint64_t band_index = 0;
  for (const auto& r : rasters) {
    if (!mask.same_shape(r.width(), r.height())) throw SchemaError("augment: raster and mask shapes differ");
    Tensor t(static_cast<int>(r.band_count()), r.height(), r.width());
    for (std::size_t b = 0; b < r.band_count(); ++b) {
      std::copy(r.band(b).begin(), r.band(b).end(), t.plane(static_cast<int>(b)).begin());
    }
    t = apply_geometry(t, plan);
    AugmentPlan jp = plan;
    jp.jitter_seed = derive_seed(plan.jitter_seed, "raster", band_index++);
    apply_jitter(t, jp);
    std::vector<Band> bands;
    for (std::size_t b = 0; b < r.band_count(); ++b) {
      auto p = t.plane(static_cast<int>(b));
      bands.push_back({r.bands()[b].name, {p.begin(), p.end()}});
    }
    out.rasters.emplace_back(r.width(), r.height(), r.resolution_m(), std::move(bands));
  }
  return out;
}

}  // namespace floodseg
