#include "floodseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "floodseg/eval.hpp"
#include "floodseg/labeling.hpp"

namespace floodseg {

LossKind parse_loss_kind(const std::string& name) {
  if (name == "weighted_ce") return LossKind::WeightedCe;
  if (name == "tversky_focal") return LossKind::TverskyFocal;
  throw ConfigError("unknown loss '" + name + "' (expected weighted_ce or tversky_focal)");
}

std::string loss_kind_name(LossKind k) { return k == LossKind::WeightedCe ? "weighted_ce" : "tversky_focal"; }

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0 must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
  if (!(lr_power > 0.0)) throw ConfigError("lr_power must be > 0");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (!(w_inner >= 0.0F && w_outer >= 0.0F)) throw ConfigError("edge weights must be >= 0");
  if (edge_iterations < 1) throw ConfigError("edge_iterations must be >= 1");
  if (!(tversky.alpha >= 0.0 && tversky.beta >= 0.0 && tversky.gamma > 0.0)) {
    throw ConfigError("tversky alpha, beta must be >= 0 and gamma > 0");
  }
  model.validate();
  augment.validate();
}

OptimState make_optim_state(const SegNet& net) {
  OptimState s;
  for (const auto& p : net.params()) s.buffers.emplace_back(p.data.size(), 0.0F);
  return s;
}

// ---- data ----

namespace {

Tensor to_tensor(const Raster& r, BinaryGrid& valid) {
  Tensor t(static_cast<int>(r.band_count()), r.height(), r.width());
  for (std::size_t b = 0; b < r.band_count(); ++b) {
    auto src = r.band(b);
    auto dst = t.plane(static_cast<int>(b));
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (std::isfinite(src[i])) {
        dst[i] = src[i];
      } else {
        dst[i] = 0.0F;
        valid[i] = 0;
      }
    }
  }
  return t;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tensor out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

int channels_for(InputBands bands) { return bands == InputBands::S1 ? 2 : 6; }

void require_labels(const Dataset& data, const char* what) {
  for (const auto& s : data) {
    if (s.label.size() == 0) throw SchemaError(std::string(what) + ": sample '" + s.id + "' has no label");
  }
}

bool has_scored_pixel(const ClassMask& m) {
  return std::any_of(m.cells().begin(), m.cells().end(), [](Code c) { return !is_ignored(c); });
}

WeightMap unit_weights(const ClassMask& label) {
  WeightMap w(label.width(), label.height());
  for (std::size_t i = 0; i < label.size(); ++i) w[i] = is_ignored(label[i]) ? 0.0F : 1.0F;
  return w;
}

// Each source cycles through seeded permutations, reshuffled per epoch.
class EpochCursor {
 public:
  EpochCursor(std::size_t size, std::uint64_t seed) : size_(size), seed_(seed) {}
  std::size_t next() {
    if (pos_ == order_.size()) {
      order_.resize(size_);
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      Rng rng(derive_seed(seed_, "epoch", epoch_++));
      std::shuffle(order_.begin(), order_.end(), rng);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::size_t size_;
  std::uint64_t seed_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::uint64_t epoch_ = 0;
};

void scale(Tensor& t, float s) {
  for (float& v : t.data) v *= s;
}

// Shared step bookkeeping: LR schedule, divergence guard, periodic evaluation
// and best-checkpoint tracking.
class Loop {
 public:
  Loop(const TrainConfig& cfg, SegNet net) : cfg_(cfg), state_(make_optim_state(net)) {
    result_.best = net;
    result_.last = std::move(net);
  }

  SegNet& net() { return result_.last; }

  template <typename EvalFn>
  void finish_step(int step, const Gradients& grads, double loss, const EvalFn& eval) {
    if (!std::isfinite(loss)) {
      throw DivergenceError("non-finite training loss at step " + std::to_string(step) + " (lr0 " +
                            std::to_string(cfg_.lr0) + ")");
    }
    const double lr = poly_lr(cfg_.lr0, step, cfg_.total_steps, cfg_.lr_power);
    sgd_momentum_step(result_.last, grads, state_, lr, cfg_.weight_decay, cfg_.momentum);
    loss_sum_ += loss;
    ++loss_count_;
    const int done = step + 1;
    if (done % cfg_.eval_every == 0 || done == cfg_.total_steps) {
      EvalRecord rec{done, loss_sum_ / loss_count_, eval(result_.last)};
      loss_sum_ = 0.0;
      loss_count_ = 0;
      auto& h = result_.history;
      h.evals.push_back(rec);
      if (h.best_step < 0 || rec.val_iou > h.best_val_iou) {
        h.best_step = rec.step;
        h.best_val_iou = rec.val_iou;
        result_.best = result_.last;
      }
    }
  }

  TrainResult take() { return std::move(result_); }

 private:
  const TrainConfig& cfg_;
  OptimState state_;
  TrainResult result_;
  double loss_sum_ = 0.0;
  int loss_count_ = 0;
};

}  // namespace

Tensor stack_input(const Sample& s, InputBands bands) {
  if (bands == InputBands::S1) return s.s1;
  if (s.s2.data.empty()) throw SchemaError("sample '" + s.id + "' has no S2 bands loaded");
  return concat_channels(s.s1, s.s2);
}

Sample make_sample(std::string id, const Raster& s1_db, const Raster* s2_raw, const ClassMask* label) {
  Sample s;
  s.id = std::move(id);
  const Raster s1 = normalize_s1(s1_db);
  s.valid = BinaryGrid(s1.width(), s1.height());
  std::fill(s.valid.cells().begin(), s.valid.cells().end(), std::uint8_t{1});
  s.s1 = to_tensor(s1, s.valid);
  if (s2_raw != nullptr) {
    const Raster s2 = normalize_s2(*s2_raw);
    if (s2.width() != s1.width() || s2.height() != s1.height()) {
      throw SchemaError("scene '" + s.id + "': S1 and S2 grids differ");
    }
    s.s2 = to_tensor(s2, s.valid);
  }
  if (label != nullptr) {
    if (!label->same_shape(s1.width(), s1.height())) {
      throw SchemaError("scene '" + s.id + "': label grid differs from S1 grid");
    }
    s.label = *label;
    for (std::size_t i = 0; i < s.label.size(); ++i) {
      if (s.valid[i] == 0) s.label[i] = Code::Invalid;
    }
  }
  return s;
}

Sample load_sample(const SampleRecord& record, bool with_s2, bool with_label) {
  const Raster s1 = read_raster(record.s1_path);
  std::optional<Raster> s2;
  std::optional<ClassMask> label;
  if (with_s2) s2 = read_raster(record.s2_path);
  if (with_label) label = read_mask(record.label_path);
  return make_sample(record.scene_id, s1, s2 ? &*s2 : nullptr, label ? &*label : nullptr);
}

Dataset load_dataset(const Manifest& manifest, bool with_s2, bool with_label) {
  Dataset d;
  d.reserve(manifest.rows.size());
  for (const auto& r : manifest.rows) d.push_back(load_sample(r, with_s2, with_label));
  return d;
}

double poly_lr(double lr0, long step, long total, double power) {
  if (step < 0 || step > total) throw ContractError("poly_lr: step outside [0, total]");
  if (total == 0) return lr0;
  return lr0 * std::pow(1.0 - static_cast<double>(step) / static_cast<double>(total), power);
}

void sgd_momentum_step(SegNet& net, const Gradients& grads, OptimState& state, double lr, double wd,
                       double momentum) {
  if (grads.size() != net.params().size() || state.buffers.size() != net.params().size()) {
    throw SchemaError("sgd_momentum_step: gradient or buffer count mismatch");
  }
  auto& params = net.mutable_params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& theta = params[p].data;
    auto& buf = state.buffers[p];
    const auto& g = grads[p];
    if (g.size() != theta.size() || buf.size() != theta.size()) {
      throw SchemaError("sgd_momentum_step: shape mismatch in " + params[p].name);
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      buf[i] = static_cast<float>(momentum * buf[i] + (g[i] + wd * theta[i]));
      theta[i] = static_cast<float>(theta[i] - lr * buf[i]);
    }
  }
  ++state.step;
}

double evaluate_iou(const SegNet& net, const Dataset& data, InputBands bands) {
  std::vector<ConfusionCounts> counts;
  counts.reserve(data.size());
  for (const auto& s : data) {
    const Tensor probs = softmax_probs(forward(net, stack_input(s, bands)).logits);
    counts.push_back(confusion(probs_to_mask(probs), s.label));
  }
  return pooled_iou(counts);
}

TrainResult train_supervised(const TrainConfig& cfg, const Dataset& train, const Dataset& val, InputBands bands) {
  cfg.validate();
  if (train.empty()) throw ConfigError("training set is empty");
  if (val.empty()) throw ConfigError("validation set is empty");
  if (cfg.model.in_channels != channels_for(bands)) {
    throw ConfigError("model.in_channels is " + std::to_string(cfg.model.in_channels) + " but the input has " +
                      std::to_string(channels_for(bands)) + " bands");
  }
  require_labels(train, "train");
  require_labels(val, "val");

  Loop loop(cfg, SegNet(cfg.model));
  EpochCursor cursor(train.size(), derive_seed(cfg.seed, "order"));
  const float inv_batch = 1.0F / static_cast<float>(cfg.batch);
  auto eval = [&](const SegNet& n) { return evaluate_iou(n, val, bands); };

  for (int step = 0; step < cfg.total_steps; ++step) {
    SegNet& net = loop.net();
    Gradients grads = net.zero_gradients();
    double loss = 0.0;
    for (int j = 0; j < cfg.batch; ++j) {
      const Sample& s = train[cursor.next()];
      const auto aug_seed = derive_seed(cfg.seed, "augment", static_cast<std::uint64_t>(step) * cfg.batch + j);
      const AugmentPlan plan = sample_augment_plan(cfg.augment, aug_seed, s.s1.width, s.s1.height);
      Tensor x = apply_geometry(stack_input(s, bands), plan);
      apply_jitter(x, plan);
      const ClassMask label = apply_geometry(s.label, plan);
      if (!has_scored_pixel(label)) continue;
      const auto f = forward(net, x, true);
      LossOutput out;
      if (cfg.loss == LossKind::WeightedCe) {
        const WeightMap w = cfg.edge_weighting
                                ? weight_map(label, cfg.w_inner, cfg.w_outer, cfg.edge_iterations)
                                : unit_weights(label);
        out = weighted_ce(f.logits, label, w);
      } else {
        out = tversky_focal(f.logits, label, cfg.tversky);
      }
      loss += out.value / cfg.batch;
      scale(out.grad_logits, inv_batch);
      backward_accumulate(net, f.trace, out.grad_logits, grads);
    }
    loop.finish_step(step, grads, loss, eval);
  }
  return loop.take();
}

TrainResult train_teacher(const TrainConfig& cfg, const Dataset& hand_labeled, const Dataset& val) {
  if (cfg.model.in_channels != 6) {
    throw ConfigError("teacher model.in_channels must be 6 (VV, VH, B2, B3, B4, B8), got " +
                      std::to_string(cfg.model.in_channels));
  }
  return train_supervised(cfg, hand_labeled, val, InputBands::S1S2);
}

TrainResult distill_student(const SegNet& teacher, const TrainConfig& cfg, const Dataset& source_a,
                            const Dataset& source_b, const Dataset& val) {
  cfg.validate();
  if (teacher.config().in_channels != 6) throw ConfigError("teacher must take 6 input channels");
  if (cfg.model.in_channels != 2) throw ConfigError("student model.in_channels must be 2 (VV, VH)");
  if (val.empty()) throw ConfigError("validation set is empty");
  require_labels(val, "val");
  const std::uint64_t teacher_sum = checksum(teacher);

  // The teacher is frozen and sees un-augmented inputs, so its outputs are fixed per sample.
  auto teacher_probs = [&](const Dataset& d) {
    std::vector<Tensor> out;
    out.reserve(d.size());
    for (const auto& s : d) {
      out.push_back(softmax_probs(forward(teacher, stack_input(s, InputBands::S1S2)).logits));
    }
    return out;
  };
  const std::vector<Tensor> cache_a = teacher_probs(source_a);
  const std::vector<Tensor> cache_b = teacher_probs(source_b);

  Loop loop(cfg, SegNet(cfg.model));
  BalancedSampler sampler(source_a.size(), source_b.size(), cfg.batch, derive_seed(cfg.seed, "balanced"));
  const float inv_batch = 1.0F / static_cast<float>(cfg.batch);
  auto eval = [&](const SegNet& n) { return evaluate_iou(n, val, InputBands::S1); };

  for (int step = 0; step < cfg.total_steps; ++step) {
    SegNet& net = loop.net();
    Gradients grads = net.zero_gradients();
    double loss = 0.0;
    const auto picks = sampler.next();
    std::vector<std::pair<const Sample*, const Tensor*>> batch;
    for (auto i : picks.a) batch.emplace_back(&source_a[i], &cache_a[i]);
    for (auto i : picks.b) batch.emplace_back(&source_b[i], &cache_b[i]);
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const Sample& s = *batch[j].first;
      const auto aug_seed = derive_seed(cfg.seed, "augment", static_cast<std::uint64_t>(step) * cfg.batch + j);
      const AugmentPlan plan = sample_augment_plan(cfg.augment, aug_seed, s.s1.width, s.s1.height);
      Tensor x = apply_geometry(s.s1, plan);
      apply_jitter(x, plan);
      Tensor target = apply_geometry(*batch[j].second, plan);
      const std::size_t n = target.plane_size();
      for (std::size_t i = 0; i < n; ++i) {
        const float sum = target.data[i] + target.data[n + i];
        const float water = sum > 0.0F ? std::clamp(target.data[n + i] / sum, 0.0F, 1.0F) : 0.5F;
        target.data[n + i] = water;
        target.data[i] = 1.0F - water;
      }
      const BinaryGrid valid = apply_geometry(s.valid, plan);
      if (std::none_of(valid.cells().begin(), valid.cells().end(), [](std::uint8_t v) { return v != 0; })) continue;
      const auto f = forward(net, x, true);
      LossOutput out = distill_kd(target, f.logits, valid);
      loss += out.value / cfg.batch;
      scale(out.grad_logits, inv_batch);
      backward_accumulate(net, f.trace, out.grad_logits, grads);
    }
    loop.finish_step(step, grads, loss, eval);
  }
  if (checksum(teacher) != teacher_sum) throw ContractError("teacher parameters changed during distillation");
  return loop.take();
}

GridSearchResult grid_search(std::span<const double> lr_grid, std::span<const double> wd_grid,
                             const TrainConfig& config, const Dataset& train, const Dataset& val,
                             InputBands bands) {
  if (lr_grid.empty() || wd_grid.empty()) throw ConfigError("grid_search: grids must be non-empty");
  std::vector<double> lrs(lr_grid.begin(), lr_grid.end());
  std::vector<double> wds(wd_grid.begin(), wd_grid.end());
  std::sort(lrs.begin(), lrs.end());
  std::sort(wds.begin(), wds.end());
  GridSearchResult out;
  bool have = false;
  for (double lr : lrs) {
    for (double wd : wds) {
      TrainConfig cfg = config;
      cfg.lr0 = lr;
      cfg.weight_decay = wd;
      TrainResult r = train_supervised(cfg, train, val, bands);
      out.trials.push_back({lr, wd, r.history.best_val_iou});
      // Strict comparison keeps the lowest (lr, wd) among ties.
      if (!have || r.history.best_val_iou > out.best.history.best_val_iou) {
        out.best_config = cfg;
        out.best = std::move(r);
        have = true;
      }
    }
  }
  return out;
}

void write_history_csv(const RunHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "step,train_loss,val_iou\n";
  char buf[96];
  for (const auto& e : history.evals) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", e.step, e.train_loss, e.val_iou);
    out << buf;
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace floodseg
