#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "floodseg/datagen.hpp"
#include "floodseg/losses.hpp"
#include "floodseg/model.hpp"

namespace floodseg {

enum class LossKind { WeightedCe, TverskyFocal };
LossKind parse_loss_kind(const std::string& name);
std::string loss_kind_name(LossKind k);

enum class InputBands { S1, S1S2 };

struct TrainConfig {
  double lr0 = 0.1;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  int total_steps = 300;
  double lr_power = 0.9;
  int batch = 8;
  LossKind loss = LossKind::WeightedCe;
  std::uint64_t seed = 0;
  int eval_every = 50;
  bool edge_weighting = true;  // false gives plain CE (unit weights)
  float w_inner = 10.0F;
  float w_outer = 5.0F;
  int edge_iterations = 1;
  TverskyParams tversky;
  SegNetConfig model;
  AugmentConfig augment;

  void validate() const;
};

struct OptimState {
  std::vector<std::vector<float>> buffers;
  long step = 0;
};
OptimState make_optim_state(const SegNet& net);

struct EvalRecord {
  int step = 0;
  double train_loss = 0.0;  // mean step loss since the previous evaluation
  double val_iou = 0.0;

  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct RunHistory {
  std::vector<EvalRecord> evals;
  int best_step = -1;
  double best_val_iou = 0.0;

  friend bool operator==(const RunHistory&, const RunHistory&) = default;
};

struct TrainResult {
  SegNet best;
  SegNet last;
  RunHistory history;
};

// One normalized training or evaluation image.
struct Sample {
  std::string id;
  Tensor s1;          // VV, VH in [0, 1]
  Tensor s2;          // B2, B3, B4, B8 in [0, 1]; empty when not loaded
  ClassMask label;    // empty when not loaded
  BinaryGrid valid;   // 1 where every loaded band is finite
};
using Dataset = std::vector<Sample>;

Tensor stack_input(const Sample& s, InputBands bands);

// Normalizes raw rasters (S1 in dB, S2 reflectance); non-finite pixels become
// invalid and their labels INVALID.
Sample make_sample(std::string id, const Raster& s1_db, const Raster* s2_raw, const ClassMask* label);

// Reads every manifest row; labels and S2 bands are optional.
Dataset load_dataset(const Manifest& manifest, bool with_s2, bool with_label);
Sample load_sample(const SampleRecord& record, bool with_s2, bool with_label);

double poly_lr(double lr0, long step, long total, double power = 0.9);

// buffer = momentum * buffer + (grad + wd * param); param -= lr * buffer.
void sgd_momentum_step(SegNet& net, const Gradients& grads, OptimState& state, double lr, double wd,
                       double momentum = 0.9);

// Pooled IoU of the thresholded predictions over a labelled dataset.
double evaluate_iou(const SegNet& net, const Dataset& data, InputBands bands);

TrainResult train_supervised(const TrainConfig& config, const Dataset& train, const Dataset& val,
                             InputBands bands);

// Stacked S1+S2 model; config.model.in_channels must be 6.
TrainResult train_teacher(const TrainConfig& config, const Dataset& hand_labeled, const Dataset& val);

// Stage 2: the student (config.model, 2 channels) learns the frozen teacher's
// soft outputs on batches drawn equally from both unlabeled sources. Labels
// are never read from the sources; val supplies model selection.
TrainResult distill_student(const SegNet& teacher, const TrainConfig& config, const Dataset& source_a,
                            const Dataset& source_b, const Dataset& val);

struct GridTrial {
  double lr0 = 0.0;
  double weight_decay = 0.0;
  double best_val_iou = 0.0;
};
struct GridSearchResult {
  TrainConfig best_config;
  TrainResult best;
  std::vector<GridTrial> trials;
};
GridSearchResult grid_search(std::span<const double> lr_grid, std::span<const double> wd_grid,
                             const TrainConfig& config, const Dataset& train, const Dataset& val,
                             InputBands bands);

void write_history_csv(const RunHistory& history, const std::filesystem::path& path);

}  // namespace floodseg
