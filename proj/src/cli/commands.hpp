#pragma once

#include "floodseg/cli.hpp"
#include "floodseg/datagen.hpp"
#include "floodseg/trainer.hpp"

namespace floodseg::cli {

SceneParams scene_params(const RunSpec& spec);
// Reads whichever optimizer, model, augmentation and loss keys the run spec has.
TrainConfig train_config(const RunSpec& spec);

void cmd_synth(const RunSpec& spec);
void cmd_weaklabel(const RunSpec& spec);
void cmd_otsu(const RunSpec& spec);
void cmd_train(const RunSpec& spec);
void cmd_teacher(const RunSpec& spec);
void cmd_distill(const RunSpec& spec);
void cmd_eval(const RunSpec& spec);
void cmd_render(const RunSpec& spec);
// False when any suite exceeds the tolerance.
bool cmd_gradcheck(const RunSpec& spec);

}  // namespace floodseg::cli
