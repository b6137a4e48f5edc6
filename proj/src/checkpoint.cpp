// SPDX-License-Identifier: Apache-2.0
#include <system_error>

#include "diffrect/errors.hpp"
#include "diffrect/trainer.hpp"

namespace diffrect {

namespace fs = std::filesystem;

void save_checkpoint(const TrainState& state, const fs::path& path) {
  torch::serialize::OutputArchive archive;
  torch::serialize::OutputArchive model;
  state.nets->save(model);
  archive.write("model", model);
  torch::serialize::OutputArchive optim;
  state.optimizer->save(optim);
  archive.write("optimizer", optim);
  archive.write("config", c10::IValue(nlohmann::json(state.config).dump()));
  archive.write("iteration", c10::IValue(state.iteration));
  archive.write("rng", c10::IValue(state.rng.state()));
  archive.write("best_dice", c10::IValue(state.best_dice));
  archive.write("best_iteration", c10::IValue(state.best_iteration));

  auto tmp = path;
  tmp += ".tmp";
  try {
    archive.save_to(tmp.string());
  } catch (const c10::Error& e) {
    throw IoError(path, "cannot write checkpoint");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError(path, "cannot write checkpoint: " + ec.message());
}

std::unique_ptr<TrainState> load_checkpoint(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw IoError(path, "checkpoint not found");
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error&) {
    throw ParseError(path, "not a readable checkpoint archive");
  }
  try {
    c10::IValue v;
    archive.read("config", v);
    const auto cfg = nlohmann::json::parse(v.toStringRef()).get<TrainConfig>();
    auto state = std::make_unique<TrainState>(cfg);
    torch::serialize::InputArchive model;
    archive.read("model", model);
    state->nets->load(model);
    torch::serialize::InputArchive optim;
    archive.read("optimizer", optim);
    state->optimizer->load(optim);
    archive.read("iteration", v);
    state->iteration = v.toInt();
    archive.read("rng", v);
    state->rng.set_state(v.toStringRef());
    archive.read("best_dice", v);
    state->best_dice = v.toDouble();
    archive.read("best_iteration", v);
    state->best_iteration = v.toInt();
    return state;
  } catch (const c10::Error&) {
    throw ParseError(path, "checkpoint is missing fields or has mismatched tensors");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, std::string("checkpoint config: ") + e.what());
  }
}

}  // namespace diffrect
