// Copyright (c) 2026 The docfield Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "docfield/dataio.hpp"
#include "docfield/model.hpp"
#include "docfield/optim.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace docfield {

struct TrainConfig {
  int batch_size = 8;
  std::int64_t iterations = 20000;
  double base_lr = 0.01;
  double lr_decay = 0.1;
  std::int64_t lr_period = 5000;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  ModelConfig model;
  std::int64_t checkpoint_every = 0;  // 0 = only the final checkpoint

  /// Throws std::invalid_argument on non-positive sizes or rates.
  void validate() const;
};

nlohmann::ordered_json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  TrainConfig config;
  ModelParams params;
  OptimizerState optimizer;
  std::int64_t iteration = 0;
  std::string rng_state;  // textual mt19937_64 state of the pair sampler
};

/// Freshly initialized parameters, zero velocities, sampler seeded from config.
Checkpoint initial_checkpoint(const TrainConfig& cfg);

std::string serialize_checkpoint(const Checkpoint& ck);
/// Throws CheckpointError on bad magic, version mismatch or checksum failure.
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainingPair {
  const Document* support = nullptr;
  const Document* query = nullptr;
};

/// `batch_size` distinct types drawn uniformly without replacement, then two
/// distinct documents of each. Throws std::invalid_argument when the dataset
/// is too small.
std::vector<TrainingPair> sample_batch(std::span<const TypeGroup* const> types, int batch_size,
                                       std::mt19937_64& rng);

struct LossRecord {
  std::int64_t iteration = 0;
  double lr = 0;
  double loss = 0;
};

struct TrainHooks {
  std::function<void(const LossRecord&)> on_step;
  std::function<void(const Checkpoint&)> on_checkpoint;
  int threads = 0;  // per-pair workers, 0 = hardware concurrency
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> trace;
};

/// Runs from `start.iteration` up to `start.config.iterations` on the train
/// split. Pairs without landmark correspondence are left out of the batch mean.
/// Throws std::runtime_error when the loss turns NaN.
TrainResult train(const DatasetManifest& ds, Checkpoint start, const TrainHooks& hooks = {});
TrainResult train(const DatasetManifest& ds, const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Writes "iter,lr,loss" rows.
void write_loss_csv(std::span<const LossRecord> trace, const std::filesystem::path& path);

}  // namespace docfield
