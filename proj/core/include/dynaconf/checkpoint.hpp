#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "dynaconf/conditional.hpp"
#include "dynaconf/dynamics.hpp"
#include "dynaconf/optim.hpp"
#include "dynaconf/posterior.hpp"

namespace dynaconf {

struct ModelSpec {
  ConditionalConfig cond;
  DynamicsConfig dyn;
  PosteriorConfig posterior;
};

/// Trained-model bundle plus everything needed to resume training exactly:
/// optimizer moments, rng state, and counters. Round-trips through the
/// checkpoint file bit-exactly.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string model_kind;  // "staticonf" | "dynaconf"
  ModelSpec spec;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  int epoch = 0;
  int train_end = 0;  // posterior horizon = train_end - B
  bool diverged = false;
  std::vector<double> epoch_losses;
  std::string rng_state;

  std::shared_ptr<ConditionalModel> cond;
  std::shared_ptr<DynamicsModel> dyn;
  std::shared_ptr<Posterior> posterior;  // null for staticonf

  std::shared_ptr<Adam> adam_cond, adam_dyn, adam_post;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& file);
Checkpoint load_checkpoint(const std::filesystem::path& file);

/// FNV-1a over a byte string; used for config hashes on artifacts.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace dynaconf
