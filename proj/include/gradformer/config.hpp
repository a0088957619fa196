#pragma once

// Model and training configuration, plus the line-oriented "key = value"
// config-file format shared by config files and checkpoint snapshots.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gradformer/glfr.hpp"

namespace gradformer {

enum class LossKind { kCrossEntropy, kFocal, kMiou };

struct ModelConfig {
  std::array<std::int64_t, 4> stage_channels{64, 96, 128, 256};
  std::array<int, 4> stage_depths{3, 3, 4, 3};
  int heads = 4;
  double lambda_init = 0.8;
  double eps = 1e-5;
  int mlp_ratio = 4;
  std::int64_t decoder_width = 256;
  int num_classes = 2;
  AttentionKind attention = AttentionKind::kDifferential;
  int upsample_kernel = 4;
  int upsample_padding = 1;
  std::uint64_t seed = 0;

  // Every violated invariant, one message each; empty when valid.
  std::vector<std::string> violations() const;
  // Throws ConfigError listing all violations.
  void validate() const;

  static ModelConfig defaults() { return {}; }
  // Desk-scale preset: channels 16/32/48/64, one block per stage.
  static ModelConfig tiny();
};

struct TrainConfig {
  double lr = 1e-4;
  std::vector<int> decay_epochs{100, 200};
  double decay_factor = 0.1;
  int epochs = 30;
  int batch = 2;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kCrossEntropy;
  bool augment_flips = true;

  std::vector<std::string> violations() const;
  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// Parses config text. Blank lines and lines starting with '#' are ignored.
// Unknown keys, malformed values and duplicate keys raise ConfigError naming
// the 1-based line number.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config_file(const std::string& path);
// Accepts the builtin names "default" and "tiny" as well as file paths.
RunConfig resolve_config(const std::string& name_or_path);

// Canonical text form; parse_config(to_config_text(c)) == c.
std::string to_config_text(const RunConfig& config);

std::string to_string(AttentionKind kind);
std::string to_string(LossKind kind);
AttentionKind parse_attention_kind(const std::string& text);
LossKind parse_loss_kind(const std::string& text);

bool operator==(const ModelConfig& a, const ModelConfig& b);
bool operator==(const TrainConfig& a, const TrainConfig& b);
bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace gradformer
