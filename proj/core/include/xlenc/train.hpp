#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "xlenc/checkpoint.hpp"
#include "xlenc/distill.hpp"
#include "xlenc/encoder.hpp"
#include "xlenc/normalize.hpp"
#include "xlenc/teacher.hpp"
#include "xlenc/vocab.hpp"

namespace xlenc::distill {

struct TrainOptions {
  TrainConfig config;
  encoder::EncoderConfig encoder_config;  // vocab_size and max_len are overwritten
  std::vector<std::filesystem::path> shards;
  const encoder::TeacherOracle* teacher = nullptr;
  const preprocess::Vocabulary* vocab = nullptr;
  preprocess::Normalizer normalizer;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume_from;
};

struct TrainResult {
  Checkpoint final_checkpoint;
  std::filesystem::path final_path;
  std::filesystem::path metrics_path;
  double final_loss = 0.0;  // loss of the last step taken
};

/// Distills the student on the shards. Every step normalizes and tokenizes
/// both sides, embeds en and t rows in one 2B-row forward pass, applies the
/// distillation loss, backpropagates and takes an AdamW step. Writes
/// out_dir/metrics.csv (step,lr,loss), out_dir/checkpoint-<step>.ckpt every
/// checkpoint_every steps and out_dir/final.ckpt.
TrainResult train(const TrainOptions& options);

}  // namespace xlenc::distill
