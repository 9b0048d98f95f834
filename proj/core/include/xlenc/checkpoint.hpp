#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "xlenc/distill.hpp"
#include "xlenc/encoder.hpp"
#include "xlenc/error.hpp"

namespace xlenc::distill {

class CheckpointVersionError : public DataError {
 public:
  using DataError::DataError;
};
class CheckpointTruncatedError : public DataError {
 public:
  using DataError::DataError;
};
class CheckpointCorruptError : public DataError {
 public:
  using DataError::DataError;
};
class VocabDigestError : public DataError {
 public:
  using DataError::DataError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  encoder::EncoderConfig encoder_config;
  TrainConfig train_config;
  encoder::EncoderParams params;
  OptimizerState optimizer;
  std::string vocab_digest;
  std::uint64_t step = 0;

  bool operator==(const Checkpoint&) const = default;
};

/// Container layout:
///   8 bytes   magic "XLENCCK\0"
///   u32 LE    format version
///   u64 LE    header length H
///   H bytes   JSON header: encoder/train configs, vocab digest, step,
///             tensor manifest (name, shape), payload SHA-256
///   payload   parameters, then first moments, then second moments, each in
///             tensor serialization order, as binary32 little-endian
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws CheckpointVersionError, CheckpointTruncatedError,
/// CheckpointCorruptError, or (when `expected_vocab_digest` is given and
/// differs) VocabDigestError.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_vocab_digest = std::nullopt);

}  // namespace xlenc::distill
