#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlenc/tensor.hpp"
#include "xlenc/vocab.hpp"

namespace xlenc::encoder {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_blocks = 1;
  std::size_t n_heads = 4;
  std::size_t d_teacher = 32;
  std::size_t max_len = 128;

  /// Throws ContractError unless every dimension is >= 1, n_blocks <= 2 and
  /// n_heads divides d_model.
  void validate() const;
  std::size_t d_ff() const { return 4 * d_model; }

  bool operator==(const EncoderConfig&) const = default;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

/// One pre-norm transformer block. Matrices are stored [in x out] and applied
/// to row vectors.
template <class T>
struct BlockParams {
  std::vector<T> ln1_gain, ln1_bias;
  Matrix<T> query, key, value, output;  // [d_model x d_model]
  std::vector<T> ln2_gain, ln2_bias;
  Matrix<T> ff_in;   // [d_model x 4 d_model]
  std::vector<T> ff_in_bias;
  Matrix<T> ff_out;  // [4 d_model x d_model]
  std::vector<T> ff_out_bias;

  bool operator==(const BlockParams&) const = default;
};

template <class T>
struct BasicEncoderParams {
  EncoderConfig config;
  Matrix<T> token_embedding;     // [vocab_size x d_model]
  Matrix<T> position_embedding;  // [max_len x d_model]
  std::vector<BlockParams<T>> blocks;
  Matrix<T> head;                // [d_model x d_teacher]
  std::vector<T> head_bias;

  /// All-zero parameters with the shapes implied by `config`.
  static BasicEncoderParams zeros(const EncoderConfig& config);

  /// Every tensor in serialization order: token_embedding,
  /// position_embedding, then per block ln1_gain, ln1_bias, query, key,
  /// value, output, ln2_gain, ln2_bias, ff_in, ff_in_bias, ff_out,
  /// ff_out_bias, and finally head, head_bias.
  std::vector<TensorView<T>> tensors();
  std::vector<TensorView<const T>> tensors() const;
  std::size_t parameter_count() const;

  bool operator==(const BasicEncoderParams&) const = default;
};

using EncoderParams = BasicEncoderParams<float>;
/// Gradients share the parameter layout.
template <class T>
using ParamGradients = BasicEncoderParams<T>;

/// Xavier-uniform weights (a = sqrt(6 / (fan_in + fan_out))), zero biases,
/// unit layer-norm gains. Deterministic in `seed`.
template <class T>
BasicEncoderParams<T> init_params(const EncoderConfig& config, std::uint64_t seed);

template <class To, class From>
BasicEncoderParams<To> cast_params(const BasicEncoderParams<From>& params);

/// (sum_t mask_t * hidden_t) / (sum_t mask_t). Throws ContractError when
/// the mask is empty or its length differs from hidden.rows.
template <class T>
std::vector<T> mean_pool(const Matrix<T>& hidden, std::span<const std::uint8_t> mask);

enum class Mode { kTrain, kInfer };

/// Activations of one forward call, enough for exact reverse mode. Only the
/// unmasked prefix of each sequence is stored: padding never influences the
/// output.
template <class T>
class ForwardTrace {
 public:
  struct BlockCache {
    Matrix<T> input;          // residual stream entering the block
    Matrix<T> ln1_hat;        // normalized, before gain/bias
    std::vector<T> ln1_rstd;
    Matrix<T> ln1_out;
    Matrix<T> q, k, v;
    std::vector<Matrix<T>> probs;  // per head [n x n]
    Matrix<T> context;        // concatenated heads
    Matrix<T> mid;            // after attention residual
    Matrix<T> ln2_hat;
    std::vector<T> ln2_rstd;
    Matrix<T> ln2_out;
    Matrix<T> ff_pre;         // before GELU
    Matrix<T> ff_act;         // after GELU
  };
  struct ItemCache {
    std::vector<std::int32_t> ids;  // real tokens only
    std::vector<BlockCache> blocks;
    std::vector<T> pooled;
  };

  std::vector<ItemCache> items;
  bool consumed() const { return consumed_; }
  void mark_consumed() { consumed_ = true; }

 private:
  bool consumed_ = false;
};

template <class T>
struct ForwardResult {
  Matrix<T> embeddings;  // [batch x d_teacher]
  std::optional<ForwardTrace<T>> trace;  // train mode only
};

/// Embeds each sequence: token + position embedding, n_blocks pre-norm
/// blocks (masked multi-head self-attention, GELU feed-forward), masked mean
/// pooling, linear head. Items never attend to each other.
template <class T>
ForwardResult<T> forward(const BasicEncoderParams<T>& params,
                         std::span<const preprocess::TokenizedSequence> batch, Mode mode);

/// Gradient of sum_i <grad_embeddings[i], embedding_i> with respect to every
/// parameter. Consumes the trace; a second call with the same trace throws.
template <class T>
ParamGradients<T> backward(const BasicEncoderParams<T>& params, ForwardTrace<T>& trace,
                           const Matrix<T>& grad_embeddings);

}  // namespace xlenc::encoder
