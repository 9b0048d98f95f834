#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlenc/encoder.hpp"
#include "xlenc/tensor.hpp"

namespace xlenc::distill {

/// Defaults follow the published training setup.
struct TrainConfig {
  double lr = 2e-5;
  std::size_t batch_size = 64;
  std::uint64_t warmup_steps = 20000;
  std::size_t max_epochs = 20;
  std::size_t max_len = 128;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_every = 1000;
  /// Stop after this many global steps (0 = run every epoch).
  std::uint64_t max_steps = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

template <class T>
struct LossResult {
  T loss = 0;
  Matrix<T> grad_student_en;
  Matrix<T> grad_student_t;
};

/// Mini-batch distillation objective
///   (1/B) sum_j [ msd(CT(en_j), S(en_j)) + msd(CT(en_j), S(t_j)) ],
/// msd(u, v) = mean_k (u_k - v_k)^2, with its gradients.
template <class T>
LossResult<T> distill_loss(const Matrix<T>& teacher_en, const Matrix<T>& student_en,
                           const Matrix<T>& student_t);

/// Linear warmup to cfg.lr over warmup_steps optimizer steps, then constant.
double lr_at(std::uint64_t step, const TrainConfig& cfg);

/// AdamW moments, one buffer per parameter tensor in serialization order.
template <class T>
struct BasicOptimizerState {
  std::uint64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  static BasicOptimizerState zeros(const encoder::BasicEncoderParams<T>& params);
  bool operator==(const BasicOptimizerState&) const = default;
};

using OptimizerState = BasicOptimizerState<float>;

/// One decoupled-weight-decay Adam update of a single tensor at optimizer
/// step `step` (already incremented) with learning rate `lr`.
template <class T>
void adamw_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v,
                  std::uint64_t step, double lr, const TrainConfig& cfg);

/// Full optimizer step. Throws NonFiniteError, leaving params and state
/// untouched, if any gradient entry is NaN or infinite.
template <class T>
void adamw_step(encoder::BasicEncoderParams<T>& params, const encoder::ParamGradients<T>& grads,
                BasicOptimizerState<T>& state, const TrainConfig& cfg);

}  // namespace xlenc::distill
