#include "xlenc/distill.hpp"

#include <algorithm>
#include <cmath>

#include "xlenc/error.hpp"

namespace xlenc::distill {

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ContractError("train config: lr must be > 0");
  if (batch_size == 0) throw ContractError("train config: batch_size must be >= 1");
  if (max_epochs == 0) throw ContractError("train config: max_epochs must be >= 1");
  if (max_len == 0) throw ContractError("train config: max_len must be >= 1");
  if (!(weight_decay >= 0)) throw ContractError("train config: weight_decay must be >= 0");
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) {
    throw ContractError("train config: betas must lie in (0, 1)");
  }
  if (!(eps > 0)) throw ContractError("train config: eps must be > 0");
  if (checkpoint_every == 0) throw ContractError("train config: checkpoint_every must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"batch_size", c.batch_size},
       {"warmup_steps", c.warmup_steps},
       {"max_epochs", c.max_epochs},
       {"max_len", c.max_len},
       {"weight_decay", c.weight_decay},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"eps", c.eps},
       {"seed", c.seed},
       {"checkpoint_every", c.checkpoint_every},
       {"max_steps", c.max_steps}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("lr").get_to(c.lr);
  j.at("batch_size").get_to(c.batch_size);
  j.at("warmup_steps").get_to(c.warmup_steps);
  j.at("max_epochs").get_to(c.max_epochs);
  j.at("max_len").get_to(c.max_len);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("eps").get_to(c.eps);
  j.at("seed").get_to(c.seed);
  j.at("checkpoint_every").get_to(c.checkpoint_every);
  j.at("max_steps").get_to(c.max_steps);
}

template <class T>
LossResult<T> distill_loss(const Matrix<T>& teacher_en, const Matrix<T>& student_en, const Matrix<T>& student_t) {
  if (teacher_en.rows != student_en.rows || teacher_en.cols != student_en.cols ||
      teacher_en.rows != student_t.rows || teacher_en.cols != student_t.cols) {
    throw ContractError("distill_loss: teacher and student matrices must share one shape");
  }
  if (teacher_en.rows == 0 || teacher_en.cols == 0) throw ContractError("distill_loss: empty batch");
  const T denom = static_cast<T>(teacher_en.rows) * static_cast<T>(teacher_en.cols);
  LossResult<T> r;
  r.grad_student_en = Matrix<T>(teacher_en.rows, teacher_en.cols);
  r.grad_student_t = Matrix<T>(teacher_en.rows, teacher_en.cols);
  T sum = 0;
  for (std::size_t i = 0; i < teacher_en.data.size(); ++i) {
    const T de = teacher_en.data[i] - student_en.data[i];
    const T dt = teacher_en.data[i] - student_t.data[i];
    sum += de * de + dt * dt;
    r.grad_student_en.data[i] = T{-2} * de / denom;
    r.grad_student_t.data[i] = T{-2} * dt / denom;
  }
  r.loss = sum / denom;
  return r;
}

double lr_at(std::uint64_t step, const TrainConfig& cfg) {
  if (cfg.warmup_steps == 0) return cfg.lr;
  return cfg.lr * std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg.warmup_steps));
}

template <class T>
BasicOptimizerState<T> BasicOptimizerState<T>::zeros(const encoder::BasicEncoderParams<T>& params) {
  BasicOptimizerState<T> s;
  for (const auto& t : params.tensors()) {
    s.first_moment.emplace_back(t.values.size(), T{0});
    s.second_moment.emplace_back(t.values.size(), T{0});
  }
  return s;
}

template <class T>
void adamw_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t step,
                  double lr, const TrainConfig& cfg) {
  if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size()) {
    throw ContractError("adamw: tensor sizes disagree");
  }
  if (step == 0) throw ContractError("adamw: step counts from 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double m_hat = mi / bc1;
    const double v_hat = vi / bc2;
    const double th = theta[i];
    theta[i] = static_cast<T>(th - lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * th));
  }
}

template <class T>
void adamw_step(encoder::BasicEncoderParams<T>& params, const encoder::ParamGradients<T>& grads,
                BasicOptimizerState<T>& state, const TrainConfig& cfg) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  if (g.size() != p.size() || state.first_moment.size() != p.size() || state.second_moment.size() != p.size()) {
    throw ContractError("adamw: parameter, gradient and state layouts disagree");
  }
  for (std::size_t t = 0; t < g.size(); ++t) {
    if (g[t].values.size() != p[t].values.size()) throw ContractError("adamw: shape mismatch in " + p[t].name);
    for (std::size_t i = 0; i < g[t].values.size(); ++i) {
      if (!std::isfinite(g[t].values[i])) {
        throw NonFiniteError("adamw: non-finite gradient in " + g[t].name + "[" + std::to_string(i) +
                             "] at step " + std::to_string(state.step + 1) + "; update skipped");
      }
    }
  }
  const std::uint64_t step = state.step + 1;
  const double lr = lr_at(step, cfg);
  for (std::size_t t = 0; t < p.size(); ++t) {
    adamw_update<T>(p[t].values, g[t].values, std::span<T>(state.first_moment[t]),
                    std::span<T>(state.second_moment[t]), step, lr, cfg);
  }
  state.step = step;
}

template LossResult<float> distill_loss<float>(const Matrix<float>&, const Matrix<float>&, const Matrix<float>&);
template LossResult<double> distill_loss<double>(const Matrix<double>&, const Matrix<double>&, const Matrix<double>&);
template struct BasicOptimizerState<float>;
template struct BasicOptimizerState<double>;
template void adamw_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                  std::uint64_t, double, const TrainConfig&);
template void adamw_update<double>(std::span<double>, std::span<const double>, std::span<double>, std::span<double>,
                                   std::uint64_t, double, const TrainConfig&);
template void adamw_step<float>(encoder::BasicEncoderParams<float>&, const encoder::ParamGradients<float>&,
                                BasicOptimizerState<float>&, const TrainConfig&);
template void adamw_step<double>(encoder::BasicEncoderParams<double>&, const encoder::ParamGradients<double>&,
                                 BasicOptimizerState<double>&, const TrainConfig&);

}  // namespace xlenc::distill
