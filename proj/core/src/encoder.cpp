#include "xlenc/encoder.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "xlenc/error.hpp"
#include "xlenc/random.hpp"

namespace xlenc::encoder {

void EncoderConfig::validate() const {
  if (vocab_size == 0 || d_model == 0 || n_heads == 0 || d_teacher == 0 || max_len == 0) {
    throw ContractError("encoder config: every dimension must be >= 1");
  }
  if (n_blocks > 2) throw ContractError("encoder config: n_blocks must be 0, 1 or 2");
  if (d_model % n_heads != 0) throw ContractError("encoder config: n_heads must divide d_model");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"vocab_size", c.vocab_size}, {"d_model", c.d_model}, {"n_blocks", c.n_blocks},
       {"n_heads", c.n_heads},       {"d_teacher", c.d_teacher}, {"max_len", c.max_len}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("d_model").get_to(c.d_model);
  j.at("n_blocks").get_to(c.n_blocks);
  j.at("n_heads").get_to(c.n_heads);
  j.at("d_teacher").get_to(c.d_teacher);
  j.at("max_len").get_to(c.max_len);
}

namespace {

template <class Params, class View>
std::vector<View> collect_tensors(Params& p) {
  std::vector<View> out;
  auto mat = [&](std::string name, auto& m) {
    out.push_back(View{std::move(name), {m.rows, m.cols}, std::span(m.data)});
  };
  auto vec = [&](std::string name, auto& v) { out.push_back(View{std::move(name), {v.size()}, std::span(v)}); };
  mat("token_embedding", p.token_embedding);
  mat("position_embedding", p.position_embedding);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    auto& blk = p.blocks[b];
    const std::string prefix = "blocks." + std::to_string(b) + ".";
    vec(prefix + "ln1_gain", blk.ln1_gain);
    vec(prefix + "ln1_bias", blk.ln1_bias);
    mat(prefix + "query", blk.query);
    mat(prefix + "key", blk.key);
    mat(prefix + "value", blk.value);
    mat(prefix + "output", blk.output);
    vec(prefix + "ln2_gain", blk.ln2_gain);
    vec(prefix + "ln2_bias", blk.ln2_bias);
    mat(prefix + "ff_in", blk.ff_in);
    vec(prefix + "ff_in_bias", blk.ff_in_bias);
    mat(prefix + "ff_out", blk.ff_out);
    vec(prefix + "ff_out_bias", blk.ff_out_bias);
  }
  mat("head", p.head);
  vec("head_bias", p.head_bias);
  return out;
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// ---- dense kernels -------------------------------------------------------

// C = A * B
template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    T* crow = &c.data[i * c.cols];
    for (std::size_t p = 0; p < a.cols; ++p) {
      const T aip = a.data[i * a.cols + p];
      const T* brow = &b.data[p * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

// G += A^T * D
template <class T>
void accumulate_at_b(Matrix<T>& g, const Matrix<T>& a, const Matrix<T>& d) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    const T* drow = &d.data[i * d.cols];
    for (std::size_t p = 0; p < a.cols; ++p) {
      const T aip = a.data[i * a.cols + p];
      T* grow = &g.data[p * g.cols];
      for (std::size_t j = 0; j < d.cols; ++j) grow[j] += aip * drow[j];
    }
  }
}

// D * B^T
template <class T>
Matrix<T> matmul_bt(const Matrix<T>& d, const Matrix<T>& b) {
  Matrix<T> out(d.rows, b.rows);
  for (std::size_t i = 0; i < d.rows; ++i) {
    const T* drow = &d.data[i * d.cols];
    for (std::size_t p = 0; p < b.rows; ++p) {
      const T* brow = &b.data[p * b.cols];
      T acc = 0;
      for (std::size_t j = 0; j < b.cols; ++j) acc += drow[j] * brow[j];
      out.data[i * out.cols + p] = acc;
    }
  }
  return out;
}

template <class T>
void add_row_bias(Matrix<T>& m, const std::vector<T>& bias) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) m(i, j) += bias[j];
  }
}

template <class T>
void accumulate_column_sums(std::vector<T>& g, const Matrix<T>& d) {
  for (std::size_t i = 0; i < d.rows; ++i) {
    for (std::size_t j = 0; j < d.cols; ++j) g[j] += d(i, j);
  }
}

template <class T>
void add_in_place(Matrix<T>& a, const Matrix<T>& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

constexpr double kLayerNormEps = 1e-5;

template <class T>
void layer_norm(const Matrix<T>& x, const std::vector<T>& gain, const std::vector<T>& bias, Matrix<T>& hat,
                std::vector<T>& rstd, Matrix<T>& out) {
  const std::size_t d = x.cols;
  hat = Matrix<T>(x.rows, d);
  out = Matrix<T>(x.rows, d);
  rstd.assign(x.rows, T{0});
  for (std::size_t i = 0; i < x.rows; ++i) {
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += x(i, j);
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<T>(d);
    const T r = T{1} / std::sqrt(var + static_cast<T>(kLayerNormEps));
    rstd[i] = r;
    for (std::size_t j = 0; j < d; ++j) {
      hat(i, j) = (x(i, j) - mean) * r;
      out(i, j) = hat(i, j) * gain[j] + bias[j];
    }
  }
}

// Returns dL/dx and accumulates gain/bias gradients.
template <class T>
Matrix<T> layer_norm_backward(const Matrix<T>& dout, const Matrix<T>& hat, const std::vector<T>& rstd,
                              const std::vector<T>& gain, std::vector<T>& dgain, std::vector<T>& dbias) {
  const std::size_t d = dout.cols;
  Matrix<T> dx(dout.rows, d);
  std::vector<T> dhat(d);
  for (std::size_t i = 0; i < dout.rows; ++i) {
    T mean_dhat = 0, mean_dhat_hat = 0;
    for (std::size_t j = 0; j < d; ++j) {
      dgain[j] += dout(i, j) * hat(i, j);
      dbias[j] += dout(i, j);
      dhat[j] = dout(i, j) * gain[j];
      mean_dhat += dhat[j];
      mean_dhat_hat += dhat[j] * hat(i, j);
    }
    mean_dhat /= static_cast<T>(d);
    mean_dhat_hat /= static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) dx(i, j) = rstd[i] * (dhat[j] - mean_dhat - hat(i, j) * mean_dhat_hat);
  }
  return dx;
}

// Exact (erf) GELU.
template <class T>
T gelu(T x) {
  return static_cast<T>(0.5) * x * (T{1} + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2)));
}

template <class T>
T gelu_grad(T x) {
  const T cdf = static_cast<T>(0.5) * (T{1} + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2)));
  const T pdf = std::exp(static_cast<T>(-0.5) * x * x) * static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return cdf + x * pdf;
}

template <class T>
std::size_t validate_sequence(const BasicEncoderParams<T>& params, const preprocess::TokenizedSequence& seq) {
  const auto& cfg = params.config;
  if (seq.ids.size() != seq.mask.size()) throw ContractError("forward: ids and mask lengths differ");
  if (seq.ids.size() > cfg.max_len) {
    throw ContractError("forward: sequence length " + std::to_string(seq.ids.size()) + " exceeds max_len " +
                        std::to_string(cfg.max_len));
  }
  std::size_t n = 0;
  while (n < seq.mask.size() && seq.mask[n] == 1) ++n;
  for (std::size_t t = n; t < seq.mask.size(); ++t) {
    if (seq.mask[t] != 0) throw ContractError("forward: attention mask must be a prefix of ones");
  }
  if (n == 0) throw ContractError("forward: attention mask selects no token");
  for (auto id : seq.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
      throw ContractError("forward: token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(cfg.vocab_size));
    }
  }
  return n;
}

// Runs one sequence. Only the n unmasked positions are materialized: masked
// keys would get -inf logits and masked rows are excluded from pooling, so
// they cannot reach the output.
template <class T>
std::vector<T> forward_item(const BasicEncoderParams<T>& params, const preprocess::TokenizedSequence& seq,
                            typename ForwardTrace<T>::ItemCache& cache) {
  const auto& cfg = params.config;
  const std::size_t n = validate_sequence(params, seq);
  const std::size_t d = cfg.d_model;
  const std::size_t heads = cfg.n_heads;
  const std::size_t dh = d / heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));

  cache.ids.assign(seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(n));
  Matrix<T> x(n, d);
  for (std::size_t t = 0; t < n; ++t) {
    const auto tok = params.token_embedding.row(static_cast<std::size_t>(cache.ids[t]));
    const auto pos = params.position_embedding.row(t);
    for (std::size_t j = 0; j < d; ++j) x(t, j) = tok[j] + pos[j];
  }

  cache.blocks.resize(params.blocks.size());
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const auto& blk = params.blocks[b];
    auto& bc = cache.blocks[b];
    bc.input = x;
    layer_norm(x, blk.ln1_gain, blk.ln1_bias, bc.ln1_hat, bc.ln1_rstd, bc.ln1_out);
    bc.q = matmul(bc.ln1_out, blk.query);
    bc.k = matmul(bc.ln1_out, blk.key);
    bc.v = matmul(bc.ln1_out, blk.value);
    bc.context = Matrix<T>(n, d);
    bc.probs.assign(heads, Matrix<T>(n, n));
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      auto& p = bc.probs[h];
      for (std::size_t i = 0; i < n; ++i) {
        T max_logit = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
          T s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += bc.q(i, off + c) * bc.k(j, off + c);
          p(i, j) = s * scale;
          max_logit = std::max(max_logit, p(i, j));
        }
        T z = 0;
        for (std::size_t j = 0; j < n; ++j) {
          p(i, j) = std::exp(p(i, j) - max_logit);
          z += p(i, j);
        }
        for (std::size_t j = 0; j < n; ++j) p(i, j) /= z;
        for (std::size_t j = 0; j < n; ++j) {
          const T pij = p(i, j);
          for (std::size_t c = 0; c < dh; ++c) bc.context(i, off + c) += pij * bc.v(j, off + c);
        }
      }
    }
    bc.mid = matmul(bc.context, blk.output);
    add_in_place(bc.mid, x);

    layer_norm(bc.mid, blk.ln2_gain, blk.ln2_bias, bc.ln2_hat, bc.ln2_rstd, bc.ln2_out);
    bc.ff_pre = matmul(bc.ln2_out, blk.ff_in);
    add_row_bias(bc.ff_pre, blk.ff_in_bias);
    bc.ff_act = bc.ff_pre;
    for (auto& a : bc.ff_act.data) a = gelu(a);
    x = matmul(bc.ff_act, blk.ff_out);
    add_row_bias(x, blk.ff_out_bias);
    add_in_place(x, bc.mid);
  }

  cache.pooled = mean_pool(x, std::span(seq.mask).first(n));
  std::vector<T> out(params.head_bias);
  for (std::size_t j = 0; j < d; ++j) {
    const T pj = cache.pooled[j];
    const auto hrow = params.head.row(j);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += pj * hrow[k];
  }
  return out;
}

template <class T>
void backward_item(const BasicEncoderParams<T>& params, const typename ForwardTrace<T>::ItemCache& cache,
                   std::span<const T> dout, ParamGradients<T>& g) {
  const auto& cfg = params.config;
  const std::size_t n = cache.ids.size();
  const std::size_t d = cfg.d_model;
  const std::size_t heads = cfg.n_heads;
  const std::size_t dh = d / heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));

  // head: out = pooled * W + b
  std::vector<T> dpooled(d, T{0});
  for (std::size_t j = 0; j < d; ++j) {
    const auto hrow = params.head.row(j);
    auto grow = g.head.row(j);
    T acc = 0;
    for (std::size_t k = 0; k < dout.size(); ++k) {
      grow[k] += cache.pooled[j] * dout[k];
      acc += hrow[k] * dout[k];
    }
    dpooled[j] = acc;
  }
  for (std::size_t k = 0; k < dout.size(); ++k) g.head_bias[k] += dout[k];

  // mean pooling over the n real rows
  Matrix<T> dx(n, d);
  const T inv_n = T{1} / static_cast<T>(n);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < d; ++j) dx(t, j) = dpooled[j] * inv_n;
  }

  for (std::size_t b = params.blocks.size(); b-- > 0;) {
    const auto& blk = params.blocks[b];
    const auto& bc = cache.blocks[b];
    auto& gb = g.blocks[b];

    // x_out = mid + gelu(ln2(mid) W1 + b1) W2 + b2
    accumulate_at_b(gb.ff_out, bc.ff_act, dx);
    accumulate_column_sums(gb.ff_out_bias, dx);
    Matrix<T> dpre = matmul_bt(dx, blk.ff_out);
    for (std::size_t i = 0; i < dpre.data.size(); ++i) dpre.data[i] *= gelu_grad(bc.ff_pre.data[i]);
    accumulate_at_b(gb.ff_in, bc.ln2_out, dpre);
    accumulate_column_sums(gb.ff_in_bias, dpre);
    const Matrix<T> dln2 = matmul_bt(dpre, blk.ff_in);
    Matrix<T> dmid = layer_norm_backward(dln2, bc.ln2_hat, bc.ln2_rstd, blk.ln2_gain, gb.ln2_gain, gb.ln2_bias);
    add_in_place(dmid, dx);

    // mid = input + context Wo
    accumulate_at_b(gb.output, bc.context, dmid);
    const Matrix<T> dcontext = matmul_bt(dmid, blk.output);
    Matrix<T> dq(n, d), dk(n, d), dv(n, d);
    std::vector<T> dp(n);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      const auto& p = bc.probs[h];
      for (std::size_t i = 0; i < n; ++i) {
        // context_i = sum_j p_ij v_j
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) {
          T s = 0;
          for (std::size_t c = 0; c < dh; ++c) {
            s += dcontext(i, off + c) * bc.v(j, off + c);
            dv(j, off + c) += p(i, j) * dcontext(i, off + c);
          }
          dp[j] = s;
          dot += s * p(i, j);
        }
        // softmax, then the scaled q.k logits
        for (std::size_t j = 0; j < n; ++j) {
          const T dlogit = p(i, j) * (dp[j] - dot) * scale;
          for (std::size_t c = 0; c < dh; ++c) {
            dq(i, off + c) += dlogit * bc.k(j, off + c);
            dk(j, off + c) += dlogit * bc.q(i, off + c);
          }
        }
      }
    }
    accumulate_at_b(gb.query, bc.ln1_out, dq);
    accumulate_at_b(gb.key, bc.ln1_out, dk);
    accumulate_at_b(gb.value, bc.ln1_out, dv);
    Matrix<T> dln1 = matmul_bt(dq, blk.query);
    add_in_place(dln1, matmul_bt(dk, blk.key));
    add_in_place(dln1, matmul_bt(dv, blk.value));
    dx = layer_norm_backward(dln1, bc.ln1_hat, bc.ln1_rstd, blk.ln1_gain, gb.ln1_gain, gb.ln1_bias);
    add_in_place(dx, dmid);
  }

  for (std::size_t t = 0; t < n; ++t) {
    auto tok = g.token_embedding.row(static_cast<std::size_t>(cache.ids[t]));
    auto pos = g.position_embedding.row(t);
    for (std::size_t j = 0; j < d; ++j) {
      tok[j] += dx(t, j);
      pos[j] += dx(t, j);
    }
  }
}

}  // namespace

template <class T>
BasicEncoderParams<T> BasicEncoderParams<T>::zeros(const EncoderConfig& config) {
  config.validate();
  const std::size_t d = config.d_model;
  BasicEncoderParams<T> p;
  p.config = config;
  p.token_embedding = Matrix<T>(config.vocab_size, d);
  p.position_embedding = Matrix<T>(config.max_len, d);
  p.blocks.resize(config.n_blocks);
  for (auto& blk : p.blocks) {
    blk.ln1_gain.assign(d, T{0});
    blk.ln1_bias.assign(d, T{0});
    blk.query = Matrix<T>(d, d);
    blk.key = Matrix<T>(d, d);
    blk.value = Matrix<T>(d, d);
    blk.output = Matrix<T>(d, d);
    blk.ln2_gain.assign(d, T{0});
    blk.ln2_bias.assign(d, T{0});
    blk.ff_in = Matrix<T>(d, config.d_ff());
    blk.ff_in_bias.assign(config.d_ff(), T{0});
    blk.ff_out = Matrix<T>(config.d_ff(), d);
    blk.ff_out_bias.assign(d, T{0});
  }
  p.head = Matrix<T>(d, config.d_teacher);
  p.head_bias.assign(config.d_teacher, T{0});
  return p;
}

template <class T>
std::vector<TensorView<T>> BasicEncoderParams<T>::tensors() {
  return collect_tensors<BasicEncoderParams<T>, TensorView<T>>(*this);
}

template <class T>
std::vector<TensorView<const T>> BasicEncoderParams<T>::tensors() const {
  return collect_tensors<const BasicEncoderParams<T>, TensorView<const T>>(*this);
}

template <class T>
std::size_t BasicEncoderParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.values.size();
  return n;
}

template <class T>
BasicEncoderParams<T> init_params(const EncoderConfig& config, std::uint64_t seed) {
  auto p = BasicEncoderParams<T>::zeros(config);
  for (auto& t : p.tensors()) {
    if (t.shape.size() == 2) {
      const double a = std::sqrt(6.0 / static_cast<double>(t.shape[0] + t.shape[1]));
      Rng rng(derive_seed(seed, t.name));
      for (auto& v : t.values) v = static_cast<T>(rng.uniform(-a, a));
    } else if (ends_with(t.name, "_gain")) {
      std::fill(t.values.begin(), t.values.end(), T{1});
    }
  }
  return p;
}

template <class To, class From>
BasicEncoderParams<To> cast_params(const BasicEncoderParams<From>& params) {
  auto out = BasicEncoderParams<To>::zeros(params.config);
  auto dst = out.tensors();
  const auto src = params.tensors();
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (std::size_t k = 0; k < src[i].values.size(); ++k) dst[i].values[k] = static_cast<To>(src[i].values[k]);
  }
  return out;
}

template <class T>
std::vector<T> mean_pool(const Matrix<T>& hidden, std::span<const std::uint8_t> mask) {
  if (mask.size() != hidden.rows) throw ContractError("mean_pool: mask length differs from hidden rows");
  std::vector<T> pooled(hidden.cols, T{0});
  std::size_t count = 0;
  for (std::size_t t = 0; t < hidden.rows; ++t) {
    if (mask[t] == 0) continue;
    ++count;
    for (std::size_t j = 0; j < hidden.cols; ++j) pooled[j] += hidden(t, j);
  }
  if (count == 0) throw ContractError("mean_pool: attention mask selects no token");
  for (auto& v : pooled) v /= static_cast<T>(count);
  return pooled;
}

template <class T>
ForwardResult<T> forward(const BasicEncoderParams<T>& params, std::span<const preprocess::TokenizedSequence> batch,
                         Mode mode) {
  ForwardResult<T> result;
  result.embeddings = Matrix<T>(batch.size(), params.config.d_teacher);
  ForwardTrace<T> trace;
  trace.items.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto out = forward_item(params, batch[i], trace.items[i]);
    std::copy(out.begin(), out.end(), result.embeddings.row(i).begin());
  }
  if (mode == Mode::kTrain) result.trace = std::move(trace);
  return result;
}

template <class T>
ParamGradients<T> backward(const BasicEncoderParams<T>& params, ForwardTrace<T>& trace,
                           const Matrix<T>& grad_embeddings) {
  if (trace.consumed()) throw ContractError("backward: forward trace already consumed");
  if (grad_embeddings.rows != trace.items.size() || grad_embeddings.cols != params.config.d_teacher) {
    throw ContractError("backward: gradient shape does not match the traced batch");
  }
  trace.mark_consumed();
  auto grads = ParamGradients<T>::zeros(params.config);
  // Items accumulate in batch order.
  for (std::size_t i = 0; i < trace.items.size(); ++i) {
    backward_item(params, trace.items[i], grad_embeddings.row(i), grads);
  }
  return grads;
}

template struct BasicEncoderParams<float>;
template struct BasicEncoderParams<double>;
template BasicEncoderParams<float> init_params<float>(const EncoderConfig&, std::uint64_t);
template BasicEncoderParams<double> init_params<double>(const EncoderConfig&, std::uint64_t);
template BasicEncoderParams<double> cast_params<double, float>(const BasicEncoderParams<float>&);
template BasicEncoderParams<float> cast_params<float, double>(const BasicEncoderParams<double>&);
template std::vector<float> mean_pool<float>(const Matrix<float>&, std::span<const std::uint8_t>);
template std::vector<double> mean_pool<double>(const Matrix<double>&, std::span<const std::uint8_t>);
template ForwardResult<float> forward<float>(const BasicEncoderParams<float>&,
                                             std::span<const preprocess::TokenizedSequence>, Mode);
template ForwardResult<double> forward<double>(const BasicEncoderParams<double>&,
                                               std::span<const preprocess::TokenizedSequence>, Mode);
template ParamGradients<float> backward<float>(const BasicEncoderParams<float>&, ForwardTrace<float>&,
                                               const Matrix<float>&);
template ParamGradients<double> backward<double>(const BasicEncoderParams<double>&, ForwardTrace<double>&,
                                                 const Matrix<double>&);

}  // namespace xlenc::encoder
