#include "xlenc/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "xlenc/corpus.hpp"
#include "xlenc/error.hpp"
#include "xlenc/random.hpp"

namespace fs = std::filesystem;

namespace xlenc::distill {

namespace {

constexpr const char* kMetricsHeader = "step,lr,loss";

std::string metrics_row(std::uint64_t step, double lr, double loss) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%llu,%.10g,%.9g", static_cast<unsigned long long>(step), lr, loss);
  return buf;
}

// Keeps the header and every row up to `step`, so a resumed run appends
// exactly the rows an uninterrupted run would have written.
void truncate_metrics(const fs::path& path, std::uint64_t step) {
  std::vector<std::string> kept{kMetricsHeader};
  if (std::ifstream in(path); in) {
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      if (std::stoull(line.substr(0, comma)) <= step) kept.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write metrics " + path.string());
  for (const auto& l : kept) out << l << '\n';
}

bool same_schedule(TrainConfig a, TrainConfig b) {
  // Stopping point and checkpoint cadence may change between resumptions.
  a.max_steps = b.max_steps;
  a.checkpoint_every = b.checkpoint_every;
  return a == b;
}

fs::path checkpoint_path(const fs::path& dir, std::uint64_t step) {
  return dir / ("checkpoint-" + std::to_string(step) + ".ckpt");
}

}  // namespace

TrainResult train(const TrainOptions& o) {
  const TrainConfig& cfg = o.config;
  cfg.validate();
  if (o.teacher == nullptr || o.vocab == nullptr) throw ContractError("train: teacher and vocabulary are required");

  encoder::EncoderConfig enc = o.encoder_config;
  enc.vocab_size = o.vocab->size();
  enc.max_len = cfg.max_len;
  enc.validate();
  if (o.teacher->dim() != enc.d_teacher) {
    throw ContractError("train: teacher dimension " + std::to_string(o.teacher->dim()) + " differs from d_teacher " +
                        std::to_string(enc.d_teacher));
  }

  const auto pairs = corpus::load_shards(o.shards);
  if (pairs.empty()) throw DataError("train: corpus is empty");
  const std::size_t n = pairs.size();

  // The teacher is frozen, so its targets and all tokenizations are computed once.
  std::vector<preprocess::TokenizedSequence> en_seqs, t_seqs;
  Matrix<float> targets(n, enc.d_teacher);
  en_seqs.reserve(n);
  t_seqs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string en = o.normalizer(pairs[i].english);
    const std::string t = o.normalizer(pairs[i].translated);
    en_seqs.push_back(preprocess::tokenize(en, *o.vocab, cfg.max_len));
    t_seqs.push_back(preprocess::tokenize(t, *o.vocab, cfg.max_len));
    const auto target = o.teacher->embed(en);
    std::copy(target.begin(), target.end(), targets.row(i).begin());
  }

  fs::create_directories(o.out_dir);
  const std::string vocab_digest = o.vocab->digest();
  encoder::EncoderParams params;
  OptimizerState state;
  std::uint64_t step = 0;
  if (o.resume_from) {
    Checkpoint ck = load_checkpoint(*o.resume_from, vocab_digest);
    if (!(ck.encoder_config == enc)) throw DataError("train: checkpoint encoder config differs from this run");
    if (!same_schedule(ck.train_config, cfg)) throw DataError("train: checkpoint training config differs from this run");
    params = std::move(ck.params);
    state = std::move(ck.optimizer);
    step = ck.step;
    spdlog::info("resuming from {} at step {}", o.resume_from->string(), step);
  } else {
    params = encoder::init_params<float>(enc, derive_seed(cfg.seed, "init"));
    state = OptimizerState::zeros(params);
  }

  TrainResult result;
  result.metrics_path = o.out_dir / "metrics.csv";
  truncate_metrics(result.metrics_path, step);
  std::ofstream metrics(result.metrics_path, std::ios::app);
  if (!metrics) throw IoError("cannot append to " + result.metrics_path.string());

  auto snapshot = [&] {
    return Checkpoint{enc, cfg, params, state, vocab_digest, step};
  };

  const std::size_t batch = cfg.batch_size;
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t first_epoch = static_cast<std::size_t>(step / steps_per_epoch);
  spdlog::info("training on {} pairs, {} steps per epoch, {} epochs", n, steps_per_epoch, cfg.max_epochs);

  std::vector<preprocess::TokenizedSequence> inputs;
  bool stopped = false;
  for (std::size_t epoch = first_epoch; epoch < cfg.max_epochs && !stopped; ++epoch) {
    const auto order = corpus::epoch_order(n, cfg.seed, epoch);
    const std::size_t first_batch = epoch == first_epoch ? static_cast<std::size_t>(step % steps_per_epoch) : 0;
    for (std::size_t b = first_batch; b < steps_per_epoch; ++b) {
      if (cfg.max_steps != 0 && step >= cfg.max_steps) {
        stopped = true;
        break;
      }
      const std::size_t begin = b * batch;
      const std::size_t rows = std::min(batch, n - begin);

      // en rows first, then t rows: one forward/backward serves both loss terms.
      inputs.clear();
      Matrix<float> teacher(rows, enc.d_teacher);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t idx = order[begin + r];
        inputs.push_back(en_seqs[idx]);
        std::copy(targets.row(idx).begin(), targets.row(idx).end(), teacher.row(r).begin());
      }
      for (std::size_t r = 0; r < rows; ++r) inputs.push_back(t_seqs[order[begin + r]]);

      auto fwd = encoder::forward(params, std::span<const preprocess::TokenizedSequence>(inputs),
                                  encoder::Mode::kTrain);
      Matrix<float> student_en(rows, enc.d_teacher), student_t(rows, enc.d_teacher);
      const std::size_t half = rows * enc.d_teacher;
      std::copy(fwd.embeddings.data.begin(), fwd.embeddings.data.begin() + static_cast<std::ptrdiff_t>(half),
                student_en.data.begin());
      std::copy(fwd.embeddings.data.begin() + static_cast<std::ptrdiff_t>(half), fwd.embeddings.data.end(),
                student_t.data.begin());

      const auto loss = distill_loss(teacher, student_en, student_t);
      if (!std::isfinite(loss.loss)) {
        throw NonFiniteError("train: non-finite loss at step " + std::to_string(step + 1));
      }
      Matrix<float> grad(2 * rows, enc.d_teacher);
      std::copy(loss.grad_student_en.data.begin(), loss.grad_student_en.data.end(), grad.data.begin());
      std::copy(loss.grad_student_t.data.begin(), loss.grad_student_t.data.end(),
                grad.data.begin() + static_cast<std::ptrdiff_t>(half));
      const auto grads = encoder::backward(params, *fwd.trace, grad);
      adamw_step(params, grads, state, cfg);
      step = state.step;
      result.final_loss = loss.loss;

      metrics << metrics_row(step, lr_at(step, cfg), loss.loss) << '\n';
      if (step % cfg.checkpoint_every == 0) {
        metrics.flush();
        save_checkpoint(snapshot(), checkpoint_path(o.out_dir, step));
      }
      if (step % 100 == 0) spdlog::debug("step {} loss {:.6g}", step, loss.loss);
    }
  }
  metrics.flush();
  if (!metrics) throw IoError("write failed for " + result.metrics_path.string());

  result.final_checkpoint = snapshot();
  result.final_path = o.out_dir / "final.ckpt";
  save_checkpoint(result.final_checkpoint, result.final_path);
  spdlog::info("finished at step {} with loss {:.6g}", step, result.final_loss);
  return result;
}

}  // namespace xlenc::distill
