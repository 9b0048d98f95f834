#include "xlenc/student.hpp"

#include "xlenc/error.hpp"

namespace xlenc::encoder {

namespace {
constexpr std::size_t kEmbedBatch = 64;
}

Student::Student(EncoderParams params, preprocess::Vocabulary vocab, preprocess::Normalizer normalizer)
    : params_(std::move(params)), vocab_(std::move(vocab)), normalizer_(normalizer) {
  if (vocab_.size() != params_.config.vocab_size) {
    throw ContractError("student: vocabulary size " + std::to_string(vocab_.size()) +
                        " differs from encoder vocab_size " + std::to_string(params_.config.vocab_size));
  }
}

preprocess::TokenizedSequence Student::prepare(const std::string& raw_text) const {
  return preprocess::tokenize(normalizer_(raw_text), vocab_, params_.config.max_len);
}

Matrix<float> Student::embed(std::span<const std::string> raw_texts) const {
  Matrix<float> out(raw_texts.size(), params_.config.d_teacher);
  std::vector<preprocess::TokenizedSequence> batch;
  for (std::size_t begin = 0; begin < raw_texts.size(); begin += kEmbedBatch) {
    const std::size_t end = std::min(raw_texts.size(), begin + kEmbedBatch);
    batch.clear();
    for (std::size_t i = begin; i < end; ++i) batch.push_back(prepare(raw_texts[i]));
    const auto result = forward(params_, std::span<const preprocess::TokenizedSequence>(batch), Mode::kInfer);
    std::copy(result.embeddings.data.begin(), result.embeddings.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(begin * out.cols));
  }
  return out;
}

std::vector<float> Student::embed_one(const std::string& raw_text) const {
  const auto m = embed(std::span<const std::string>(&raw_text, 1));
  return m.data;
}

}  // namespace xlenc::encoder
