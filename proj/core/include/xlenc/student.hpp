#pragma once

#include <span>
#include <string>
#include <vector>

#include "xlenc/encoder.hpp"
#include "xlenc/normalize.hpp"
#include "xlenc/vocab.hpp"

namespace xlenc::encoder {

/// Trained encoder bundled with its vocabulary: raw text in, sentence
/// embeddings out.
class Student {
 public:
  Student(EncoderParams params, preprocess::Vocabulary vocab,
          preprocess::Normalizer normalizer = preprocess::Normalizer());

  /// Normalize, tokenize to config.max_len, and embed. Rows follow input order.
  Matrix<float> embed(std::span<const std::string> raw_texts) const;
  std::vector<float> embed_one(const std::string& raw_text) const;

  preprocess::TokenizedSequence prepare(const std::string& raw_text) const;

  const EncoderParams& params() const { return params_; }
  const preprocess::Vocabulary& vocab() const { return vocab_; }
  const preprocess::Normalizer& normalizer() const { return normalizer_; }

 private:
  EncoderParams params_;
  preprocess::Vocabulary vocab_;
  preprocess::Normalizer normalizer_;
};

}  // namespace xlenc::encoder
