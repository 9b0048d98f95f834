#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <map>

#include "support.hpp"
#include "xlenc/embedding_io.hpp"
#include "xlenc/encoder.hpp"
#include "xlenc/error.hpp"
#include "xlenc/student.hpp"
#include "xlenc/teacher.hpp"
#include "xlenc/vocab.hpp"

using namespace xlenc;
using namespace xlenc::encoder;
using preprocess::TokenizedSequence;
using xlenc::testing::TempDir;

namespace {

EncoderConfig small_config(std::size_t blocks = 1, std::size_t d_model = 8) {
  EncoderConfig c;
  c.vocab_size = 20;
  c.d_model = d_model;
  c.n_blocks = blocks;
  c.n_heads = 2;
  c.d_teacher = 5;
  c.max_len = 6;
  return c;
}

TokenizedSequence seq(std::vector<std::int32_t> real, std::size_t max_len) {
  TokenizedSequence s;
  s.ids.assign(max_len, 0);
  s.mask.assign(max_len, 0);
  for (std::size_t i = 0; i < real.size(); ++i) {
    s.ids[i] = real[i];
    s.mask[i] = 1;
  }
  return s;
}

template <class T>
BasicEncoderParams<T> jittered(const EncoderConfig& c, std::uint64_t seed) {
  auto p = init_params<T>(c, seed);
  Rng rng(seed + 1000);
  for (auto& t : p.tensors()) {
    for (auto& x : t.values) x += static_cast<T>(rng.uniform(-0.1, 0.1));
  }
  return p;
}

}  // namespace

TEST(EncoderConfig, Validation) {
  auto c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ContractError);
  c = small_config();
  c.n_blocks = 3;
  EXPECT_THROW(c.validate(), ContractError);
  c = small_config();
  c.vocab_size = 0;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(InitParams, DeterministicInSeed) {
  const auto c = small_config(2);
  EXPECT_EQ(init_params<float>(c, 3), init_params<float>(c, 3));
  EXPECT_NE(init_params<float>(c, 3), init_params<float>(c, 4));
}

TEST(InitParams, ShapesGainsBiasesAndXavierBound) {
  const auto c = small_config(2);
  const auto p = init_params<double>(c, 1);
  EXPECT_EQ(p.token_embedding.rows, c.vocab_size);
  EXPECT_EQ(p.token_embedding.cols, c.d_model);
  EXPECT_EQ(p.position_embedding.rows, c.max_len);
  EXPECT_EQ(p.head.cols, c.d_teacher);
  EXPECT_EQ(p.blocks.size(), 2u);
  EXPECT_EQ(p.blocks[0].ff_in.cols, 4 * c.d_model);
  for (const auto& t : p.tensors()) {
    if (t.shape.size() == 2) {
      const double a = std::sqrt(6.0 / static_cast<double>(t.shape[0] + t.shape[1]));
      for (double v : t.values) EXPECT_LE(std::abs(v), a) << t.name;
    } else {
      const bool gain = t.name.find("_gain") != std::string::npos;
      for (double v : t.values) EXPECT_EQ(v, gain ? 1.0 : 0.0) << t.name;
    }
  }
}

TEST(InitParams, TensorOrderAndCount) {
  const auto c = small_config(1);
  const auto p = init_params<float>(c, 0);
  const auto views = p.tensors();
  std::vector<std::string> names;
  std::size_t total = 0;
  for (const auto& v : views) {
    names.push_back(v.name);
    total += v.values.size();
  }
  EXPECT_EQ(names.front(), "token_embedding");
  EXPECT_EQ(names[1], "position_embedding");
  EXPECT_EQ(names[2], "blocks.0.ln1_gain");
  EXPECT_EQ(names.back(), "head_bias");
  EXPECT_EQ(names.size(), 2u + 12u + 2u);
  const std::size_t d = c.d_model;
  const std::size_t expected = c.vocab_size * d + c.max_len * d + (4 * d + 4 * d * d + 8 * d * d + 4 * d + d) +
                               d * c.d_teacher + c.d_teacher;
  EXPECT_EQ(total, expected);
  EXPECT_EQ(p.parameter_count(), expected);
}

TEST(MeanPool, Examples) {
  Matrix<double> h(2, 2);
  h.data = {1, 2, 3, 4};
  const std::vector<std::uint8_t> both{1, 1}, first{1, 0};
  EXPECT_EQ(mean_pool(h, std::span<const std::uint8_t>(both)), (std::vector<double>{2, 3}));
  h.data = {1, 2, 9, 9};
  EXPECT_EQ(mean_pool(h, std::span<const std::uint8_t>(first)), (std::vector<double>{1, 2}));
  Matrix<double> same(3, 2);
  same.data = {0.5, -1, 0.5, -1, 0.5, -1};
  const std::vector<std::uint8_t> two{1, 1, 0};
  EXPECT_EQ(mean_pool(same, std::span<const std::uint8_t>(two)), (std::vector<double>{0.5, -1}));
}

TEST(MeanPool, EmptyMaskIsAContractViolation) {
  Matrix<double> h(2, 2);
  const std::vector<std::uint8_t> none{0, 0}, short_mask{1};
  EXPECT_THROW(mean_pool(h, std::span<const std::uint8_t>(none)), ContractError);
  EXPECT_THROW(mean_pool(h, std::span<const std::uint8_t>(short_mask)), ContractError);
}

TEST(Forward, ShapesAndTraceOnlyInTrainMode) {
  const auto c = small_config();
  const auto p = init_params<float>(c, 2);
  const std::vector<TokenizedSequence> batch{seq({4, 5}, 6), seq({7}, 6), seq({1, 2, 3, 4, 5, 6}, 6)};
  const auto infer = forward(p, std::span<const TokenizedSequence>(batch), Mode::kInfer);
  EXPECT_EQ(infer.embeddings.rows, 3u);
  EXPECT_EQ(infer.embeddings.cols, c.d_teacher);
  EXPECT_FALSE(infer.trace.has_value());
  const auto train = forward(p, std::span<const TokenizedSequence>(batch), Mode::kTrain);
  EXPECT_TRUE(train.trace.has_value());
  EXPECT_EQ(train.embeddings, infer.embeddings);
}

TEST(Forward, NoBlocksIsProjectedMeanOfEmbeddings) {
  const auto c = small_config(0);
  const auto p = jittered<double>(c, 5);
  const auto s = seq({3, 9, 3, 11}, 6);
  const auto out = forward(p, std::span<const TokenizedSequence>(&s, 1), Mode::kInfer).embeddings;
  std::vector<double> pooled(c.d_model, 0.0);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t j = 0; j < c.d_model; ++j) {
      pooled[j] += (p.token_embedding(static_cast<std::size_t>(s.ids[t]), j) + p.position_embedding(t, j)) / 4.0;
    }
  }
  for (std::size_t k = 0; k < c.d_teacher; ++k) {
    double expected = p.head_bias[k];
    for (std::size_t j = 0; j < c.d_model; ++j) expected += pooled[j] * p.head(j, k);
    EXPECT_NEAR(out(0, k), expected, 1e-12);
  }
}

TEST(Forward, PaddedPositionsDoNotMatter) {
  for (std::size_t blocks : {0u, 1u, 2u}) {
    const auto c = small_config(blocks);
    const auto p = jittered<double>(c, 8);
    auto a = seq({4, 5, 6}, 6);
    auto b = a;
    b.ids[3] = 17;
    b.ids[5] = 2;
    const auto ea = forward(p, std::span<const TokenizedSequence>(&a, 1), Mode::kInfer).embeddings;
    const auto eb = forward(p, std::span<const TokenizedSequence>(&b, 1), Mode::kInfer).embeddings;
    EXPECT_EQ(ea, eb);
  }
}

TEST(Forward, BatchEqualsItemsConcatenated) {
  const auto c = small_config(2);
  const auto p = jittered<float>(c, 9);
  Rng rng(1);
  std::vector<TokenizedSequence> batch;
  for (int i = 0; i < 7; ++i) batch.push_back(xlenc::testing::random_sequence(c.vocab_size, c.max_len, rng));
  const auto all = forward(p, std::span<const TokenizedSequence>(batch), Mode::kInfer).embeddings;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto one = forward(p, std::span<const TokenizedSequence>(&batch[i], 1), Mode::kInfer).embeddings;
    for (std::size_t k = 0; k < c.d_teacher; ++k) EXPECT_EQ(one(0, k), all(i, k));
  }
}

TEST(Forward, Deterministic) {
  const auto c = small_config(2);
  const auto p = jittered<float>(c, 10);
  const auto s = seq({1, 2, 3}, 6);
  const auto a = forward(p, std::span<const TokenizedSequence>(&s, 1), Mode::kInfer).embeddings;
  const auto b = forward(p, std::span<const TokenizedSequence>(&s, 1), Mode::kInfer).embeddings;
  EXPECT_EQ(a, b);
}

TEST(Forward, RejectsBadSequences) {
  const auto c = small_config();
  const auto p = init_params<float>(c, 0);
  auto check = [&](const TokenizedSequence& s) {
    EXPECT_THROW(forward(p, std::span<const TokenizedSequence>(&s, 1), Mode::kInfer), ContractError);
  };
  check(seq({20}, 6));
  check(seq({-1}, 6));
  check(seq({1, 2}, 7));
  auto holes = seq({1, 2}, 6);
  holes.mask[3] = 1;
  check(holes);
  check(seq({}, 6));
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const auto c = small_config(2);
  const auto p = jittered<double>(c, 1);
  const auto s = seq({1, 2, 3}, 6);
  auto f = forward(p, std::span<const TokenizedSequence>(&s, 1), Mode::kTrain);
  const auto g = backward(p, *f.trace, Matrix<double>(1, c.d_teacher, 0.0));
  for (const auto& t : g.tensors()) {
    for (double v : t.values) EXPECT_EQ(v, 0.0) << t.name;
  }
}

TEST(Backward, UnusedTokenRowsHaveZeroGradient) {
  const auto c = small_config(1);
  const auto p = jittered<double>(c, 2);
  const std::vector<TokenizedSequence> batch{seq({4, 5}, 6), seq({5, 6, 4}, 6)};
  auto f = forward(p, std::span<const TokenizedSequence>(batch), Mode::kTrain);
  Rng rng(3);
  const auto g = backward(p, *f.trace, xlenc::testing::random_matrix(2, c.d_teacher, rng));
  for (std::size_t row = 0; row < c.vocab_size; ++row) {
    const bool used = row == 4 || row == 5 || row == 6;
    double norm = 0;
    for (std::size_t j = 0; j < c.d_model; ++j) norm += std::abs(g.token_embedding(row, j));
    if (used) {
      EXPECT_GT(norm, 0.0) << row;
    } else {
      EXPECT_EQ(norm, 0.0) << row;
    }
  }
  for (std::size_t t = 3; t < c.max_len; ++t) {
    for (std::size_t j = 0; j < c.d_model; ++j) EXPECT_EQ(g.position_embedding(t, j), 0.0);
  }
}

TEST(Backward, TraceIsSingleUse) {
  const auto c = small_config();
  const auto p = init_params<float>(c, 0);
  const auto s = seq({1}, 6);
  auto f = forward(p, std::span<const TokenizedSequence>(&s, 1), Mode::kTrain);
  const Matrix<float> g(1, c.d_teacher, 1.0f);
  EXPECT_NO_THROW(backward(p, *f.trace, g));
  EXPECT_THROW(backward(p, *f.trace, g), ContractError);
}

TEST(Backward, GradientShapeMustMatch) {
  const auto c = small_config();
  const auto p = init_params<float>(c, 0);
  const auto s = seq({1}, 6);
  auto f = forward(p, std::span<const TokenizedSequence>(&s, 1), Mode::kTrain);
  EXPECT_THROW(backward(p, *f.trace, Matrix<float>(2, c.d_teacher)), ContractError);
}

TEST(Backward, MatchesFiniteDifferencesOnReferenceConfig) {
  const auto r = xlenc::testing::check_encoder_gradients(small_config(1, 8), 40);
  EXPECT_EQ(r.failures, 0u) << "worst " << r.worst << " rel " << r.max_rel_error;
  EXPECT_GT(r.entries, 100u);
}

TEST(Backward, MatchesFiniteDifferencesOnRandomConfigs) {
  Rng rng(41);
  const std::size_t widths[] = {4, 8, 16};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto c = small_config(rng.below(3), widths[rng.below(3)]);
    c.n_heads = c.d_model == 4 ? 2 : (rng.below(2) ? 2 : 4);
    c.max_len = 2 + rng.below(5);
    const auto r = xlenc::testing::check_encoder_gradients(c, seed);
    EXPECT_EQ(r.failures, 0u) << "seed " << seed << " blocks " << c.n_blocks << " d_model " << c.d_model
                              << ": worst " << r.worst << " rel " << r.max_rel_error;
  }
}

TEST(Backward, FloatAndDoubleAgree) {
  const auto c = small_config(1);
  const auto pd = jittered<double>(c, 12);
  const auto pf = cast_params<float>(pd);
  const auto s = seq({3, 4, 5, 6}, 6);
  Rng rng(5);
  const auto gd = xlenc::testing::random_matrix(1, c.d_teacher, rng);
  Matrix<float> gf(1, c.d_teacher);
  for (std::size_t k = 0; k < gd.data.size(); ++k) gf.data[k] = static_cast<float>(gd.data[k]);
  auto fd = forward(pd, std::span<const TokenizedSequence>(&s, 1), Mode::kTrain);
  auto ff = forward(pf, std::span<const TokenizedSequence>(&s, 1), Mode::kTrain);
  const auto grad_d = backward(pd, *fd.trace, gd);
  const auto grad_f = backward(pf, *ff.trace, gf);
  const auto vd = grad_d.tensors();
  const auto vf = grad_f.tensors();
  for (std::size_t t = 0; t < vd.size(); ++t) {
    for (std::size_t k = 0; k < vd[t].values.size(); ++k) {
      EXPECT_NEAR(vf[t].values[k], vd[t].values[k], 1e-4) << vd[t].name;
    }
  }
}

TEST(CastParams, FloatRoundTripIsExact) {
  const auto p = init_params<float>(small_config(2), 4);
  EXPECT_EQ(cast_params<float>(cast_params<double>(p)), p);
}

TEST(SyntheticTeacher, RecomputesFromConstruction) {
  const SyntheticTeacher t(6, 42);
  const std::string sentence = "help help needed ,";
  std::map<std::string, int> counts{{"help", 2}, {"needed", 1}, {",", 1}};
  std::vector<double> sum(6, 0.0);
  for (const auto& [tok, n] : counts) {
    Rng rng(derive_seed(42, tok));
    for (auto& x : sum) x += n * rng.uniform(-1.0, 1.0);
  }
  double norm = 0;
  for (double x : sum) norm += x * x;
  norm = std::sqrt(norm);
  const auto v = t.embed(sentence);
  ASSERT_EQ(v.size(), 6u);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(v[k], static_cast<float>(sum[k] / norm));
}

TEST(SyntheticTeacher, FrozenAndOrderFree) {
  const SyntheticTeacher t(16, 7);
  EXPECT_EQ(t.embed("a b c"), t.embed("a b c"));
  EXPECT_EQ(t.embed("a b c"), t.embed("c a b"));
  EXPECT_NE(t.embed("a b c"), t.embed("a b d"));
  EXPECT_NE(SyntheticTeacher(16, 8).embed("a b c"), t.embed("a b c"));
  const auto empty = t.embed("");
  double norm = 0;
  for (float x : empty) norm += static_cast<double>(x) * x;
  EXPECT_NEAR(norm, 1.0, 1e-6);
}

TEST(FileTeacher, ReturnsStoredRowsAndNamesMisses) {
  EmbeddingTable table;
  table.dim = 2;
  table.add("hello", {1.0f, 2.0f});
  table.add("bye", {3.0f, 4.0f});
  table.add("hello", {9.0f, 9.0f});
  const FileTeacher t(table);
  EXPECT_EQ(t.dim(), 2u);
  EXPECT_EQ(t.embed("bye"), (std::vector<float>{3.0f, 4.0f}));
  EXPECT_EQ(t.embed("hello"), (std::vector<float>{1.0f, 2.0f}));
  try {
    t.embed("unknown sentence");
    FAIL() << "expected a miss";
  } catch (const TeacherMissError& e) {
    EXPECT_EQ(e.sentence(), "unknown sentence");
    EXPECT_NE(std::string(e.what()).find("unknown sentence"), std::string::npos);
  }
}

TEST(EmbeddingFile, RoundTripIsBitwise) {
  TempDir dir;
  EmbeddingTable table;
  table.dim = 3;
  table.add("first", {1.5f, -0.0f, 3.25e-20f});
  table.add("", {std::numeric_limits<float>::denorm_min(), 0.1f, -7.0f});
  table.add("\xe6\x97\xa5\xe6\x9c\xac \xf0\x9f\x94\xa5", {1.0f, 2.0f, 3.0f});
  write_embedding_file(dir / "e.bin", table);
  const auto back = read_embedding_file(dir / "e.bin");
  EXPECT_EQ(back.dim, 3u);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back.sentences, table.sentences);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(std::memcmp(back.vectors[i].data(), table.vectors[i].data(), 3 * sizeof(float)), 0);
  }
}

TEST(EmbeddingFile, LayoutIsHeaderLineThenRecords) {
  TempDir dir;
  EmbeddingTable table;
  table.dim = 1;
  table.add("ab", {1.0f});
  write_embedding_file(dir / "e.bin", table);
  const std::string bytes = xlenc::testing::read_file(dir / "e.bin");
  const std::string header = "{\"dim\":1,\"count\":1}\n";
  ASSERT_EQ(bytes.size(), header.size() + 4 + 2 + 4);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  EXPECT_EQ(bytes.substr(header.size(), 4), std::string("\x02\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(header.size() + 4, 2), "ab");
  EXPECT_EQ(bytes.substr(header.size() + 6), std::string("\x00\x00\x80\x3f", 4));
}

TEST(EmbeddingFile, DamagedFilesAreDataErrors) {
  TempDir dir;
  EmbeddingTable table;
  table.dim = 2;
  table.add("x", {1.0f, 2.0f});
  write_embedding_file(dir / "e.bin", table);
  const std::string bytes = xlenc::testing::read_file(dir / "e.bin");
  xlenc::testing::write_file(dir / "short.bin", bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(read_embedding_file(dir / "short.bin"), DataError);
  xlenc::testing::write_file(dir / "long.bin", bytes + "x");
  EXPECT_THROW(read_embedding_file(dir / "long.bin"), DataError);
  xlenc::testing::write_file(dir / "nohdr.bin", "garbage");
  EXPECT_THROW(read_embedding_file(dir / "nohdr.bin"), DataError);
  EXPECT_THROW(read_embedding_file(dir / "missing.bin"), IoError);
}

TEST(Student, EmbedsRawTextInOrder) {
  const preprocess::Vocabulary vocab({"fire", "help", "water"});
  auto c = small_config(1);
  c.vocab_size = vocab.size();
  const Student s(init_params<float>(c, 3), vocab);
  const std::vector<std::string> texts{"FIRE!!", "help http://x.y", "FIRE!!", "water"};
  const auto m = s.embed(texts);
  ASSERT_EQ(m.rows, 4u);
  for (std::size_t k = 0; k < m.cols; ++k) EXPECT_EQ(m(0, k), m(2, k));
  const auto one = s.embed_one("help http://x.y");
  for (std::size_t k = 0; k < m.cols; ++k) EXPECT_EQ(one[k], m(1, k));
  EXPECT_EQ(s.prepare("help http://x.y").ids[1], preprocess::kUrlId);
}

TEST(Student, LargeInputsSpanSeveralInternalBatches) {
  const preprocess::Vocabulary vocab({"a", "b"});
  auto c = small_config(1);
  c.vocab_size = vocab.size();
  const Student s(init_params<float>(c, 3), vocab);
  std::vector<std::string> texts;
  for (int i = 0; i < 150; ++i) texts.push_back(i % 2 ? "a b" : "b");
  const auto m = s.embed(texts);
  const auto last = s.embed_one(texts.back());
  for (std::size_t k = 0; k < m.cols; ++k) EXPECT_EQ(m(149, k), last[k]);
}
