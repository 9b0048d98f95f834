#include "support.hpp"

#include <stdlib.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "xlenc/eval.hpp"

namespace fs = std::filesystem;

namespace xlenc::testing {

TempDir::TempDir() {
  std::string pattern = (fs::temp_directory_path() / "xlenc-test-XXXXXX").string();
  if (::mkdtemp(pattern.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
}

Matrix<double> random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
  Matrix<double> m(rows, cols);
  for (auto& x : m.data) x = rng.uniform(lo, hi);
  return m;
}

Matrix<double> integer_matrix(std::size_t rows, std::size_t cols, Rng& rng, int lo, int hi) {
  Matrix<double> m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    bool nonzero = false;
    while (!nonzero) {
      for (std::size_t c = 0; c < cols; ++c) {
        m(r, c) = static_cast<double>(lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))));
        nonzero = nonzero || m(r, c) != 0.0;
      }
    }
  }
  return m;
}

double oracle_match_accuracy(const Matrix<double>& english, const Matrix<double>& translated, bool en_to_t) {
  const std::size_t n = english.rows;
  std::vector<std::vector<double>> sim(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      sim[i][j] = en_to_t ? eval::cosine<double>(english.row(i), translated.row(j))
                          : eval::cosine<double>(translated.row(i), english.row(j));
    }
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = sim[i][0];
    for (double s : sim[i]) best = std::max(best, s);
    std::vector<std::size_t> argmax;
    for (std::size_t j = 0; j < n; ++j) {
      if (sim[i][j] == best) argmax.push_back(j);
    }
    if (std::find(argmax.begin(), argmax.end(), i) != argmax.end()) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double oracle_weighted_avg_cosine(const Matrix<double>& embeddings, std::span<const std::string> labels) {
  std::vector<std::vector<double>> unit;
  for (std::size_t i = 0; i < embeddings.rows; ++i) {
    double norm = 0;
    for (double x : embeddings.row(i)) norm += x * x;
    norm = std::sqrt(norm);
    std::vector<double> u;
    for (double x : embeddings.row(i)) u.push_back(x / norm);
    unit.push_back(std::move(u));
  }
  std::map<std::string, std::vector<std::size_t>> classes;
  for (std::size_t i = 0; i < labels.size(); ++i) classes[labels[i]].push_back(i);
  double total = 0, weighted = 0;
  for (const auto& [label, members] : classes) {
    if (members.size() < 2) continue;
    double sum = 0;
    for (auto i : members) {
      for (auto j : members) {
        if (i == j) continue;
        double dot = 0;
        for (std::size_t k = 0; k < unit[i].size(); ++k) dot += unit[i][k] * unit[j][k];
        sum += dot;
      }
    }
    const double n = static_cast<double>(members.size());
    weighted += n * (sum / (n * (n - 1)));
    total += n;
  }
  return weighted / total;
}

preprocess::TokenizedSequence random_sequence(std::size_t vocab_size, std::size_t max_len, Rng& rng) {
  preprocess::TokenizedSequence s;
  const std::size_t n = 1 + rng.below(max_len);
  s.ids.assign(max_len, preprocess::kPadId);
  s.mask.assign(max_len, 0);
  for (std::size_t i = 0; i < n; ++i) {
    s.ids[i] = static_cast<std::int32_t>(1 + rng.below(vocab_size - 1));
    s.mask[i] = 1;
  }
  return s;
}

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace {

double objective(const encoder::BasicEncoderParams<double>& params,
                 std::span<const preprocess::TokenizedSequence> batch, const Matrix<double>& g) {
  const auto out = encoder::forward(params, batch, encoder::Mode::kInfer).embeddings;
  double f = 0;
  for (std::size_t i = 0; i < g.data.size(); ++i) f += g.data[i] * out.data[i];
  return f;
}

}  // namespace

GradCheckResult check_encoder_gradients(const encoder::EncoderConfig& config, std::uint64_t seed, std::size_t batch) {
  Rng rng(derive_seed(seed, "gradcheck"));
  auto params = encoder::init_params<double>(config, seed);
  for (auto& t : params.tensors()) {
    for (auto& x : t.values) x += rng.uniform(-0.1, 0.1);
  }
  std::vector<preprocess::TokenizedSequence> seqs;
  for (std::size_t b = 0; b < batch; ++b) seqs.push_back(random_sequence(config.vocab_size, config.max_len, rng));
  const Matrix<double> g = random_matrix(batch, config.d_teacher, rng);

  auto fwd = encoder::forward(params, std::span<const preprocess::TokenizedSequence>(seqs), encoder::Mode::kTrain);
  const auto grads = encoder::backward(params, *fwd.trace, g);

  GradCheckResult result;
  auto analytic = grads.tensors();
  auto views = params.tensors();
  for (std::size_t t = 0; t < views.size(); ++t) {
    for (std::size_t k = 0; k < views[t].values.size(); ++k) {
      double& theta = views[t].values[k];
      const double saved = theta;
      theta = saved + kGradCheckStep;
      const double plus = objective(params, seqs, g);
      theta = saved - kGradCheckStep;
      const double minus = objective(params, seqs, g);
      theta = saved;
      const double numeric = (plus - minus) / (2 * kGradCheckStep);
      const double err = relative_error(analytic[t].values[k], numeric, kGradCheckFloor);
      ++result.entries;
      if (err > kGradCheckTolerance) ++result.failures;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = views[t].name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return result;
}

std::vector<corpus::ParallelPair> random_pairs(std::size_t n, Rng& rng, double p_singleton, std::size_t n_groups) {
  static const char* const kWords[] = {"flood", "fire", "help", "road", "closed", "water", "rising", "stay", "safe",
                                       "we", "need", "food"};
  static const char* const kLangs[] = {"es", "fr", "de", "ne", "tl"};
  auto sentence = [&] {
    std::string s;
    const std::size_t len = 1 + rng.below(5);
    for (std::size_t i = 0; i < len; ++i) {
      if (i) s += ' ';
      s += kWords[rng.below(std::size(kWords))];
    }
    return s;
  };
  std::vector<corpus::ParallelPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    corpus::ParallelPair p;
    p.english = sentence();
    p.translated = sentence() + " " + std::to_string(i);
    const std::size_t g = rng.below(n_groups);
    p.lang = kLangs[g % std::size(kLangs)];
    p.dataset = "ds" + std::to_string(g / std::size(kLangs));
    if (rng.uniform01() < p_singleton) {
      const auto kind = rng.below(3);
      if (kind == 0) p.english = "";
      if (kind == 1) p.translated = "  ";
      if (kind == 2) p.english = "\t";
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string corpus_property_violation(std::uint64_t seed, const fs::path& scratch) {
  Rng rng(seed);
  const std::size_t n = rng.below(80);
  const std::size_t groups = 1 + rng.below(7);
  const std::size_t cap = 1 + rng.below(12);
  const std::size_t shard_size = 1 + rng.below(10);
  const auto pairs = random_pairs(n, rng, rng.uniform01() * 0.4, groups);
  const std::string tag = "seed " + std::to_string(seed) + ": ";

  std::vector<corpus::ParallelPair> complete;
  std::map<corpus::GroupKey, std::uint64_t> raw, singles;
  for (const auto& p : pairs) {
    const corpus::GroupKey key{p.dataset, p.lang};
    ++raw[key];
    if (p.complete()) {
      complete.push_back(p);
    } else {
      ++singles[key];
    }
  }

  corpus::CorpusStats mem_stats;
  mem_stats.count_raw(pairs);
  if (corpus::filter_singletons(pairs, &mem_stats) != complete) return tag + "filter_singletons kept the wrong pairs";
  if (mem_stats.dropped_singletons != pairs.size() - complete.size()) return tag + "singleton count is off";

  const fs::path file = scratch / ("corpus-" + std::to_string(seed) + ".jsonl");
  corpus::write_pair_file(file, pairs);
  corpus::CorpusStats stats;
  const auto parsed = corpus::parse_pair_file(file, corpus::PairFormat::kJsonl, &stats);
  if (parsed != complete) return tag + "parse did not drop exactly the singletons";
  const auto filtered = corpus::filter_singletons(parsed, &stats);
  const auto capped = corpus::cap_per_source(filtered, cap, &stats);

  std::map<corpus::GroupKey, std::uint64_t> kept_count, seen;
  std::vector<corpus::ParallelPair> expected_capped;
  for (const auto& p : complete) {
    if (++seen[{p.dataset, p.lang}] <= cap) expected_capped.push_back(p);
  }
  if (capped != expected_capped) return tag + "cap did not keep the first cap pairs of each group";
  for (const auto& p : capped) ++kept_count[{p.dataset, p.lang}];
  for (const auto& [key, count] : seen) {
    if (kept_count[key] != std::min<std::uint64_t>(count, cap)) return tag + "group size is not min(size, cap)";
  }

  for (const auto& [key, g] : stats.groups) {
    if (g.raw != raw[key]) return tag + "raw count mismatch for " + key.first + "/" + key.second;
    if (g.dropped_singletons != singles[key]) return tag + "singleton count mismatch";
    if (g.retained() != kept_count[key]) return tag + "retained count mismatch";
    if (g.retained() + g.dropped_singletons + g.capped != g.raw) return tag + "stats do not reconcile";
  }
  if (stats.raw() != pairs.size() || stats.retained() != capped.size()) return tag + "totals do not reconcile";

  const fs::path dir = scratch / ("shards-" + std::to_string(seed));
  const auto shards = corpus::shard_training_files(capped, shard_size, dir);
  if (shards.size() != (capped.size() + shard_size - 1) / shard_size) return tag + "wrong shard count";
  for (const auto& s : shards) {
    if (corpus::parse_pair_file(s, corpus::PairFormat::kJsonl).size() > shard_size) return tag + "oversized shard";
  }
  if (corpus::load_shards(shards) != capped) return tag + "shard concatenation differs from input";

  fs::remove_all(dir);
  fs::remove(file);
  return {};
}

std::string random_fuzz_text(Rng& rng) {
  static const char* const kPieces[] = {
      "a",        "Z",       "9",         "_",       " ",        "  ",       "\t",      "\n",      "\r\n",
      "http://",  "https://", "www.",     "HTTP://", "@",        "@user",    "user@",   "&",       ";",
      "&amp;",    "&lt;",    "&#64;",     "&#x40;",  "&#x1F525;", "&nbsp;",  "&#0;",    "&bogus;", "#",
      "\xc3\xa9",  "e\xcc\x81", "\xe2\x84\xab",        "\xef\xbf\xbd", "\U0001F525", "❤️", "\U0001F44D\U0001F3FD",
      "\xe3\x80\x80",  // ideographic space
      "\xff",     "\xc3",    "\xe2\x80",  ".",       "!",        ":",        "/",       "HTTPURL", "@MENTION",
      ":fire:",   "日本",    "\xcc\x81",  "\x01",    "&amp;amp;", "www.x",   "\xef\xb8\x8f"};
  std::string s;
  const std::size_t n = rng.below(24);
  for (std::size_t i = 0; i < n; ++i) s += kPieces[rng.below(std::size(kPieces))];
  return s;
}

std::vector<GoldenCase> load_golden_cases(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<GoldenCase> cases;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    std::string input;
    if (j.contains("input_hex")) {
      const std::string hex = j["input_hex"];
      for (std::size_t i = 0; i + 1 < hex.size(); i += 2) {
        input.push_back(static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
      }
    } else {
      input = j["input"];
    }
    cases.push_back({j["step"], input, j["expected"]});
  }
  return cases;
}

}  // namespace xlenc::testing
