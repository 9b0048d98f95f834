#include "cli.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "xlenc/checkpoint.hpp"
#include "xlenc/corpus.hpp"
#include "xlenc/embedding_io.hpp"
#include "xlenc/error.hpp"
#include "xlenc/eval.hpp"
#include "xlenc/normalize.hpp"
#include "xlenc/student.hpp"
#include "xlenc/teacher.hpp"
#include "xlenc/train.hpp"
#include "xlenc/vocab.hpp"

#ifndef XLENC_VERSION
#define XLENC_VERSION "unknown"
#endif

namespace xlenc::cli {

namespace {

namespace fs = std::filesystem;
using preprocess::EmojiTable;
using preprocess::Normalizer;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- helpers

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<fs::path> to_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

// The normalizer keeps a pointer to its emoji table, so the table lives here.
class TextSetup {
 public:
  explicit TextSetup(const std::string& emoji_table_path) {
    if (!emoji_table_path.empty()) custom_ = EmojiTable::load(emoji_table_path);
  }
  TextSetup(const TextSetup&) = delete;
  TextSetup& operator=(const TextSetup&) = delete;
  Normalizer normalizer() const { return custom_ ? Normalizer(*custom_) : Normalizer(); }

 private:
  std::optional<EmojiTable> custom_;
};

encoder::Student load_student(const std::string& checkpoint, const std::string& vocab_path,
                              const Normalizer& normalizer) {
  auto vocab = preprocess::Vocabulary::load(vocab_path);
  auto ckpt = distill::load_checkpoint(checkpoint, vocab.digest());
  return encoder::Student(std::move(ckpt.params), std::move(vocab), normalizer);
}

void require_clean(const corpus::CorpusStats& stats, bool allow_malformed) {
  if (stats.malformed == 0) return;
  if (!allow_malformed) {
    throw DataError(stats.malformed_lines.front() + " (" + std::to_string(stats.malformed) +
                    " malformed line(s); pass --allow-malformed to skip them)");
  }
  spdlog::warn("skipped {} malformed line(s)", stats.malformed);
}

bool use_color(const std::string& mode) {
  const char* no_color = std::getenv("NO_COLOR");
  if (no_color != nullptr && *no_color != '\0') return false;
  if (mode == "always") return true;
  if (mode == "never") return false;
  return ::isatty(STDOUT_FILENO) != 0;
}

void add_config(CLI::App* sub, std::string& config, std::string& write_config) {
  sub->add_option("--config", config,
                  "Read options from a flat 'key = value' file (keys are long flag names; flags on the "
                  "command line take precedence)")
      ->configurable(false);
  sub->add_option("--write-config", write_config, "Write the effective options as a config file and exit")
      ->configurable(false);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

bool names_option(const CLI::Option& opt, const std::string& arg) {
  for (const auto& l : opt.get_lnames()) {
    const std::string flag = "--" + l;
    if (arg == flag || arg.rfind(flag + "=", 0) == 0) return true;
  }
  for (const auto& s : opt.get_snames()) {
    if (arg.size() >= 2 && arg[0] == '-' && arg[1] != '-' && arg.rfind("-" + s, 0) == 0) return true;
  }
  return false;
}

// Rewrites `<sub> ... --config FILE ...` into `<sub> --key=value ... ...`,
// leaving out keys that the command line sets itself.
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
  std::size_t pos = 0;
  CLI::App* sub = nullptr;
  for (; pos < args.size(); ++pos) {
    if (!args[pos].empty() && args[pos][0] != '-') {
      sub = app.get_subcommand_no_throw(args[pos]);
      break;
    }
  }
  if (sub == nullptr) return args;

  std::string config;
  std::vector<std::string> rest;
  for (std::size_t i = pos + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (config.empty()) return args;

  std::ifstream in(config);
  if (!in) throw IoError("cannot open config file " + config);
  std::vector<std::string> injected;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    const std::string where = config + ":" + std::to_string(line_no) + ": ";
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw UsageError(where + "expected 'key = value'");
    const std::string key = trim(std::string_view(text).substr(0, eq));
    const std::string value = trim(std::string_view(text).substr(eq + 1));
    const CLI::Option* opt = key.empty() ? nullptr : sub->get_option_no_throw("--" + key);
    if (opt == nullptr || !opt->get_configurable()) throw UsageError(where + "unknown key '" + key + "'");
    const bool overridden =
        std::any_of(rest.begin(), rest.end(), [&](const std::string& a) { return names_option(*opt, a); });
    if (!overridden) injected.push_back("--" + key + "=" + value);
  }

  std::vector<std::string> out(args.begin(), args.begin() + static_cast<std::ptrdiff_t>(pos) + 1);
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

// One `key = value` line per setting in declaration order; repeatable
// options repeat their key and unset paths are left out.
std::string canonical_config(const CLI::App& sub) {
  std::ostringstream out;
  for (const CLI::Option* opt : sub.get_options()) {
    if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
    std::vector<std::string> values = opt->results();
    const bool flag = opt->get_expected_min() == 0;
    if (flag) {
      const bool on = opt->count() > 0 && opt->as<bool>();
      values = {on ? "true" : "false"};
    } else if (values.empty() && opt->get_items_expected_max() <= 1) {
      values = {opt->get_default_str()};
    }
    for (const auto& v : values) {
      if (!v.empty()) out << opt->get_lnames().front() << " = " << v << '\n';
    }
  }
  return out.str();
}

void add_emoji_option(CLI::App* sub, std::string& path) {
  sub->add_option("--emoji-table", path, "JSON emoji name table replacing the bundled one")
      ->check(CLI::ExistingFile);
}

// ---------------------------------------------------------------- build-vocab

struct BuildVocabArgs {
  std::vector<std::string> inputs;
  std::string output;
  std::string stats;
  std::size_t min_freq = 1;
  std::size_t max_size = 30000;
  bool allow_malformed = false;
  std::string emoji_table;
};

void add_build_vocab(CLI::App* sub, BuildVocabArgs& a) {
  sub->add_option("-i,--input", a.inputs, "Pair files (.jsonl/.tsv) or directories of them")->required();
  sub->add_option("-o,--output", a.output, "Vocabulary JSON to write")->required();
  sub->add_option("--stats", a.stats, "Statistics report (default: <output>.stats.json)");
  sub->add_option("--min-freq", a.min_freq, "Minimum token frequency")->check(CLI::PositiveNumber);
  sub->add_option("--max-size", a.max_size, "Maximum vocabulary size, specials included")
      ->check(CLI::Range(std::size_t{preprocess::kSpecialCount}, std::numeric_limits<std::size_t>::max()));
  sub->add_flag("--allow-malformed", a.allow_malformed, "Skip unparseable lines instead of failing");
  add_emoji_option(sub, a.emoji_table);
}

int run_build_vocab(const BuildVocabArgs& a, std::ostream& out) {
  const TextSetup text(a.emoji_table);
  const auto normalize = text.normalizer();
  const auto inputs = to_paths(a.inputs);
  const auto files = corpus::expand_inputs(inputs);
  corpus::CorpusStats stats;
  const auto pairs = corpus::parse_pair_inputs(inputs, &stats);
  require_clean(stats, a.allow_malformed);

  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& p : pairs) {
    preprocess::count_tokens(normalize(p.english), counts);
    preprocess::count_tokens(normalize(p.translated), counts);
  }
  if (pairs.empty()) spdlog::warn("no sentence pairs found; writing a specials-only vocabulary");
  const auto vocab = preprocess::vocab_from_counts(counts, a.min_freq, a.max_size);
  vocab.save(a.output);

  nlohmann::ordered_json report;
  report["files"] = nlohmann::json::array();
  for (const auto& f : files) report["files"].push_back(f.string());
  report["corpus"] = stats.to_json();
  report["sentences"] = 2 * pairs.size();
  report["distinct_tokens"] = counts.size();
  report["min_freq"] = a.min_freq;
  report["max_size"] = a.max_size;
  report["vocab_size"] = vocab.size();
  report["vocab_digest"] = vocab.digest();
  const std::string stats_path = a.stats.empty() ? a.output + ".stats.json" : a.stats;
  write_text(stats_path, report.dump(2) + "\n");

  out << "vocabulary: " << vocab.size() << " entries (" << counts.size() << " distinct tokens in " << pairs.size()
      << " pairs) -> " << a.output << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- prepare

struct PrepareArgs {
  std::vector<std::string> inputs;
  std::string out_dir;
  std::size_t cap = corpus::kDefaultCap;
  std::size_t shard_size = corpus::kDefaultShardSize;
  bool allow_malformed = false;
};

void add_corpus_options(CLI::App* sub, std::vector<std::string>& inputs, std::size_t& cap, std::size_t& shard_size,
                        bool& allow_malformed) {
  sub->add_option("-i,--input", inputs, "Pair files (.jsonl/.tsv) or directories of them")->required();
  sub->add_option("--max-pairs-per-source", cap, "Keep at most this many pairs per (dataset, lang)")
      ->check(CLI::PositiveNumber);
  sub->add_option("--shard-size", shard_size, "Pairs per training shard")->check(CLI::PositiveNumber);
  sub->add_flag("--allow-malformed", allow_malformed, "Skip unparseable lines instead of failing");
}

void add_prepare(CLI::App* sub, PrepareArgs& a) {
  add_corpus_options(sub, a.inputs, a.cap, a.shard_size, a.allow_malformed);
  sub->add_option("-o,--out-dir", a.out_dir, "Directory for shards and stats.json")->required();
}

struct Prepared {
  std::vector<fs::path> shards;
  corpus::CorpusStats stats;
};

Prepared prepare_corpus(const std::vector<std::string>& inputs, std::size_t cap, std::size_t shard_size,
                        bool allow_malformed, const fs::path& shard_dir, const fs::path& stats_path) {
  Prepared r;
  const auto paths = to_paths(inputs);
  auto pairs = corpus::parse_pair_inputs(paths, &r.stats);
  require_clean(r.stats, allow_malformed);
  pairs = corpus::filter_singletons(pairs, &r.stats);
  pairs = corpus::cap_per_source(pairs, cap, &r.stats);
  r.shards = corpus::shard_training_files(pairs, shard_size, shard_dir);

  nlohmann::ordered_json report;
  report["corpus"] = r.stats.to_json();
  report["max_pairs_per_source"] = cap;
  report["shard_size"] = shard_size;
  report["shards"] = nlohmann::json::array();
  for (const auto& s : r.shards) report["shards"].push_back(s.filename().string());
  write_text(stats_path, report.dump(2) + "\n");
  return r;
}

int run_prepare(const PrepareArgs& a, std::ostream& out) {
  const auto r = prepare_corpus(a.inputs, a.cap, a.shard_size, a.allow_malformed, a.out_dir,
                                fs::path(a.out_dir) / "stats.json");
  out << "retained " << r.stats.retained() << " of " << r.stats.raw() << " pairs (" << r.stats.dropped_singletons
      << " singletons, " << r.stats.capped << " over cap) in " << r.shards.size() << " shard(s) under "
      << a.out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::vector<std::string> inputs;
  std::size_t cap = corpus::kDefaultCap;
  std::size_t shard_size = corpus::kDefaultShardSize;
  bool allow_malformed = false;
  std::string vocab;
  std::string out_dir;
  std::string teacher;
  std::uint64_t teacher_seed = 0;
  std::string resume;
  std::string emoji_table;
  distill::TrainConfig config;
  encoder::EncoderConfig encoder;
  CLI::Option* d_teacher_opt = nullptr;
};

void add_train(CLI::App* sub, TrainArgs& a) {
  add_corpus_options(sub, a.inputs, a.cap, a.shard_size, a.allow_malformed);
  sub->add_option("--vocab", a.vocab, "Vocabulary JSON")->required()->check(CLI::ExistingFile);
  sub->add_option("-o,--out-dir", a.out_dir, "Directory for shards, checkpoints and metrics.csv")->required();
  sub->add_option("--teacher", a.teacher, "Teacher embedding file, or 'synthetic'")->required();
  sub->add_option("--teacher-seed", a.teacher_seed, "Seed of the synthetic teacher");
  sub->add_option("--seed", a.config.seed, "Root seed for initialization and shuffling")->required();
  sub->add_option("--max-seq-len", a.config.max_len, "Maximum sequence length")->check(CLI::PositiveNumber);
  sub->add_option("--batch-size", a.config.batch_size, "Pairs per mini-batch")->check(CLI::PositiveNumber);
  sub->add_option("--lr", a.config.lr, "Peak learning rate")->check(CLI::PositiveNumber);
  sub->add_option("--warmup-steps", a.config.warmup_steps, "Linear warmup length in optimizer steps");
  sub->add_option("--epochs", a.config.max_epochs, "Passes over the corpus")->check(CLI::PositiveNumber);
  sub->add_option("--weight-decay", a.config.weight_decay, "Decoupled weight decay")->check(CLI::NonNegativeNumber);
  sub->add_option("--max-steps", a.config.max_steps, "Stop after this many global steps (0 = no limit)");
  sub->add_option("--checkpoint-every", a.config.checkpoint_every, "Steps between checkpoints")
      ->check(CLI::PositiveNumber);
  sub->add_option("--d-model", a.encoder.d_model, "Student hidden size")->check(CLI::PositiveNumber);
  sub->add_option("--blocks", a.encoder.n_blocks, "Transformer blocks (0-2)")->check(CLI::Range(0, 2));
  sub->add_option("--heads", a.encoder.n_heads, "Attention heads")->check(CLI::PositiveNumber);
  a.d_teacher_opt = sub->add_option("--d-teacher", a.encoder.d_teacher, "Embedding size of the synthetic teacher")
                        ->check(CLI::PositiveNumber);
  sub->add_option("--resume", a.resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  add_emoji_option(sub, a.emoji_table);
}

std::unique_ptr<encoder::TeacherOracle> make_teacher(const TrainArgs& a, const Normalizer& normalize) {
  if (a.teacher == "synthetic") {
    return std::make_unique<encoder::SyntheticTeacher>(a.encoder.d_teacher, a.teacher_seed);
  }
  // Keys are matched against normalized English, so the file's sentences
  // go through the same normalizer.
  const auto raw = read_embedding_file(a.teacher);
  EmbeddingTable table;
  table.dim = raw.dim;
  for (std::size_t i = 0; i < raw.size(); ++i) table.add(normalize(raw.sentences[i]), raw.vectors[i]);
  return std::make_unique<encoder::FileTeacher>(std::move(table));
}

int run_train(TrainArgs a, std::ostream& out) {
  const TextSetup text(a.emoji_table);
  distill::TrainOptions o;
  o.normalizer = text.normalizer();

  const auto teacher = make_teacher(a, o.normalizer);
  if (a.teacher != "synthetic") {
    if (a.d_teacher_opt->count() > 0 && a.encoder.d_teacher != teacher->dim()) {
      throw UsageError("--d-teacher " + std::to_string(a.encoder.d_teacher) + " disagrees with the teacher file (" +
                       std::to_string(teacher->dim()) + ")");
    }
    a.encoder.d_teacher = teacher->dim();
  }
  const auto vocab = preprocess::Vocabulary::load(a.vocab);
  a.encoder.vocab_size = vocab.size();
  a.encoder.max_len = a.config.max_len;
  try {
    a.config.validate();
    a.encoder.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }

  const fs::path out_dir = a.out_dir;
  const auto prepared = prepare_corpus(a.inputs, a.cap, a.shard_size, a.allow_malformed, out_dir / "shards",
                                       out_dir / "corpus_stats.json");

  o.config = a.config;
  o.encoder_config = a.encoder;
  o.shards = prepared.shards;
  o.teacher = teacher.get();
  o.vocab = &vocab;
  o.out_dir = out_dir;
  if (!a.resume.empty()) o.resume_from = a.resume;

  const auto result = distill::train(o);
  char loss[32];
  std::snprintf(loss, sizeof loss, "%.6g", result.final_loss);
  out << "final checkpoint: " << result.final_path.string() << "\n"
      << "metrics: " << result.metrics_path.string() << "\n"
      << "steps: " << result.final_checkpoint.step << "\n"
      << "final loss: " << loss << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- encode

struct ModelArgs {
  std::string checkpoint;
  std::string vocab;
  std::string emoji_table;
};

void add_model_options(CLI::App* sub, ModelArgs& m) {
  sub->add_option("--checkpoint", m.checkpoint, "Student checkpoint")->required()->check(CLI::ExistingFile);
  sub->add_option("--vocab", m.vocab, "Vocabulary the checkpoint was trained with")
      ->required()
      ->check(CLI::ExistingFile);
  add_emoji_option(sub, m.emoji_table);
}

struct EncodeArgs {
  ModelArgs model;
  std::string input;
  std::string output;
};

void add_encode(CLI::App* sub, EncodeArgs& a) {
  add_model_options(sub, a.model);
  sub->add_option("-i,--input", a.input, "Text file, one sentence per line")->required()->check(CLI::ExistingFile);
  sub->add_option("-o,--output", a.output, "Embedding file to write")->required();
}

int run_encode(const EncodeArgs& a, std::ostream& out) {
  const TextSetup text(a.model.emoji_table);
  const auto student = load_student(a.model.checkpoint, a.model.vocab, text.normalizer());
  std::ifstream in(a.input, std::ios::binary);
  if (!in) throw IoError("cannot open " + a.input);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  const auto embeddings = student.embed(lines);
  EmbeddingTable table;
  table.dim = embeddings.cols;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto row = embeddings.row(i);
    table.add(lines[i], std::vector<float>(row.begin(), row.end()));
  }
  write_embedding_file(a.output, table);
  out << "wrote " << table.size() << " embeddings (dim " << table.dim << ") to " << a.output << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval-encoding

struct EvalEncodingArgs {
  ModelArgs model;
  std::string dataset;
  std::size_t subsample_limit = eval::kDefaultSubsampleLimit;
  std::uint64_t seed = 0;
  std::string json;
  std::string text;
};

void add_eval_encoding(CLI::App* sub, EvalEncodingArgs& a) {
  add_model_options(sub, a.model);
  sub->add_option("--dataset", a.dataset, "Labelled JSONL ({\"text\":..., \"label\":...} per line)")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--subsample-limit", a.subsample_limit, "Largest class size evaluated exhaustively")
      ->check(CLI::Range(std::size_t{2}, std::numeric_limits<std::size_t>::max()));
  sub->add_option("--seed", a.seed, "Seed for subsampling large classes");
  sub->add_option("--json", a.json, "Write the JSON report here");
  sub->add_option("--text", a.text, "Write the text report here");
}

int run_eval_encoding(const EvalEncodingArgs& a, std::ostream& out) {
  const TextSetup text(a.model.emoji_table);
  const auto student = load_student(a.model.checkpoint, a.model.vocab, text.normalizer());
  const auto dataset = eval::read_labelled_file(a.dataset);
  const auto report = eval::run_encoding_eval(student, dataset, a.subsample_limit, a.seed);
  const std::string rendered = eval::encoding_report_text(report);
  if (!a.json.empty()) write_text(a.json, report.to_json().dump(2) + "\n");
  if (!a.text.empty()) write_text(a.text, rendered);
  out << rendered;
  return kExitOk;
}

// ---------------------------------------------------------------- eval-matching

struct EvalMatchingArgs {
  std::vector<std::string> checkpoints;
  std::vector<std::string> vocabs;
  std::vector<std::string> names;
  std::vector<std::string> testsets;
  std::string emoji_table;
  std::string json;
  std::string text;
  std::string color = "auto";
};

void add_eval_matching(CLI::App* sub, EvalMatchingArgs& a) {
  sub->add_option("--checkpoint", a.checkpoints, "Student checkpoint; repeat to compare models")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--vocab", a.vocabs, "Vocabulary per checkpoint, or one shared by all")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--name", a.names, "Column label per checkpoint (default: the checkpoint path)");
  sub->add_option("--testset", a.testsets, "Parallel pair files or directories; grouped by lang")
      ->required();
  sub->add_option("--json", a.json, "Write the JSON report here");
  sub->add_option("--text", a.text, "Write the text report here (never colored)");
  sub->add_option("--color", a.color, "Highlight best scores on standard output")
      ->check(CLI::IsMember({"auto", "always", "never"}));
  add_emoji_option(sub, a.emoji_table);
}

int run_eval_matching(const EvalMatchingArgs& a, std::ostream& out) {
  if (a.vocabs.size() != 1 && a.vocabs.size() != a.checkpoints.size()) {
    throw UsageError("give one --vocab, or one per --checkpoint");
  }
  if (!a.names.empty() && a.names.size() != a.checkpoints.size()) {
    throw UsageError("give one --name per --checkpoint");
  }
  const auto inputs = to_paths(a.testsets);
  corpus::CorpusStats stats;
  const auto pairs = corpus::parse_pair_inputs(inputs, &stats);
  if (stats.malformed > 0) throw DataError(stats.malformed_lines.front());
  if (stats.dropped_singletons > 0) {
    throw DataError("testset has " + std::to_string(stats.dropped_singletons) + " pair(s) with a blank side");
  }
  if (pairs.empty()) throw DataError("testset is empty");
  std::map<std::string, std::vector<corpus::ParallelPair>> by_lang;
  for (const auto& p : pairs) by_lang[p.lang].push_back(p);

  const TextSetup text(a.emoji_table);
  eval::MatchingTable table;
  for (const auto& [lang, _] : by_lang) table.languages.push_back(lang);
  for (std::size_t m = 0; m < a.checkpoints.size(); ++m) {
    const auto& vocab = a.vocabs.size() == 1 ? a.vocabs.front() : a.vocabs[m];
    const auto student = load_student(a.checkpoints[m], vocab, text.normalizer());
    table.models.push_back(a.names.empty() ? a.checkpoints[m] : a.names[m]);
    for (const auto& [lang, testset] : by_lang) {
      const auto report = eval::run_matching_eval(student, testset);
      if (report.tie_warning()) spdlog::warn("{}: more than 1% of matching decisions were ties", lang);
      table.rows[lang].push_back(report);
    }
  }
  if (!a.json.empty()) write_text(a.json, table.to_json().dump(2) + "\n");
  if (!a.text.empty()) write_text(a.text, table.to_text(false));
  out << table.to_text(use_color(a.color));
  return kExitOk;
}

// ---------------------------------------------------------------- knn

struct KnnArgs {
  ModelArgs model;
  std::string index;
  std::string query;
  std::size_t k = 10;
};

void add_knn(CLI::App* sub, KnnArgs& a) {
  add_model_options(sub, a.model);
  sub->add_option("--index", a.index, "Embedding file to search")->required()->check(CLI::ExistingFile);
  sub->add_option("-q,--query", a.query, "Query sentence")->required();
  sub->add_option("-k", a.k, "Number of neighbours")->check(CLI::PositiveNumber);
}

int run_knn(const KnnArgs& a, std::ostream& out) {
  const auto index = read_embedding_file(a.index);
  if (index.size() == 0) throw DataError("index " + a.index + " is empty");
  const TextSetup text(a.model.emoji_table);
  const auto student = load_student(a.model.checkpoint, a.model.vocab, text.normalizer());
  if (student.params().config.d_teacher != index.dim) {
    throw DataError("index dimension " + std::to_string(index.dim) + " differs from the model's " +
                    std::to_string(student.params().config.d_teacher));
  }
  for (const auto& n : eval::knn(a.query, student, index, a.k)) {
    char sim[32];
    std::snprintf(sim, sizeof sim, "%.4f", n.similarity);
    out << sim << '\t' << n.sentence << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::string input;
  std::string color = "auto";
};

void add_report(CLI::App* sub, ReportArgs& a) {
  sub->add_option("input,--input", a.input, "JSON report from eval-matching or eval-encoding")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--color", a.color, "Highlight best scores")->check(CLI::IsMember({"auto", "always", "never"}));
}

int run_report(const ReportArgs& a, std::ostream& out) {
  const auto j = nlohmann::json::parse(read_text(a.input), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DataError(a.input + ": not a JSON report");
  const std::string task = j.value("task", "");
  try {
    if (task == "matching") {
      out << eval::MatchingTable::from_json(j).to_text(use_color(a.color));
    } else if (task == "encoding") {
      out << eval::encoding_report_text(eval::EncodingReport::from_json(j));
    } else {
      throw DataError(a.input + ": unknown report task '" + task + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(a.input + ": " + e.what());
  }
  return kExitOk;
}

// Routes library logging to `err` for the duration of one run_cli call.
class LoggerScope {
 public:
  LoggerScope(std::ostream& err, spdlog::level::level_enum level) : previous_(spdlog::default_logger()) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
    auto logger = std::make_shared<spdlog::logger>("xlenc", std::move(sink));
    logger->set_pattern("[%l] %v");
    logger->set_level(level);
    spdlog::set_default_logger(std::move(logger));
  }
  ~LoggerScope() { spdlog::set_default_logger(previous_); }

 private:
  std::shared_ptr<spdlog::logger> previous_;
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("Cross-lingual sentence encoder distillation toolkit", "xlenc");
  app.set_version_flag("--version", XLENC_VERSION);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  bool verbose = false;
  bool quiet = false;
  app.add_flag("--verbose", verbose, "Debug logging");
  app.add_flag("--quiet", quiet, "Warnings and errors only");

  std::string config;
  std::string write_config;
  BuildVocabArgs build_vocab_args;
  PrepareArgs prepare_args;
  TrainArgs train_args;
  EncodeArgs encode_args;
  EvalEncodingArgs eval_encoding_args;
  EvalMatchingArgs eval_matching_args;
  KnnArgs knn_args;
  ReportArgs report_args;

  auto* build_vocab = app.add_subcommand("build-vocab", "Build a vocabulary from parallel corpus files");
  auto* prepare = app.add_subcommand("prepare", "Drop singletons, cap each source and write training shards");
  auto* train = app.add_subcommand("train", "Distill the student encoder from the teacher");
  auto* encode = app.add_subcommand("encode", "Embed sentences into an embedding file");
  auto* eval_encoding = app.add_subcommand("eval-encoding", "Weighted average within-class cosine similarity");
  auto* eval_matching = app.add_subcommand("eval-matching", "Sentence matching accuracy per language");
  auto* knn = app.add_subcommand("knn", "Nearest neighbours of a query in an embedding file");
  auto* report = app.add_subcommand("report", "Render a JSON evaluation report as text");

  const std::vector<CLI::App*> subs{build_vocab, prepare, train, encode, eval_encoding, eval_matching, knn, report};
  for (auto* sub : subs) {
    sub->option_defaults()->always_capture_default();
    sub->fallthrough();
    add_config(sub, config, write_config);
  }
  add_build_vocab(build_vocab, build_vocab_args);
  add_prepare(prepare, prepare_args);
  add_train(train, train_args);
  add_encode(encode, encode_args);
  add_eval_encoding(eval_encoding, eval_encoding_args);
  add_eval_matching(eval_matching, eval_matching_args);
  add_knn(knn, knn_args);
  add_report(report, report_args);

  try {
    auto args = expand_config(app, std::vector<std::string>(argv + 1, argv + argc));
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }

  const LoggerScope logging(err, verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);
  try {
    for (auto* sub : subs) {
      if (!sub->parsed()) continue;
      if (!write_config.empty()) {
        write_text(write_config, canonical_config(*sub));
        return kExitOk;
      }
      if (sub == build_vocab) return run_build_vocab(build_vocab_args, out);
      if (sub == prepare) return run_prepare(prepare_args, out);
      if (sub == train) return run_train(train_args, out);
      if (sub == encode) return run_encode(encode_args, out);
      if (sub == eval_encoding) return run_eval_encoding(eval_encoding_args, out);
      if (sub == eval_matching) return run_eval_matching(eval_matching_args, out);
      if (sub == knn) return run_knn(knn_args, out);
      if (sub == report) return run_report(report_args, out);
    }
    throw UsageError("no command given");
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace xlenc::cli
