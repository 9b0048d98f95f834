#include "xlenc/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <spdlog/spdlog.h>

#include "xlenc/error.hpp"
#include "xlenc/normalize.hpp"
#include "xlenc/random.hpp"

namespace fs = std::filesystem;

namespace xlenc::corpus {

namespace {

bool blank(std::string_view text) {
  for (char32_t c : preprocess::utf8_to_u32(text)) {
    if (!preprocess::is_unicode_space(c)) return false;
  }
  return true;
}

std::string ascii_lower(std::string s) {
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

constexpr std::size_t kMaxRecordedMalformed = 100;

void record_malformed(CorpusStats* stats, const fs::path& path, std::size_t line_no,
                      const std::string& reason) {
  spdlog::warn("{}:{}: skipping malformed line ({})", path.string(), line_no, reason);
  if (stats == nullptr) return;
  ++stats->malformed;
  if (stats->malformed_lines.size() < kMaxRecordedMalformed) {
    stats->malformed_lines.push_back(path.string() + ":" + std::to_string(line_no) + ": " + reason);
  }
}

// Outcome of reading one line: a record (possibly a singleton) or a reason
// it is malformed.
struct LineRecord {
  ParallelPair pair;
  std::string error;
};

LineRecord read_jsonl_line(const std::string& line) {
  LineRecord rec;
  const auto j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    rec.error = "not a JSON object";
    return rec;
  }
  auto text_field = [&](const char* key, std::string& out, bool required) -> bool {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
      if (required) rec.error = std::string("missing key \"") + key + "\"";
      return !required;
    }
    if (!it->is_string()) {
      rec.error = std::string("key \"") + key + "\" is not a string";
      return false;
    }
    out = it->get<std::string>();
    return true;
  };
  if (!text_field("en", rec.pair.english, false)) return rec;
  if (!text_field("t", rec.pair.translated, false)) return rec;
  if (!text_field("lang", rec.pair.lang, true)) return rec;
  if (!text_field("dataset", rec.pair.dataset, true)) return rec;
  return rec;
}

LineRecord read_tsv_line(const std::string& line) {
  LineRecord rec;
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (cols.size() != 4) {
    rec.error = "expected 4 tab-separated columns, found " + std::to_string(cols.size());
    return rec;
  }
  rec.pair = {cols[0], cols[1], cols[2], cols[3]};
  return rec;
}

}  // namespace

bool ParallelPair::complete() const { return !blank(english) && !blank(translated); }

PairFormat format_from_path(const fs::path& path) {
  return path.extension() == ".tsv" ? PairFormat::kTsv : PairFormat::kJsonl;
}

std::uint64_t CorpusStats::retained() const {
  std::uint64_t n = 0;
  for (const auto& [key, g] : groups) n += g.retained();
  return n;
}

std::uint64_t CorpusStats::raw() const {
  std::uint64_t n = 0;
  for (const auto& [key, g] : groups) n += g.raw;
  return n;
}

void CorpusStats::count_raw(std::span<const ParallelPair> pairs) {
  for (const auto& p : pairs) ++groups[{p.dataset, p.lang}].raw;
}

void CorpusStats::merge(const CorpusStats& other) {
  for (const auto& [key, g] : other.groups) {
    auto& mine = groups[key];
    mine.raw += g.raw;
    mine.dropped_singletons += g.dropped_singletons;
    mine.capped += g.capped;
  }
  dropped_singletons += other.dropped_singletons;
  capped += other.capped;
  malformed += other.malformed;
  for (const auto& line : other.malformed_lines) {
    if (malformed_lines.size() >= kMaxRecordedMalformed) break;
    malformed_lines.push_back(line);
  }
}

nlohmann::json CorpusStats::to_json() const {
  nlohmann::json groups_json = nlohmann::json::array();
  for (const auto& [key, g] : groups) {
    groups_json.push_back({{"dataset", key.first},
                           {"lang", key.second},
                           {"raw", g.raw},
                           {"dropped_singletons", g.dropped_singletons},
                           {"capped", g.capped},
                           {"retained", g.retained()}});
  }
  return {{"groups", groups_json},
          {"raw", raw()},
          {"retained", retained()},
          {"dropped_singletons", dropped_singletons},
          {"capped", capped},
          {"malformed", malformed},
          {"malformed_lines", malformed_lines}};
}

std::vector<ParallelPair> parse_pair_file(const fs::path& path, PairFormat format, CorpusStats* stats) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open pair file " + path.string());

  std::vector<ParallelPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!preprocess::is_valid_utf8(line)) {
      record_malformed(stats, path, line_no, "invalid UTF-8");
      continue;
    }
    LineRecord rec = format == PairFormat::kJsonl ? read_jsonl_line(line) : read_tsv_line(line);
    if (!rec.error.empty()) {
      record_malformed(stats, path, line_no, rec.error);
      continue;
    }
    rec.pair.lang = ascii_lower(std::move(rec.pair.lang));
    const GroupKey key{rec.pair.dataset, rec.pair.lang};
    if (!rec.pair.complete()) {
      if (stats != nullptr) {
        auto& g = stats->groups[key];
        ++g.raw;
        ++g.dropped_singletons;
        ++stats->dropped_singletons;
      }
      continue;
    }
    if (blank(rec.pair.lang)) {
      record_malformed(stats, path, line_no, "empty lang");
      continue;
    }
    if (stats != nullptr) ++stats->groups[key].raw;
    pairs.push_back(std::move(rec.pair));
  }
  if (in.bad()) throw IoError("read error in " + path.string());
  return pairs;
}

std::vector<fs::path> expand_inputs(std::span<const fs::path> inputs) {
  std::vector<fs::path> files;
  for (const auto& input : inputs) {
    std::error_code ec;
    if (fs::is_directory(input, ec)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(input)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".jsonl" || ext == ".tsv")) found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(input, ec)) {
      files.push_back(input);
    } else {
      throw IoError("input not found: " + input.string());
    }
  }
  return files;
}

std::vector<ParallelPair> parse_pair_inputs(std::span<const fs::path> inputs, CorpusStats* stats) {
  std::vector<ParallelPair> all;
  for (const auto& file : expand_inputs(inputs)) {
    auto pairs = parse_pair_file(file, format_from_path(file), stats);
    all.insert(all.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
  }
  return all;
}

std::vector<ParallelPair> filter_singletons(std::span<const ParallelPair> pairs, CorpusStats* stats) {
  std::vector<ParallelPair> kept;
  kept.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.complete()) {
      kept.push_back(p);
    } else if (stats != nullptr) {
      ++stats->groups[{p.dataset, p.lang}].dropped_singletons;
      ++stats->dropped_singletons;
    }
  }
  return kept;
}

std::vector<ParallelPair> cap_per_source(std::span<const ParallelPair> pairs, std::size_t cap,
                                         CorpusStats* stats) {
  if (cap == 0) throw ContractError("cap_per_source: cap must be >= 1");
  std::map<GroupKey, std::size_t> seen;
  std::vector<ParallelPair> kept;
  kept.reserve(pairs.size());
  for (const auto& p : pairs) {
    const GroupKey key{p.dataset, p.lang};
    if (++seen[key] <= cap) {
      kept.push_back(p);
    } else if (stats != nullptr) {
      ++stats->groups[key].capped;
      ++stats->capped;
    }
  }
  return kept;
}

std::string to_jsonl_line(const ParallelPair& pair) {
  nlohmann::ordered_json j;
  j["en"] = pair.english;
  j["t"] = pair.translated;
  j["lang"] = pair.lang;
  j["dataset"] = pair.dataset;
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

void write_pair_file(const fs::path& path, std::span<const ParallelPair> pairs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : pairs) out << to_jsonl_line(p) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<fs::path> shard_training_files(std::span<const ParallelPair> pairs, std::size_t shard_size,
                                           const fs::path& out_dir) {
  if (shard_size == 0) throw ContractError("shard_training_files: shard_size must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<fs::path> shards;
  for (std::size_t begin = 0; begin < pairs.size(); begin += shard_size) {
    char name[32];
    std::snprintf(name, sizeof name, "shard-%05zu.jsonl", shards.size());
    const fs::path path = out_dir / name;
    write_pair_file(path, pairs.subspan(begin, std::min(shard_size, pairs.size() - begin)));
    shards.push_back(path);
  }
  return shards;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  Rng rng(derive_seed(derive_seed(seed, "shuffle"), epoch));
  return permutation(n, rng);
}

BatchStream::BatchStream(std::vector<ParallelPair> pairs, std::size_t batch_size, std::uint64_t seed,
                         std::uint64_t epoch)
    : pairs_(std::move(pairs)), batch_size_(batch_size) {
  if (batch_size_ == 0) throw ContractError("make_batches: batch_size must be >= 1");
  order_ = epoch_order(pairs_.size(), seed, epoch);
}

std::size_t BatchStream::batch_count() const { return (pairs_.size() + batch_size_ - 1) / batch_size_; }

std::optional<MiniBatch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  MiniBatch batch;
  const std::size_t end = std::min(cursor_ + batch_size_, order_.size());
  batch.pairs.reserve(end - cursor_);
  for (; cursor_ < end; ++cursor_) batch.pairs.push_back(pairs_[order_[cursor_]]);
  return batch;
}

std::vector<ParallelPair> load_shards(std::span<const fs::path> shards) {
  std::vector<ParallelPair> all;
  for (const auto& shard : shards) {
    if (!fs::exists(shard)) throw IoError("shard vanished: " + shard.string());
    auto pairs = parse_pair_file(shard, PairFormat::kJsonl);
    all.insert(all.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
  }
  return all;
}

BatchStream make_batches(std::span<const fs::path> shards, std::size_t batch_size, std::uint64_t seed,
                         std::uint64_t epoch) {
  if (batch_size == 0) throw ContractError("make_batches: batch_size must be >= 1");
  return BatchStream(load_shards(shards), batch_size, seed, epoch);
}

}  // namespace xlenc::corpus
