#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace xlenc::corpus {

/// One English sentence with its translation.
struct ParallelPair {
  std::string english;
  std::string translated;
  std::string lang;
  std::string dataset;

  /// Both sides non-empty after whitespace trim.
  bool complete() const;

  bool operator==(const ParallelPair&) const = default;
};

enum class PairFormat { kJsonl, kTsv };

PairFormat format_from_path(const std::filesystem::path& path);

using GroupKey = std::pair<std::string, std::string>;  // (dataset, lang)

struct GroupCounts {
  std::uint64_t raw = 0;
  std::uint64_t dropped_singletons = 0;
  std::uint64_t capped = 0;

  std::uint64_t retained() const { return raw - dropped_singletons - capped; }
  bool operator==(const GroupCounts&) const = default;
};

/// Per-(dataset, lang) accounting. Ingestion (parse_pair_file or count_raw)
/// adds to `raw`; every later stage adds its drops, so for each group
/// retained() + dropped_singletons + capped == raw.
struct CorpusStats {
  std::map<GroupKey, GroupCounts> groups;
  std::uint64_t dropped_singletons = 0;
  std::uint64_t capped = 0;
  /// Lines that could not be parsed at all (bad JSON, wrong column count,
  /// invalid UTF-8, missing lang). They belong to no group.
  std::uint64_t malformed = 0;
  std::vector<std::string> malformed_lines;  // "file:line: reason", first 100 only

  std::uint64_t retained() const;
  std::uint64_t raw() const;
  /// Ingestion accounting for pairs that did not come from parse_pair_file.
  void count_raw(std::span<const ParallelPair> pairs);
  void merge(const CorpusStats& other);
  nlohmann::json to_json() const;
};

/// Reads one pair file. Malformed lines and singletons are skipped and
/// counted in `stats`; only I/O failure throws.
std::vector<ParallelPair> parse_pair_file(const std::filesystem::path& path, PairFormat format,
                                          CorpusStats* stats = nullptr);

/// Expands directories (sorted *.jsonl / *.tsv entries) and parses every file
/// in order.
std::vector<ParallelPair> parse_pair_inputs(std::span<const std::filesystem::path> inputs,
                                            CorpusStats* stats = nullptr);

std::vector<std::filesystem::path> expand_inputs(std::span<const std::filesystem::path> inputs);

std::vector<ParallelPair> filter_singletons(std::span<const ParallelPair> pairs,
                                            CorpusStats* stats = nullptr);

inline constexpr std::size_t kDefaultCap = 500000;
inline constexpr std::size_t kDefaultShardSize = 500000;

/// Keeps the first `cap` pairs of every (dataset, lang) group.
std::vector<ParallelPair> cap_per_source(std::span<const ParallelPair> pairs, std::size_t cap,
                                         CorpusStats* stats = nullptr);

/// Writes shard-NNNNN.jsonl files of at most `shard_size` pairs each.
std::vector<std::filesystem::path> shard_training_files(std::span<const ParallelPair> pairs,
                                                        std::size_t shard_size,
                                                        const std::filesystem::path& out_dir);

std::string to_jsonl_line(const ParallelPair& pair);
void write_pair_file(const std::filesystem::path& path, std::span<const ParallelPair> pairs);

struct MiniBatch {
  std::vector<ParallelPair> pairs;
};

/// Visiting order of one epoch: a Fisher-Yates permutation of 0..n-1 seeded
/// from (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// Yields the mini-batches of one epoch over an in-memory corpus.
class BatchStream {
 public:
  BatchStream(std::vector<ParallelPair> pairs, std::size_t batch_size, std::uint64_t seed,
              std::uint64_t epoch);

  std::optional<MiniBatch> next();
  std::size_t batch_count() const;
  std::span<const std::size_t> order() const { return order_; }

 private:
  std::vector<ParallelPair> pairs_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
};

/// Loads every shard (fatal if one has vanished) and returns the batch
/// stream for `epoch`.
BatchStream make_batches(std::span<const std::filesystem::path> shards, std::size_t batch_size,
                         std::uint64_t seed, std::uint64_t epoch);

/// Loads shards in order; missing files throw IoError.
std::vector<ParallelPair> load_shards(std::span<const std::filesystem::path> shards);

}  // namespace xlenc::corpus
