#include "xlenc/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "xlenc/digest.hpp"

namespace fs = std::filesystem;

namespace xlenc::distill {

namespace {

constexpr char kMagic[8] = {'X', 'L', 'E', 'N', 'C', 'C', 'K', '\0'};

nlohmann::json manifest(const encoder::EncoderParams& params) {
  nlohmann::json m = nlohmann::json::array();
  for (const auto& t : params.tensors()) m.push_back({{"name", t.name}, {"shape", t.shape}});
  return m;
}

std::string encode_payload(const Checkpoint& c) {
  std::string payload;
  payload.reserve(3 * 4 * c.params.parameter_count());
  for (const auto& t : c.params.tensors()) detail::put_f32s(payload, t.values);
  for (const auto& m : c.optimizer.first_moment) detail::put_f32s(payload, m);
  for (const auto& v : c.optimizer.second_moment) detail::put_f32s(payload, v);
  return payload;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const fs::path& path) {
  if (!(c.params.config == c.encoder_config)) throw ContractError("checkpoint: params config differs from encoder config");
  const auto layout = c.params.tensors();
  if (c.optimizer.first_moment.size() != layout.size() || c.optimizer.second_moment.size() != layout.size()) {
    throw ContractError("checkpoint: optimizer state does not match parameter layout");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (c.optimizer.first_moment[i].size() != layout[i].values.size() ||
        c.optimizer.second_moment[i].size() != layout[i].values.size()) {
      throw ContractError("checkpoint: optimizer state shape mismatch in " + layout[i].name);
    }
  }

  const std::string payload = encode_payload(c);
  nlohmann::ordered_json header;
  header["format"] = "xlenc-checkpoint";
  header["encoder"] = nlohmann::json(c.encoder_config);
  header["train"] = nlohmann::json(c.train_config);
  header["vocab_digest"] = c.vocab_digest;
  header["step"] = c.step;
  header["optimizer_step"] = c.optimizer.step;
  header["tensors"] = manifest(c.params);
  header["payload_sha256"] = sha256_hex(payload);
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  detail::put_le(out, kCheckpointVersion);
  detail::put_le(out, static_cast<std::uint64_t>(header_text.size()));
  out += header_text;
  out += payload;

  const fs::path tmp = fs::path(path).concat(".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path, const std::optional<std::string>& expected_vocab_digest) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  const std::string bytes = buf.str();
  const std::string where = path.string() + ": ";

  detail::Reader r(bytes);
  if (!r.has(sizeof kMagic)) throw CheckpointTruncatedError(where + "truncated before magic bytes");
  if (r.take(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw CheckpointCorruptError(where + "not an xlenc checkpoint (bad magic)");
  }
  if (!r.has(4)) throw CheckpointTruncatedError(where + "truncated before version");
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError(where + "format version " + std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
  }
  if (!r.has(8)) throw CheckpointTruncatedError(where + "truncated before header length");
  const auto header_len = r.le<std::uint64_t>();
  if (!r.has(header_len)) throw CheckpointTruncatedError(where + "truncated inside header");
  const auto header = nlohmann::json::parse(r.take(header_len), nullptr, false);
  if (header.is_discarded() || !header.is_object()) throw CheckpointCorruptError(where + "header is not JSON");

  Checkpoint c;
  try {
    c.encoder_config = header.at("encoder").get<encoder::EncoderConfig>();
    c.train_config = header.at("train").get<TrainConfig>();
    c.vocab_digest = header.at("vocab_digest").get<std::string>();
    c.step = header.at("step").get<std::uint64_t>();
    c.optimizer.step = header.at("optimizer_step").get<std::uint64_t>();
    c.encoder_config.validate();
  } catch (const std::exception& e) {
    throw CheckpointCorruptError(where + "bad header: " + e.what());
  }
  c.params = encoder::EncoderParams::zeros(c.encoder_config);
  if (header.value("tensors", nlohmann::json()) != manifest(c.params)) {
    throw CheckpointCorruptError(where + "tensor manifest does not match the encoder config");
  }

  const std::size_t count = c.params.parameter_count();
  const std::size_t payload_bytes = 3 * 4 * count;
  if (r.remaining() < payload_bytes) {
    throw CheckpointTruncatedError(where + "payload has " + std::to_string(r.remaining()) + " bytes, expected " +
                                   std::to_string(payload_bytes));
  }
  if (r.remaining() > payload_bytes) throw CheckpointCorruptError(where + "trailing bytes after payload");
  const std::string_view payload = std::string_view(bytes).substr(r.position(), payload_bytes);
  if (sha256_hex(payload) != header.value("payload_sha256", std::string())) {
    throw CheckpointCorruptError(where + "payload checksum mismatch");
  }

  for (auto& t : c.params.tensors()) {
    for (auto& v : t.values) v = r.f32();
  }
  c.optimizer = OptimizerState::zeros(c.params);
  c.optimizer.step = header.at("optimizer_step").get<std::uint64_t>();
  for (auto& m : c.optimizer.first_moment) {
    for (auto& v : m) v = r.f32();
  }
  for (auto& m : c.optimizer.second_moment) {
    for (auto& v : m) v = r.f32();
  }

  if (expected_vocab_digest && *expected_vocab_digest != c.vocab_digest) {
    throw VocabDigestError(where + "vocabulary digest " + *expected_vocab_digest +
                           " does not match the checkpoint's " + c.vocab_digest);
  }
  return c;
}

}  // namespace xlenc::distill
