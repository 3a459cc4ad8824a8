#include "mitonet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <type_traits>

#include "mitonet/errors.hpp"

namespace mitonet {
namespace {

using nlohmann::json;

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 8 ? "f64le" : "f32le";
}

template <typename T>
constexpr NumericMode mode_of() {
  return sizeof(T) == 8 ? NumericMode::reference64 : NumericMode::fast32;
}

template <typename T>
void append_le(std::string& blob, const std::vector<T>& values) {
  for (T v : values) {
    auto bits = std::bit_cast<Bits<T>>(v);
    for (std::size_t b = 0; b < sizeof(T); ++b) {
      blob.push_back(static_cast<char>(bits & 0xFF));
      bits >>= 8;
    }
  }
}

template <typename T>
void read_le(const std::string& blob, std::size_t& offset, std::vector<T>& values) {
  for (T& v : values) {
    Bits<T> bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) {
      bits |= static_cast<Bits<T>>(static_cast<unsigned char>(blob[offset + b])) << (8 * b);
    }
    v = std::bit_cast<T>(bits);
    offset += sizeof(T);
  }
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

json read_header(const std::filesystem::path& dir) {
  std::ifstream in(dir / kCheckpointHeader);
  if (!in) throw MissingFile("cannot open " + (dir / kCheckpointHeader).string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw CorruptCheckpoint(std::string("unreadable checkpoint header: ") + e.what());
  }
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void checkpoint_save(const Checkpoint<T>& ckpt, const std::filesystem::path& dir) {
  const auto specs = nn::param_specs(ckpt.config.model);
  if (!ckpt.params.matches(specs)) {
    throw ShapeMismatch("checkpoint parameters do not match the stored model config");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::string blob;
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& t : ckpt.params.tensors()) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset},
                       {"count", t.data.size()}});
    offset += t.data.size();
    append_le(blob, t.data);
  }
  const bool has_state = ckpt.optim_state.m.size() == ckpt.params.size();
  if (has_state) {
    for (const auto& m : ckpt.optim_state.m) append_le(blob, m);
    for (const auto& v : ckpt.optim_state.v) append_le(blob, v);
  }

  RunConfig stored = ckpt.config;
  stored.numeric_mode = mode_of<T>();
  json header = {
      {"format_version", kCheckpointFormatVersion},
      {"numeric_mode", to_string(mode_of<T>())},
      {"dtype", dtype_name<T>()},
      {"config", to_json(stored)},
      {"seed", stored.seed},
      {"epoch", ckpt.epoch},
      {"best_bacc", ckpt.best_bacc},
      {"adamw_step", ckpt.optim_state.t},
      {"sections", has_state ? json::array({"params", "adamw_m", "adamw_v"})
                             : json::array({"params"})},
      {"tensors", tensors},
      {"scalar_count", offset},
      {"blob_bytes", blob.size()},
      {"blob_fnv1a64", hex64(fnv1a64(blob.data(), blob.size()))},
  };

  std::ofstream hout(dir / kCheckpointHeader);
  hout << header.dump(2) << "\n";
  std::ofstream bout(dir / kCheckpointBlob, std::ios::binary);
  bout.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!hout || !bout) throw IoError("failed writing checkpoint to " + dir.string());
}

template <typename T>
Checkpoint<T> checkpoint_load(const std::filesystem::path& dir) {
  const json header = read_header(dir);
  Checkpoint<T> ckpt;
  std::vector<std::string> sections;
  std::uint64_t blob_bytes = 0;
  std::string checksum;
  try {
    if (header.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw CorruptCheckpoint("unknown checkpoint format_version " +
                              header.at("format_version").dump());
    }
    if (header.at("dtype").get<std::string>() != dtype_name<T>()) {
      throw CorruptCheckpoint("checkpoint stores " + header.at("dtype").get<std::string>() +
                              ", requested " + dtype_name<T>());
    }
    ckpt.config = run_config_from_json(header.at("config"));
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.best_bacc = header.at("best_bacc").is_null() ? 0.0 : header.at("best_bacc").get<double>();
    ckpt.optim_state.t = header.at("adamw_step").get<std::int64_t>();
    sections = header.at("sections").get<std::vector<std::string>>();
    blob_bytes = header.at("blob_bytes").get<std::uint64_t>();
    checksum = header.at("blob_fnv1a64").get<std::string>();

    const auto specs = nn::param_specs(ckpt.config.model);
    const auto& tensors = header.at("tensors");
    if (tensors.size() != specs.size()) {
      throw CorruptCheckpoint("tensor table has " + std::to_string(tensors.size()) +
                              " entries, config implies " + std::to_string(specs.size()));
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (tensors[i].at("name").get<std::string>() != specs[i].name ||
          tensors[i].at("shape").get<std::vector<int>>() != specs[i].shape) {
        throw CorruptCheckpoint("tensor " + std::to_string(i) + " (" +
                                tensors[i].at("name").get<std::string>() +
                                ") does not match the config layout");
      }
    }
    ckpt.params = nn::ModelParams<T>(specs);
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptCheckpoint(std::string("invalid config in checkpoint: ") + e.what());
  }

  std::ifstream in(dir / kCheckpointBlob, std::ios::binary);
  if (!in) throw MissingFile("cannot open " + (dir / kCheckpointBlob).string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const bool has_state = sections.size() == 3;
  const std::size_t scalars = ckpt.params.scalar_count();
  const std::size_t expected = scalars * sizeof(T) * (has_state ? 3 : 1);
  if (blob.size() != expected || blob_bytes != expected) {
    throw CorruptCheckpoint("parameter blob has " + std::to_string(blob.size()) +
                            " bytes, expected " + std::to_string(expected));
  }
  if (hex64(fnv1a64(blob.data(), blob.size())) != checksum) {
    throw CorruptCheckpoint("parameter blob checksum does not match the header");
  }

  std::size_t offset = 0;
  for (auto& t : ckpt.params.tensors()) read_le(blob, offset, t.data);
  if (has_state) {
    ckpt.optim_state.m.clear();
    ckpt.optim_state.v.clear();
    for (const auto& t : ckpt.params.tensors()) ckpt.optim_state.m.emplace_back(t.data.size());
    for (const auto& t : ckpt.params.tensors()) ckpt.optim_state.v.emplace_back(t.data.size());
    for (auto& m : ckpt.optim_state.m) read_le(blob, offset, m);
    for (auto& v : ckpt.optim_state.v) read_le(blob, offset, v);
  }
  return ckpt;
}

NumericMode checkpoint_numeric_mode(const std::filesystem::path& dir) {
  const json header = read_header(dir);
  try {
    return parse_numeric_mode(header.at("numeric_mode").get<std::string>());
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptCheckpoint(e.what());
  }
}

template void checkpoint_save<float>(const Checkpoint<float>&, const std::filesystem::path&);
template void checkpoint_save<double>(const Checkpoint<double>&, const std::filesystem::path&);
template Checkpoint<float> checkpoint_load<float>(const std::filesystem::path&);
template Checkpoint<double> checkpoint_load<double>(const std::filesystem::path&);

}  // namespace mitonet
