#include "genqa/checkpoint.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "genqa/error.h"

namespace genqa {
namespace {

constexpr char kMagic[8] = {'G', 'E', 'N', 'Q', 'A', 'C', 'K', '1'};

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t offset) {
  if (offset + sizeof(T) > in.size()) throw Error("checkpoint truncated");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

nlohmann::ordered_json config_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["vocab_size"] = cfg.vocab_size;
  j["embed_dim"] = cfg.embed_dim;
  j["hidden_dim"] = cfg.hidden_dim;
  j["n_layers"] = cfg.n_layers;
  j["attention"] = cfg.attention;
  j["max_positions"] = cfg.max_positions;
  j["seed"] = cfg.seed;
  j["float_width"] = cfg.float_width;
  return j;
}

ModelConfig config_from(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.attention = j.at("attention").get<bool>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.float_width = j.at("float_width").get<int>();
  validate(c);
  return c;
}

}  // namespace

std::string to_json(const ModelConfig& cfg) { return config_json(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& text) { return config_from(nlohmann::json::parse(text)); }

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const bool f32 = ckpt.config.float_width == 32;
  std::string data;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  ckpt.params.for_each([&](const std::string& name, const auto& t) {
    nlohmann::ordered_json tj;
    tj["name"] = name;
    tj["dtype"] = f32 ? "f32" : "f64";
    if (t.cols() == 1 && std::is_same_v<std::decay_t<decltype(t)>, Eigen::VectorXd>)
      tj["shape"] = {t.rows()};
    else
      tj["shape"] = {t.rows(), t.cols()};
    tj["offset"] = data.size();
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        if (f32)
          put_le(data, static_cast<float>(t(r, c)));
        else
          put_le(data, t(r, c));
      }
    tj["nbytes"] = data.size() - tj["offset"].get<std::size_t>();
    tensors.push_back(std::move(tj));
  });

  nlohmann::ordered_json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["config"] = config_json(ckpt.config);
  header["step"] = ckpt.step;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (const auto& [k, v] : ckpt.metrics) metrics[k] = v;
  header["metrics"] = metrics;
  header["vocab"] = ckpt.vocab;
  header["tensors"] = tensors;
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint64_t>(out, header_text.size());
  out += header_text;
  out += data;
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error("not a checkpoint file");
  const auto header_len = get_le<std::uint64_t>(bytes, 8);
  if (16 + header_len > bytes.size()) throw Error("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint header: ") + e.what());
  }
  const int version = header.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion)
    throw Error("unsupported checkpoint format_version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.config = config_from(header.at("config"));
  ckpt.step = header.at("step").get<std::size_t>();
  for (const auto& [k, v] : header.at("metrics").items()) ckpt.metrics[k] = v.get<double>();
  ckpt.vocab = header.at("vocab").get<std::vector<std::string>>();
  ckpt.params = init_parameters(ckpt.config);

  const std::size_t data_start = 16 + header_len;
  std::map<std::string, nlohmann::json> by_name;
  for (const auto& tj : header.at("tensors")) by_name[tj.at("name").get<std::string>()] = tj;
  ckpt.params.for_each([&](const std::string& name, auto& t) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error("checkpoint lacks tensor " + name);
    const auto& tj = it->second;
    auto shape = tj.at("shape").get<std::vector<std::int64_t>>();
    const std::int64_t rows = shape.at(0);
    const std::int64_t cols = shape.size() > 1 ? shape[1] : 1;
    if (rows != t.rows() || cols != t.cols()) throw Error("tensor " + name + " has a shape inconsistent with config");
    const bool f32 = tj.at("dtype").get<std::string>() == "f32";
    std::size_t off = data_start + tj.at("offset").get<std::size_t>();
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        if (f32) {
          t(r, c) = get_le<float>(bytes, off);
          off += 4;
        } else {
          t(r, c) = get_le<double>(bytes, off);
          off += 8;
        }
      }
  });
  if (!ckpt.params.all_finite()) throw Error("checkpoint contains non-finite parameters");
  return ckpt;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failure on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace genqa
