#include "rsrep/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "rsrep/errors.hpp"
#include "rsrep/hash.hpp"

namespace rsrep {
namespace {

constexpr char kMagic[8] = {'R', 'S', 'R', 'E', 'P', 'C', 'K', 'P'};
constexpr std::size_t kHashChars = 64;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

void append_tensor_bytes(std::vector<std::uint8_t>& out, const Tensor& t) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(t.data());
  out.insert(out.end(), p, p + t.size() * sizeof(double));
}

std::string hash_of_body(const std::vector<std::uint8_t>& bytes, std::size_t body_len) {
  return sha256_hex(std::span(bytes.data(), body_len));
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& t : ckpt.tensors) table.push_back({{"name", t.name}, {"shape", t.value.shape()}});
  const nlohmann::json header = {{"encoder", ckpt.encoder},
                                 {"predictor", ckpt.predictor},
                                 {"iteration", ckpt.iteration},
                                 {"source_dataset", ckpt.source_dataset},
                                 {"tensors", table}};
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, ckpt.format_version);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : ckpt.tensors) append_tensor_bytes(out, t.value);
  const std::string digest = hash_of_body(out, out.size());
  out.insert(out.end(), digest.begin(), digest.end());
  return out;
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + kHashChars || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw IoError("not a checkpoint file");
  }
  const std::size_t body_len = bytes.size() - kHashChars;
  const std::string stored(bytes.begin() + static_cast<std::ptrdiff_t>(body_len), bytes.end());
  if (stored != hash_of_body(bytes, body_len)) throw IoError("checkpoint content hash mismatch");

  std::size_t pos = sizeof(kMagic);
  Checkpoint ckpt;
  ckpt.format_version = get<std::uint32_t>(bytes, pos);
  if (ckpt.format_version != kCheckpointFormatVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(ckpt.format_version));
  }
  const auto header_len = get<std::uint64_t>(bytes, pos);
  if (pos + header_len > body_len) throw IoError("checkpoint header truncated");
  const auto header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                            bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
  pos += header_len;
  ckpt.encoder = header.at("encoder").get<EncoderSpec>();
  ckpt.predictor = header.at("predictor").get<PredictorSpec>();
  ckpt.iteration = header.at("iteration").get<std::int64_t>();
  ckpt.source_dataset = header.at("source_dataset").get<std::string>();
  for (const auto& entry : header.at("tensors")) {
    Tensor t(entry.at("shape").get<std::vector<int>>());
    const std::size_t n = t.size() * sizeof(double);
    if (pos + n > body_len) throw IoError("checkpoint payload truncated");
    std::memcpy(t.data(), bytes.data() + pos, n);
    pos += n;
    ckpt.tensors.push_back({entry.at("name").get<std::string>(), std::move(t)});
  }
  if (pos != body_len) throw IoError("checkpoint has trailing bytes");
  return ckpt;
}

std::string save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
  return std::string(bytes.end() - kHashChars, bytes.end());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::string checkpoint_hash(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);  // validates the stored digest
  return checkpoint_hash(ckpt);
}

std::string checkpoint_hash(const Checkpoint& ckpt) {
  const auto bytes = serialize(ckpt);
  return std::string(bytes.end() - kHashChars, bytes.end());
}

Checkpoint capture(SimSiamModel& model, std::int64_t iteration, const std::string& source_dataset) {
  Checkpoint ckpt;
  ckpt.encoder = model.encoder().spec();
  ckpt.predictor = model.predictor().spec();
  ckpt.iteration = iteration;
  ckpt.source_dataset = source_dataset;
  for (const auto& p : model.parameters()) ckpt.tensors.push_back({p.name, p.param->value});
  for (const auto& b : model.buffers()) ckpt.tensors.push_back({b.name, *b.tensor});
  return ckpt;
}

void restore(SimSiamModel& model, const Checkpoint& ckpt) {
  if (!(ckpt.encoder == model.encoder().spec()) || !(ckpt.predictor == model.predictor().spec())) {
    throw ConfigError("checkpoint specs do not match the model");
  }
  auto assign = [&](const std::string& name, Tensor& target) {
    const Tensor* src = ckpt.find(name);
    if (!src) throw ValidationError("checkpoint lacks tensor " + name);
    if (!src->same_shape(target)) {
      throw DimensionError("checkpoint tensor " + name + " has shape " + shape_string(src->shape()) +
                           ", model expects " + shape_string(target.shape()));
    }
    target = *src;
  };
  for (const auto& p : model.parameters()) assign(p.name, p.param->value);
  for (const auto& b : model.buffers()) assign(b.name, *b.tensor);
}

std::string state_hash(Module& m) {
  std::vector<std::uint8_t> bytes;
  std::vector<NamedParameter> params;
  std::vector<NamedBuffer> buffers;
  m.collect("", params, buffers);
  auto add = [&](const std::string& name, const Tensor& t) {
    bytes.insert(bytes.end(), name.begin(), name.end());
    bytes.push_back(0);
    append_tensor_bytes(bytes, t);
  };
  for (const auto& p : params) add(p.name, p.param->value);
  for (const auto& b : buffers) add(b.name, *b.tensor);
  return sha256_hex(bytes);
}

}  // namespace rsrep
