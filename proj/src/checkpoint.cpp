#include "wklm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "wklm/error.hpp"

namespace wklm {
namespace {

constexpr char kMagic[8] = {'W', 'K', 'L', 'M', 'C', 'K', 'P', 'T'};
constexpr int kFormatVersion = 1;

static_assert(sizeof(double) == 8);

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["layers"] = c.layers;
  j["hidden"] = c.hidden;
  j["heads"] = c.heads;
  j["ff_dim"] = c.ff_dim;
  j["vocab"] = c.vocab;
  j["max_len"] = c.max_len;
  j["final_dropout"] = c.final_dropout;
  j["pad_token"] = c.pad_token;
  j["unk_token"] = c.unk_token;
  j["bos_token"] = c.bos_token;
  j["eos_token"] = c.eos_token;
  j["mask_token"] = c.mask_token;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.layers = j.value("layers", c.layers);
    c.hidden = j.value("hidden", c.hidden);
    c.heads = j.value("heads", c.heads);
    c.ff_dim = j.value("ff_dim", c.ff_dim);
    c.vocab = j.value("vocab", c.vocab);
    c.max_len = j.value("max_len", c.max_len);
    c.final_dropout = j.value("final_dropout", c.final_dropout);
    c.pad_token = j.value("pad_token", c.pad_token);
    c.unk_token = j.value("unk_token", c.unk_token);
    c.bos_token = j.value("bos_token", c.bos_token);
    c.eos_token = j.value("eos_token", c.eos_token);
    c.mask_token = j.value("mask_token", c.mask_token);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model config: ") + e.what());
  }
  return c;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path, const nlohmann::json& meta) {
  nlohmann::ordered_json header;
  header["format"] = kFormatVersion;
  header["config"] = config_to_json(model.config);
  header["vocab"] = model.vocab.tokens();
  header["meta"] = meta;
  auto tensors = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  const auto refs = model.params.refs();
  for (const auto& r : refs) {
    nlohmann::ordered_json t;
    t["name"] = r.name;
    t["shape"] = {r.tensor->rows(), r.tensor->cols()};
    t["offset"] = offset;
    offset += static_cast<std::uint64_t>(r.tensor->size()) * 8;
    tensors.push_back(std::move(t));
  }
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& r : refs) {
    const double* data = r.tensor->data();
    for (Eigen::Index i = 0; i < r.tensor->size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(data[i]));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError(path.string() + ": not a checkpoint");
  const auto header_len = get_u64(in);
  if (header_len > (1ULL << 32)) throw DataError(path.string() + ": implausible header length");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len)))
    throw DataError(path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad header: " + e.what());
  }
  if (header.value("format", 0) != kFormatVersion) throw DataError(path.string() + ": unsupported format");

  Model model;
  model.config = config_from_json(header.at("config"));
  model.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>());
  if (static_cast<std::size_t>(model.config.vocab) != model.vocab.size())
    throw DataError(path.string() + ": vocab size disagrees with config");
  try {
    model.params = ModelParams::zeros(model.config);
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }

  auto refs = model.params.refs();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != refs.size()) throw DataError(path.string() + ": tensor count mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& t = tensors[i];
    const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
    if (t.at("name").get<std::string>() != refs[i].name || shape.size() != 2 ||
        shape[0] != refs[i].tensor->rows() || shape[1] != refs[i].tensor->cols())
      throw DataError(path.string() + ": tensor " + refs[i].name + " does not match config");
    double* data = refs[i].tensor->data();
    for (Eigen::Index k = 0; k < refs[i].tensor->size(); ++k) data[k] = std::bit_cast<double>(get_u64(in));
  }
  return model;
}

}  // namespace wklm
