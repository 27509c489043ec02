#include "avatarcraft/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace avatarcraft::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'A', 'V', 'C', 'K', 'P', 'T', '0', '1'};
}

const Tensor& Archive::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw std::out_of_range("checkpoint has no tensor " + name);
}

void save(const std::filesystem::path& path, const Archive& archive) {
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : archive.tensors) {
    const std::uint64_t nbytes = t.data.size() * sizeof(float);
    table.push_back({{"name", t.name}, {"dtype", t.dtype}, {"shape", t.shape},
                     {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string header = nlohmann::json{{"meta", archive.meta}, {"tensors", table}}.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& t : archive.tensors)
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!out) throw std::runtime_error("short write to checkpoint " + path.string());
}

Archive load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error(path.string() + " is not an avatarcraft checkpoint");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated checkpoint header in " + path.string());
  const auto doc = nlohmann::json::parse(header);
  Archive archive;
  archive.meta = doc.at("meta");
  const auto payload_start = in.tellg();
  for (const auto& entry : doc.at("tensors")) {
    Tensor t;
    t.name = entry.at("name").get<std::string>();
    t.dtype = entry.at("dtype").get<std::string>();
    if (t.dtype != "f32") throw std::runtime_error("unsupported tensor dtype " + t.dtype);
    t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
    t.data.resize(nbytes / sizeof(float));
    in.seekg(payload_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(nbytes));
    if (!in) throw std::runtime_error("truncated tensor " + t.name + " in " + path.string());
    archive.tensors.push_back(std::move(t));
  }
  return archive;
}

void export_params(const nn::ParamStore& store, const std::string& prefix, Archive& archive) {
  for (const auto& p : store.params()) {
    Tensor t;
    t.name = prefix + p->name;
    t.shape = {p->rows, p->cols};
    t.data.assign(p->value.data(), p->value.data() + p->value.size());
    archive.tensors.push_back(std::move(t));
  }
}

void import_params(const Archive& archive, const std::string& prefix, nn::ParamStore& store) {
  for (auto& p : store.params()) {
    const Tensor& t = archive.find(prefix + p->name);
    if (t.shape.size() != 2 || t.shape[0] != p->rows || t.shape[1] != p->cols)
      throw std::runtime_error("shape mismatch for tensor " + t.name);
    std::memcpy(p->value.data(), t.data.data(), t.data.size() * sizeof(float));
  }
}

}  // namespace avatarcraft::checkpoint
