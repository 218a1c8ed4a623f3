#include "skillnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "skillnet/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace skillnet {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'N', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IntegrityError("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& entries) {
  {
    std::map<std::string, int> seen;
    for (auto& [name, t] : entries) {
      (void)t;
      if (++seen[name] > 1) throw ContractError("save_checkpoint: duplicate name '" + name + "'");
    }
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot write checkpoint '" + path + "'");
  os.write(kMagic, 4);
  put<uint32_t>(os, kVersion);
  put<uint64_t>(os, entries.size());
  uint64_t bytes = 4 + 4 + 8;
  for (auto& [name, t] : entries) {
    put<uint32_t>(os, uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    put<uint32_t>(os, uint32_t(t.rank()));
    for (int d : t.dims()) put<uint64_t>(os, uint64_t(d));
    for (double v : t.values()) put<float>(os, float(v));
    bytes += 4 + name.size() + 4 + 8 * size_t(t.rank()) + 4 * t.values().size();
  }
  put<uint64_t>(os, bytes);
  if (!os) throw InputError("short write on checkpoint '" + path + "'");
}

std::map<std::string, TensorBlob> load_checkpoint_blobs(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw IntegrityError("checkpoint '" + path + "' has a bad magic header");
  }
  const uint32_t version = get<uint32_t>(is);
  if (version != kVersion) {
    throw IntegrityError("checkpoint version " + std::to_string(version) + " unsupported");
  }
  const uint64_t count = get<uint64_t>(is);
  uint64_t bytes = 4 + 4 + 8;
  std::map<std::string, TensorBlob> out;
  for (uint64_t e = 0; e < count; ++e) {
    const uint32_t name_len = get<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw IntegrityError("checkpoint truncated inside entry name");
    const uint32_t rank = get<uint32_t>(is);
    TensorBlob blob;
    uint64_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const uint64_t dim = get<uint64_t>(is);
      blob.dims.push_back(int(dim));
      n *= dim;
    }
    blob.values.resize((size_t)(n));
    for (uint64_t i = 0; i < n; ++i) blob.values[size_t(i)] = double(get<float>(is));
    if (out.count(name)) throw IntegrityError("checkpoint has duplicate entry '" + name + "'");
    bytes += 4 + name_len + 4 + 8 * rank + 4 * n;
    out.emplace(std::move(name), std::move(blob));
  }
  const uint64_t trailer = get<uint64_t>(is);
  if (trailer != bytes) {
    throw IntegrityError("checkpoint length checksum mismatch: trailer says " +
                         std::to_string(trailer) + ", body is " + std::to_string(bytes));
  }
  return out;
}

void save_model(const Model& model, const std::string& path) {
  std::vector<std::pair<std::string, Tensor>> entries;
  for (const auto& p : model.parameters()) entries.emplace_back(p.name, p.tensor);
  save_checkpoint(path, entries);
}

void load_model(Model& model, const std::string& path) {
  auto blobs = load_checkpoint_blobs(path);
  if (blobs.count("acoustic.centroids") && !model.has_param("acoustic.centroids")) {
    const auto& blob = blobs.at("acoustic.centroids");
    model.set_acoustic_centroids(Tensor::from_values(blob.dims, blob.values));
  }
  for (const auto& p : model.parameters()) {
    auto it = blobs.find(p.name);
    if (it == blobs.end()) {
      throw IntegrityError("checkpoint is missing parameter '" + p.name + "'");
    }
    if (it->second.dims != p.tensor.dims()) {
      throw IntegrityError("checkpoint parameter '" + p.name + "' has dims " +
                           dims_str(it->second.dims) + ", model expects " +
                           dims_str(p.tensor.dims()));
    }
    model.param(p.name).mutable_values() = it->second.values;
  }
}

}  // namespace skillnet
