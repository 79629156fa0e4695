#include "quann/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "quann/errors.hpp"

namespace quann {
namespace {

constexpr std::array<char, 4> kMagic{'Q', 'N', 'N', '1'};
const std::string kFamilyTag = "meta/family/";

template <class T>
void put_le(std::ostream& os, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(value);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& is, const std::filesystem::path& path) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw IoError("truncated checkpoint " + path.string());
  }
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<double>(bits);
  } else {
    return static_cast<T>(bits);
  }
}

void put_name(std::ostream& os, const std::string& name) {
  if (name.size() > 0xffff) throw IoError("checkpoint tensor name too long: " + name.substr(0, 40));
  put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterList& params, const std::string& family) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size() + (family.empty() ? 0 : 1)));
  if (!family.empty()) {
    put_name(os, kFamilyTag + family);
    put_le<std::uint8_t>(os, 0);
  }
  for (const NamedTensor& p : params) {
    put_name(os, p.name);
    const Shape& shape = p.tensor.shape();
    if (shape.empty() || shape.size() > 255) throw IoError("checkpoint: unsupported rank for " + p.name);
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(shape.size()));
    for (std::size_t d : shape) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : p.tensor.data()) put_le<double>(os, v);
  }
  if (!os) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw IoError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(is, path);
  Checkpoint ck;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = get_le<std::uint16_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw IoError("truncated checkpoint " + path.string());
    const auto rank = get_le<std::uint8_t>(is, path);
    if (rank == 0) {
      if (name.rfind(kFamilyTag, 0) == 0) ck.family = name.substr(kFamilyTag.size());
      continue;
    }
    Shape shape(rank);
    for (auto& d : shape) d = get_le<std::uint32_t>(is, path);
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = get_le<double>(is, path);
    ck.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return ck;
}

void assign_parameters(const ParameterList& source, ParameterList& target) {
  if (source.size() != target.size()) {
    throw IoError("checkpoint has " + std::to_string(source.size()) + " tensors, model expects " +
                  std::to_string(target.size()));
  }
  std::map<std::string, const Tensor*> by_name;
  for (const NamedTensor& s : source) by_name[s.name] = &s.tensor;
  for (NamedTensor& t : target) {
    auto it = by_name.find(t.name);
    if (it == by_name.end()) throw IoError("checkpoint is missing tensor " + t.name);
    if (it->second->shape() != t.tensor.shape()) {
      throw IoError("checkpoint tensor " + t.name + " has shape " + shape_str(it->second->shape()) +
                    ", model expects " + shape_str(t.tensor.shape()));
    }
    auto dst = t.tensor.mutable_data();
    std::copy(it->second->data().begin(), it->second->data().end(), dst.begin());
  }
}

}  // namespace quann
