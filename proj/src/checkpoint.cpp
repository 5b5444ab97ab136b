#include "clvqa/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "clvqa/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace clvqa {
namespace {

constexpr char kMagic[5] = {'C', 'L', 'V', 'Q', '1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& is, const std::string& path) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw data_error("checkpoint: truncated file " + path);
  return v;
}

}  // namespace

void save_checkpoint(const ParameterStore& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw runtime_abort("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, kVersion);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const std::string& name : params.names()) {
    const Tensor& t = params.get(name);
    write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<long>(name.size()));
    write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape) write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<long>(t.data.size() * sizeof(double)));
  }
  if (!os) throw runtime_abort("checkpoint: write failed for " + path);
  os.close();
  if (!os) throw runtime_abort("checkpoint: close failed for " + path);

  std::ofstream side(path + ".frozen", std::ios::binary);
  if (!side) throw runtime_abort("checkpoint: cannot write sidecar for " + path);
  for (const std::string& name : params.names()) {
    side << name << '\t' << (params.frozen(name) ? 1 : 0) << '\n';
  }
  if (!side) throw runtime_abort("checkpoint: sidecar write failed for " + path);
}

ParameterStore load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("checkpoint: cannot open " + path);
  char magic[5];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw data_error("checkpoint: bad magic in " + path);
  }
  const auto version = read_pod<std::uint32_t>(is, path);
  if (version != kVersion) {
    throw data_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = read_pod<std::uint32_t>(is, path);
  ParameterStore params;
  for (std::uint32_t a = 0; a < count; ++a) {
    const auto name_len = read_pod<std::uint16_t>(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw data_error("checkpoint: truncated file " + path);
    const auto rank = read_pod<std::uint8_t>(is, path);
    std::vector<int> shape;
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const auto dim = read_pod<std::uint32_t>(is, path);
      shape.push_back(static_cast<int>(dim));
      numel *= dim;
    }
    std::vector<double> data(numel);
    is.read(reinterpret_cast<char*>(data.data()), static_cast<long>(numel * sizeof(double)));
    if (!is) throw data_error("checkpoint: truncated payload for array " + name);
    params.add(name, Tensor(std::move(shape), std::move(data)));
  }

  // restore freeze flags when the sidecar is present
  std::ifstream side(path + ".frozen", std::ios::binary);
  if (side) {
    std::string line;
    while (std::getline(side, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw data_error("checkpoint: malformed sidecar for " + path);
      const std::string name = line.substr(0, tab);
      if (params.has(name)) params.set_frozen(name, line.substr(tab + 1) == "1");
    }
  }
  return params;
}

}  // namespace clvqa
