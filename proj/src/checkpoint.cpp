#include "neutart/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "neutart/errors.hpp"

namespace neutart::num {

namespace {

constexpr char kMagic[8] = {'N', 'T', 'C', 'K', '0', '0', '0', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw DataError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

} // namespace

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor*>>& named) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put_u64(os, named.size());
  for (const auto& [name, tensor] : named) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(0)); // dtype: f64
    os.put(static_cast<char>(tensor->ndim()));
    for (long d : tensor->shape()) put_u64(os, static_cast<std::uint64_t>(d));
    for (double v : tensor->data()) put_f64(os, v);
  }
  if (!os) throw DataError("checkpoint: write failed for " + path);
}

std::map<std::string, Tensor> load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  std::uint64_t count = get_u64(is);
  std::map<std::string, Tensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw DataError("checkpoint: truncated name in " + path);
    int dtype = is.get();
    int ndim = is.get();
    if (dtype != 0 || ndim < 0)
      throw DataError("checkpoint: unsupported tensor header for '" + name + "'");
    std::vector<long> shape(static_cast<size_t>(ndim));
    long total = 1;
    for (auto& d : shape) {
      d = static_cast<long>(get_u64(is));
      total *= d;
    }
    std::vector<double> data(static_cast<size_t>(total));
    for (auto& v : data) v = get_f64(is);
    out.emplace(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
  }
  return out;
}

} // namespace neutart::num
