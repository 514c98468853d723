#include "mbbr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "mbbr/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace mbbr {

namespace {

constexpr char kMagic[8] = {'M', 'B', 'B', 'R', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is, const std::string& what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("checkpoint: truncated reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ad::ParamSet& params,
                     ad::Precision dtype) {
  std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";

  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("checkpoint: cannot open " + tmp.string() + " for write");
    os.write(kMagic, sizeof(kMagic));
    put<uint32_t>(os, kVersion);
    put<uint8_t>(os, dtype == ad::Precision::f32 ? 1 : 0);
    put<uint32_t>(os, static_cast<uint32_t>(params.size()));
    for (const auto& [name, t] : params.items()) {
      put<uint32_t>(os, static_cast<uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
      for (size_t d : t.shape()) put<uint64_t>(os, static_cast<uint64_t>(d));
      if (dtype == ad::Precision::f32) {
        for (double v : t.values()) put<float>(os, static_cast<float>(v));
      } else {
        const auto& v = t.values();
        os.write(reinterpret_cast<const char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double)));
      }
    }
    if (!os) throw DataError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

ad::ParamSet read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path);

  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  uint32_t version = take<uint32_t>(is, "version");
  if (version != kVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  uint8_t dtype = take<uint8_t>(is, "dtype");
  if (dtype > 1) throw DataError("checkpoint: unknown dtype " + std::to_string(dtype));
  uint32_t count = take<uint32_t>(is, "tensor count");

  ad::ParamSet out;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = take<uint32_t>(is, "name length");
    if (name_len > 4096) throw DataError("checkpoint: absurd name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw DataError("checkpoint: truncated reading name");
    uint32_t ndim = take<uint32_t>(is, "ndim of " + name);
    if (ndim > 8) throw DataError("checkpoint: absurd rank for " + name);
    ad::Shape shape(ndim);
    size_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      shape[d] = static_cast<size_t>(take<uint64_t>(is, "dims of " + name));
      numel *= shape[d];
    }
    std::vector<double> values(numel);
    if (dtype == 1) {
      std::vector<float> buf(numel);
      is.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(numel * sizeof(float)));
      if (!is) throw DataError("checkpoint: truncated payload for " + name);
      for (size_t j = 0; j < numel; ++j) values[j] = static_cast<double>(buf[j]);
    } else {
      is.read(reinterpret_cast<char*>(values.data()),
              static_cast<std::streamsize>(numel * sizeof(double)));
      if (!is) throw DataError("checkpoint: truncated payload for " + name);
    }
    out.add(std::move(name),
            ad::Tensor::from_values(std::move(shape), std::move(values), true));
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw DataError("checkpoint: trailing bytes in " + path);
  return out;
}

void load_checkpoint(const std::string& path, ad::ParamSet& params) {
  ad::ParamSet loaded = read_checkpoint(path);
  if (loaded.size() != params.size())
    throw DataError("checkpoint: has " + std::to_string(loaded.size()) +
                    " tensors, model expects " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& [want_name, dst] = params.items()[i];
    auto& [got_name, src] = loaded.items()[i];
    if (want_name != got_name)
      throw DataError("checkpoint: tensor " + std::to_string(i) + " is " + got_name +
                      ", expected " + want_name);
    if (src.shape() != dst.shape())
      throw DataError("checkpoint: shape mismatch for " + want_name + ": " +
                      ad::shape_str(src.shape()) + " vs " + ad::shape_str(dst.shape()));
    dst.values_mut() = src.values();
  }
}

}  // namespace mbbr
