#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "iderase/common.hpp"
#include "iderase/tensor.hpp"

namespace iderase {

// Checkpoint archive: magic, format version, string metadata, named tensors,
// trailing CRC-32 over everything before it. Scalars are raw little-endian.
static_assert(std::endian::native == std::endian::little,
              "archive format assumes a little-endian host");

namespace detail {

constexpr char kArchiveMagic[8] = {'I', 'D', 'E', 'R', 'A', 'S', 'E', '\0'};

template <class T>
constexpr std::uint8_t dtype_code() {
  if constexpr (std::is_same_v<T, float>) return 1;
  else if constexpr (std::is_same_v<T, double>) return 2;
  else static_assert(sizeof(T) == 0, "unsupported archive dtype");
}

inline void put_bytes(std::vector<std::uint8_t>& buf, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  buf.insert(buf.end(), b, b + n);
}

template <class T>
void put_pod(std::vector<std::uint8_t>& buf, T v) {
  put_bytes(buf, &v, sizeof(T));
}

inline void put_str(std::vector<std::uint8_t>& buf, const std::string& s) {
  put_pod<std::uint32_t>(buf, static_cast<std::uint32_t>(s.size()));
  put_bytes(buf, s.data(), s.size());
}

struct Cursor {
  const std::uint8_t* p;
  const std::uint8_t* end;

  void take(void* dst, std::size_t n) {
    if (static_cast<std::size_t>(end - p) < n)
      throw RuntimeFailure("archive truncated");
    std::memcpy(dst, p, n);
    p += n;
  }
  template <class T>
  T pod() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  std::string str() {
    auto n = pod<std::uint32_t>();
    std::string s(n, '\0');
    take(s.data(), n);
    return s;
  }
};

}  // namespace detail

class ArchiveWriter {
 public:
  void put_meta(const std::string& key, const std::string& value) {
    check(!meta_.count(key), "archive: duplicate meta key " + key);
    meta_[key] = value;
  }

  template <class T>
  void put_tensor(const std::string& name, const Tensor<T>& t) {
    for (const auto& [n, b] : tensors_)
      check(n != name, "archive: duplicate tensor " + name);
    std::vector<std::uint8_t> rec;
    detail::put_str(rec, name);
    detail::put_pod<std::uint8_t>(rec, detail::dtype_code<T>());
    detail::put_pod<std::uint32_t>(rec, static_cast<std::uint32_t>(t.ndim()));
    for (auto d : t.shape) detail::put_pod<std::int64_t>(rec, d);
    detail::put_bytes(rec, t.data(), t.v.size() * sizeof(T));
    tensors_.emplace_back(name, std::move(rec));
  }

  void save(const std::filesystem::path& path) const {
    std::vector<std::uint8_t> buf;
    detail::put_bytes(buf, detail::kArchiveMagic, sizeof(detail::kArchiveMagic));
    detail::put_pod<std::uint32_t>(buf, kFormatVersion);
    detail::put_pod<std::uint32_t>(buf, static_cast<std::uint32_t>(meta_.size()));
    for (const auto& [k, v] : meta_) {
      detail::put_str(buf, k);
      detail::put_str(buf, v);
    }
    detail::put_pod<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors_.size()));
    for (const auto& [n, rec] : tensors_)
      detail::put_bytes(buf, rec.data(), rec.size());
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0L, buf.data(), static_cast<uInt>(buf.size())));
    detail::put_pod<std::uint32_t>(buf, crc);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw RuntimeFailure("cannot open for write: " + path.string());
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
    if (!f) throw RuntimeFailure("write failed: " + path.string());
  }

 private:
  std::map<std::string, std::string> meta_;  // sorted -> deterministic bytes
  std::vector<std::pair<std::string, std::vector<std::uint8_t>>> tensors_;
};

class ArchiveReader {
 public:
  explicit ArchiveReader(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw RuntimeFailure("cannot open archive: " + path.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
    if (buf.size() < sizeof(detail::kArchiveMagic) + 12)
      throw RuntimeFailure("archive too small: " + path.string());

    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0L, buf.data(), static_cast<uInt>(buf.size() - 4)));
    if (crc != stored_crc)
      throw RuntimeFailure("archive checksum mismatch (corrupt file): " +
                           path.string());

    detail::Cursor c{buf.data(), buf.data() + buf.size() - 4};
    char magic[8];
    c.take(magic, 8);
    if (std::memcmp(magic, detail::kArchiveMagic, 8) != 0)
      throw RuntimeFailure("not an archive: " + path.string());
    auto version = c.pod<std::uint32_t>();
    if (version != kFormatVersion)
      throw RuntimeFailure("archive format version " + std::to_string(version) +
                           " does not match supported version " +
                           std::to_string(kFormatVersion));

    auto n_meta = c.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
      auto k = c.str();
      meta_[k] = c.str();
    }
    auto n_tensors = c.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
      Entry e;
      std::string name = c.str();
      e.dtype = c.pod<std::uint8_t>();
      auto ndim = c.pod<std::uint32_t>();
      std::int64_t numel = 1;
      for (std::uint32_t d = 0; d < ndim; ++d) {
        e.shape.push_back(c.pod<std::int64_t>());
        numel *= e.shape.back();
      }
      std::size_t bytes = static_cast<std::size_t>(numel) *
                          (e.dtype == 1 ? sizeof(float) : sizeof(double));
      e.raw.resize(bytes);
      c.take(e.raw.data(), bytes);
      entries_.emplace(std::move(name), std::move(e));
    }
  }

  bool has_meta(const std::string& key) const { return meta_.count(key) > 0; }

  const std::string& meta(const std::string& key) const {
    auto it = meta_.find(key);
    if (it == meta_.end())
      throw RuntimeFailure("archive missing metadata key: " + key);
    return it->second;
  }

  bool has_tensor(const std::string& name) const {
    return entries_.count(name) > 0;
  }

  template <class T>
  Tensor<T> tensor(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
      throw RuntimeFailure("archive missing tensor: " + name);
    const Entry& e = it->second;
    if (e.dtype != detail::dtype_code<T>())
      throw RuntimeFailure("archive tensor " + name + " has wrong dtype");
    Tensor<T> t(e.shape);
    std::memcpy(t.data(), e.raw.data(), e.raw.size());
    return t;
  }

  std::vector<std::string> tensor_names() const {
    std::vector<std::string> out;
    for (const auto& [n, e] : entries_) out.push_back(n);
    return out;
  }

 private:
  struct Entry {
    std::uint8_t dtype = 0;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> raw;
  };
  std::map<std::string, std::string> meta_;
  std::map<std::string, Entry> entries_;
};

}  // namespace iderase
