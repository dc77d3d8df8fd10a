#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace camadapt {

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> dims;  // empty dims = scalar (one value)
  std::vector<double> data;

  std::uint64_t expected_count() const {
    std::uint64_t c = 1;
    for (std::uint64_t d : dims) c *= d;
    return c;
  }
};

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, Truncated, VersionMismatch, Malformed, Io };
  CheckpointError(Kind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

inline void put_f64_le(std::string& out, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, 8);
  put_le(out, bits);
}

class Reader {
 public:
  Reader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}

  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(p_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  double get_f64_le() {
    const std::uint64_t bits = get_le<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::string get_bytes(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
    pos_ += len;
    return s;
  }

  bool exhausted() const { return pos_ == n_; }

 private:
  void need(std::size_t k) const {
    if (pos_ + k > n_)
      throw CheckpointError(CheckpointError::Kind::Truncated,
                            "checkpoint truncated");
  }
  const unsigned char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

}  // namespace detail

constexpr std::uint32_t kCheckpointVersion = 1;

// Container layout: "ADCK", u32 version, u32 entry count; per entry a u16
// name length, the name bytes, a u8 rank, rank u64 dims and the row-major
// IEEE-754 payload. Everything little-endian. Round-trips are bit-exact.
inline void write_checkpoint(const std::string& path,
                             std::span<const NamedArray> arrays) {
  std::string buf;
  buf += "ADCK";
  detail::put_le<std::uint32_t>(buf, kCheckpointVersion);
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(arrays.size()));
  for (const NamedArray& a : arrays) {
    if (a.name.size() > 0xffff)
      throw CheckpointError(CheckpointError::Kind::Malformed,
                            "entry name too long: " + a.name);
    if (a.dims.size() > 0xff)
      throw CheckpointError(CheckpointError::Kind::Malformed,
                            "entry rank too large: " + a.name);
    if (a.data.size() != a.expected_count())
      throw CheckpointError(
          CheckpointError::Kind::Malformed,
          "entry data size does not match dims: " + a.name);
    detail::put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(a.name.size()));
    buf += a.name;
    buf.push_back(static_cast<char>(a.dims.size()));
    for (std::uint64_t d : a.dims) detail::put_le(buf, d);
    for (double v : a.data) detail::put_f64_le(buf, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw CheckpointError(CheckpointError::Kind::Io, "cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out)
    throw CheckpointError(CheckpointError::Kind::Io, "short write: " + path);
}

inline std::vector<NamedArray> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CheckpointError(CheckpointError::Kind::Io, "cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  detail::Reader r(reinterpret_cast<const unsigned char*>(buf.data()),
                   buf.size());
  const std::string magic = r.get_bytes(4);
  if (magic != "ADCK")
    throw CheckpointError(CheckpointError::Kind::BadMagic,
                          "bad magic in " + path);
  const std::uint32_t version = r.get_le<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(
        CheckpointError::Kind::VersionMismatch,
        "unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = r.get_le<std::uint32_t>();
  std::vector<NamedArray> arrays;
  arrays.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    NamedArray a;
    const std::uint16_t name_len = r.get_le<std::uint16_t>();
    a.name = r.get_bytes(name_len);
    const std::uint8_t rank = r.get_le<std::uint8_t>();
    a.dims.resize(rank);
    for (std::uint8_t d = 0; d < rank; ++d)
      a.dims[d] = r.get_le<std::uint64_t>();
    const std::uint64_t n = a.expected_count();
    a.data.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) a.data[i] = r.get_f64_le();
    arrays.push_back(std::move(a));
  }
  if (!r.exhausted())
    throw CheckpointError(CheckpointError::Kind::Malformed,
                          "trailing bytes in " + path);
  return arrays;
}

inline const NamedArray& find_array(std::span<const NamedArray> arrays,
                                    const std::string& name) {
  for (const NamedArray& a : arrays)
    if (a.name == name) return a;
  throw CheckpointError(CheckpointError::Kind::Malformed,
                        "missing checkpoint entry: " + name);
}

}  // namespace camadapt
