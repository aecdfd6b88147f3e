#include "dssa/io/weights.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

namespace dssa::io {

namespace {

class Writer {
 public:
  std::vector<std::uint8_t> bytes;

  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void raw(const void* p, std::size_t n) {
    auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void patch_u32(std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes[at + i] = std::uint8_t(v >> (8 * i));
  }
  void patch_u64(std::size_t at, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes[at + i] = std::uint8_t(v >> (8 * i));
  }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(std::uint8_t(v >> (8 * i)));
  }
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t limit) : bytes_(b), limit_(limit) {}

  std::uint64_t uint(int n) {
    need(n);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > limit_) throw FormatError("weight container: header truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
  return std::uint32_t(crc32(crc32(0L, Z_NULL, 0), p, uInt(n)));
}

std::size_t align_up(std::size_t v) {
  return (v + kPayloadAlignment - 1) / kPayloadAlignment * kPayloadAlignment;
}

std::uint32_t float_bits(float f) { return std::bit_cast<std::uint32_t>(f); }

}  // namespace

std::vector<std::uint8_t> encode_weights(const std::vector<WeightEntry>& entries) {
  std::set<std::string> names;
  for (const auto& e : entries) {
    if (e.name.empty() || e.name.size() > 0xFFFF) throw FormatError("weight name length invalid");
    if (!names.insert(e.name).second) throw FormatError("duplicate weight name " + e.name);
    if (e.shape.size() > 0xFF) throw FormatError("rank too large for " + e.name);
    if (shape_numel(e.shape) != e.values.size()) {
      throw FormatError("weight " + e.name + " holds " + std::to_string(e.values.size()) +
                        " values for shape " + shape_str(e.shape));
    }
  }
  Writer w;
  w.raw(kWeightMagic, 4);
  w.u16(kWeightVersion);
  w.u16(0);
  w.u32(std::uint32_t(entries.size()));
  const std::size_t header_size_at = w.bytes.size();
  w.u32(0);
  std::vector<std::size_t> offset_at;
  for (const auto& e : entries) {
    w.u16(std::uint16_t(e.name.size()));
    w.raw(e.name.data(), e.name.size());
    w.u8(0);
    w.u8(std::uint8_t(e.shape.size()));
    for (auto d : e.shape) {
      if (d > 0xFFFFFFFFu) throw FormatError("extent too large in " + e.name);
      w.u32(std::uint32_t(d));
    }
    offset_at.push_back(w.bytes.size());
    w.u64(0);
  }
  const std::size_t header_size = w.bytes.size() + 4;
  w.patch_u32(header_size_at, std::uint32_t(header_size));
  std::size_t cursor = align_up(header_size);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    w.patch_u64(offset_at[i], cursor);
    cursor = align_up(cursor + entries[i].values.size() * 4);
  }
  w.u32(crc32_of(w.bytes.data(), w.bytes.size()));
  for (const auto& e : entries) {
    w.bytes.resize(align_up(w.bytes.size()), 0);
    for (float f : e.values) w.u32(float_bits(f));
  }
  return w.bytes;
}

std::vector<WeightEntry> decode_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kWeightMagic, 4) != 0) {
    throw FormatError("weight container: bad magic");
  }
  Reader fixed(bytes, 16);
  fixed.str(4);
  const auto version = fixed.uint(2);
  if (version != kWeightVersion) {
    throw FormatError("weight container: unsupported version " + std::to_string(version));
  }
  fixed.uint(2);
  const auto count = fixed.uint(4);
  const auto header_size = fixed.uint(4);
  if (header_size < 20 || header_size > bytes.size()) {
    throw FormatError("weight container: header size out of range");
  }
  Reader crc_reader(bytes, header_size);
  crc_reader.str(header_size - 4);
  const auto stored_crc = crc_reader.uint(4);
  if (stored_crc != crc32_of(bytes.data(), header_size - 4)) {
    throw FormatError("weight container: header CRC mismatch");
  }

  Reader r(bytes, header_size - 4);
  r.str(16);
  std::vector<WeightEntry> out;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
  std::set<std::string> names;
  for (std::uint64_t i = 0; i < count; ++i) {
    WeightEntry e;
    e.name = r.str(r.uint(2));
    if (e.name.empty() || !names.insert(e.name).second) {
      throw FormatError("weight container: empty or duplicate name '" + e.name + "'");
    }
    const auto dtype = r.uint(1);
    if (dtype != 0) throw FormatError("weight container: unknown dtype in " + e.name);
    const auto rank = r.uint(1);
    for (std::uint64_t k = 0; k < rank; ++k) e.shape.push_back(r.uint(4));
    const auto offset = r.uint(8);
    const std::uint64_t length = std::uint64_t(shape_numel(e.shape)) * 4;
    if (offset % kPayloadAlignment != 0 || offset < header_size || offset > bytes.size() ||
        length > bytes.size() - offset) {
      throw FormatError("weight container: payload of " + e.name + " out of bounds");
    }
    spans.push_back({offset, offset + length});
    e.values.resize(shape_numel(e.shape));
    for (std::size_t k = 0; k < e.values.size(); ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t(bytes[offset + 4 * k + b]) << (8 * b);
      e.values[k] = std::bit_cast<float>(bits);
    }
    out.push_back(std::move(e));
  }
  if (r.pos() != header_size - 4) throw FormatError("weight container: trailing header bytes");
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) {
      throw FormatError("weight container: overlapping payloads");
    }
  }
  return out;
}

void save_weights(const std::filesystem::path& path, const std::vector<WeightEntry>& entries) {
  const auto bytes = encode_weights(entries);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw FormatError("write failed for " + path.string());
}

std::vector<WeightEntry> load_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

std::vector<WeightEntry> entries_from(const ParamList<float>& params) {
  std::vector<WeightEntry> out;
  for (const auto& p : params) {
    out.push_back({p.name, p.tensor.shape(),
                   std::vector<float>(p.tensor.data().begin(), p.tensor.data().end())});
  }
  return out;
}

void assign_weights(const std::vector<WeightEntry>& entries, const ParamList<float>& params) {
  std::map<std::string, const WeightEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  if (by_name.size() != params.size()) {
    throw FormatError("weight file has " + std::to_string(by_name.size()) +
                      " tensors, model expects " + std::to_string(params.size()));
  }
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("weight file lacks " + p.name);
    if (it->second->shape != p.tensor.shape()) {
      throw FormatError("shape mismatch for " + p.name + ": file " +
                        shape_str(it->second->shape) + ", model " + shape_str(p.tensor.shape()));
    }
    Tensor<float> t = p.tensor;
    std::copy(it->second->values.begin(), it->second->values.end(), t.data().begin());
  }
}

}  // namespace dssa::io
