// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#include "ifal/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ifal/errors.hpp"

namespace ifal::nn {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ParamStore& store, std::string_view prefix) {
  const auto names = store.names(prefix);
  std::string out = "IFAL";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(names.size()));
  for (const auto& name : names) {
    const Tensor& t = store.get(name).value();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, kDtypeF64);
    put<std::uint8_t>(out, store.frozen(name) ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.data().data()), t.numel() * sizeof(double));
  }
  return out;
}

std::vector<CheckpointEntry> decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4) != "IFAL") throw FormatError("not an IFAL checkpoint (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    CheckpointEntry e;
    const auto name_len = in.get<std::uint32_t>();
    e.name = std::string(in.take(name_len));
    if (in.get<std::uint8_t>() != kDtypeF64) throw FormatError("unsupported dtype for '" + e.name + "'");
    e.frozen = in.get<std::uint8_t>() != 0;
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    std::vector<double> data(shape_numel(shape));
    auto payload = in.take(data.size() * sizeof(double));
    std::memcpy(data.data(), payload.data(), payload.size());
    e.value = Tensor(std::move(shape), std::move(data));
    entries.push_back(std::move(e));
  }
  if (!in.done()) throw FormatError("trailing bytes after checkpoint payload");
  return entries;
}

void write_checkpoint(const std::filesystem::path& path, const ParamStore& store, std::string_view prefix) {
  write_file_bytes(path, encode_checkpoint(store, prefix));
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

void restore(ParamStore& store, const std::vector<CheckpointEntry>& entries) {
  for (const auto& e : entries) {
    if (!store.contains(e.name)) throw FormatError("checkpoint parameter '" + e.name + "' not in model");
    if (store.get(e.name).shape() != e.value.shape()) {
      throw FormatError("checkpoint parameter '" + e.name + "' has shape " + shape_str(e.value.shape()) +
                        ", model expects " + shape_str(store.get(e.name).shape()));
    }
    store.assign(e.name, e.value);
    store.set_frozen(e.name, e.frozen);
  }
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace ifal::nn
