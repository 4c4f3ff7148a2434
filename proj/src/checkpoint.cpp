// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include "lesionaid/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lesionaid {
namespace {

constexpr char kMagic[8] = {'L', 'S', 'N', 'A', 'I', 'D', '0', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename U>
void write_le(std::vector<std::uint8_t>& out, U v) {
  std::uint8_t bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  out.insert(out.end(), bytes, bytes + sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U read() {
    U v;
    std::memcpy(&v, take(sizeof(U)), sizeof(U));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated");
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
void Checkpoint::put(const std::string& name, const Shape& shape, std::span<const T> values) {
  if (name.empty() || name.size() > 0xFFFF) throw CheckpointError("invalid array name length");
  if (shape.size() > 0xFF) throw CheckpointError("too many dimensions for '" + name + "'");
  if (numel(shape) != values.size()) throw CheckpointError("shape/value mismatch for '" + name + "'");
  NamedArray a{name, shape, std::vector<T>(values.begin(), values.end())};
  auto it = std::find_if(arrays_.begin(), arrays_.end(), [&](const NamedArray& x) { return x.name == name; });
  if (it != arrays_.end()) {
    *it = std::move(a);
  } else {
    arrays_.push_back(std::move(a));
  }
}

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(arrays_.begin(), arrays_.end(), [&](const NamedArray& x) { return x.name == name; });
}

const NamedArray& Checkpoint::at(const std::string& name) const {
  for (const auto& a : arrays_) {
    if (a.name == name) return a;
  }
  throw CheckpointError("checkpoint has no array named '" + name + "'");
}

template <typename T>
std::vector<T> Checkpoint::get(const std::string& name, const Shape& expected) const {
  const NamedArray& a = at(name);
  if (!expected.empty() && a.shape != expected) {
    throw CheckpointError("array '" + name + "' has shape " + to_string(a.shape) + ", expected " +
                         to_string(expected));
  }
  return std::visit([](const auto& v) { return std::vector<T>(v.begin(), v.end()); }, a.values);
}

template <typename T>
void Checkpoint::load_into(const std::string& name, Tensor<T>& dst) const {
  auto values = get<T>(name, dst.shape());
  std::copy(values.begin(), values.end(), dst.mutable_data().begin());
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(arrays_.size()));
  for (const auto& a : arrays_) {
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(a.name.size()));
    out.insert(out.end(), a.name.begin(), a.name.end());
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(a.values.index()));
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(a.shape.size()));
    for (auto d : a.shape) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    std::visit(
        [&](const auto& v) {
          const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
          out.insert(out.end(), p, p + v.size() * sizeof(v[0]));
        },
        a.values);
  }
  return out;
}

Checkpoint Checkpoint::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(8), kMagic, 8) != 0) throw CheckpointError("bad checkpoint magic");
  Checkpoint ck;
  const auto count = r.read<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    const auto len = r.read<std::uint16_t>();
    const auto* name = r.take(len);
    a.name.assign(reinterpret_cast<const char*>(name), len);
    const auto dtype = r.read<std::uint8_t>();
    const auto ndim = r.read<std::uint8_t>();
    for (std::uint8_t d = 0; d < ndim; ++d) a.shape.push_back(r.read<std::uint32_t>());
    const std::size_t n = numel(a.shape);
    if (dtype == 0) {
      std::vector<float> v(n);
      std::memcpy(v.data(), r.take(n * sizeof(float)), n * sizeof(float));
      a.values = std::move(v);
    } else if (dtype == 1) {
      std::vector<double> v(n);
      std::memcpy(v.data(), r.take(n * sizeof(double)), n * sizeof(double));
      a.values = std::move(v);
    } else {
      throw CheckpointError("unknown dtype tag " + std::to_string(dtype) + " for '" + a.name + "'");
    }
    ck.arrays_.push_back(std::move(a));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint arrays");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw CheckpointError("failed writing '" + path.string() + "'");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

template void Checkpoint::put<float>(const std::string&, const Shape&, std::span<const float>);
template void Checkpoint::put<double>(const std::string&, const Shape&, std::span<const double>);
template std::vector<float> Checkpoint::get<float>(const std::string&, const Shape&) const;
template std::vector<double> Checkpoint::get<double>(const std::string&, const Shape&) const;
template void Checkpoint::load_into<float>(const std::string&, Tensor<float>&) const;
template void Checkpoint::load_into<double>(const std::string&, Tensor<double>&) const;

}  // namespace lesionaid
