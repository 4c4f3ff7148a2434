// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Named-array container. Layout, all little endian:
//   "LSNAID01" | u32 count | count x { u16 name_len | name | u8 dtype (0=f32, 1=f64)
//                                       | u8 ndim | ndim x u32 dim | raw data }

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lesionaid/tensor.hpp"

namespace lesionaid {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  Shape shape;
  std::variant<std::vector<float>, std::vector<double>> values;
};

class Checkpoint {
 public:
  template <typename T>
  void put(const std::string& name, const Shape& shape, std::span<const T> values);
  template <typename T>
  void put(const std::string& name, const Tensor<T>& t) {
    put<T>(name, t.shape(), t.data());
  }

  bool contains(const std::string& name) const;
  const NamedArray& at(const std::string& name) const;
  // Values converted to T; throws when missing or the shape differs.
  template <typename T>
  std::vector<T> get(const std::string& name, const Shape& expected) const;
  // Copies into an existing tensor of matching shape.
  template <typename T>
  void load_into(const std::string& name, Tensor<T>& dst) const;

  const std::vector<NamedArray>& arrays() const { return arrays_; }

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(std::span<const std::uint8_t> bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<NamedArray> arrays_;
};

}  // namespace lesionaid
