// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace lesionaid {

// Minimal comma-separated reader: header row, no quoting, CR tolerated.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index, or -1.
  int column(const std::string& name) const;
};

std::vector<std::string> split_csv_line(const std::string& line);
CsvTable read_csv(const std::filesystem::path& path);

// Locale-independent shortest round-trip formatting.
std::string format_number(double v);

}  // namespace lesionaid
