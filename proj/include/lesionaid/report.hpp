// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Learning-curve rendering and run summaries.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lesionaid/vit.hpp"

namespace lesionaid {

struct Series {
  std::vector<double> x, y;
  std::array<std::uint8_t, 3> color{0, 0, 0};
};

// Side-by-side panels, each autoscaled to its series. Single points are
// drawn as markers. No text is rendered.
void render_panels(const std::filesystem::path& png, const std::vector<std::vector<Series>>& panels,
                   std::size_t panel_width = 320, std::size_t panel_height = 240);

// Loss panel and accuracy panel, train in blue and validation in orange.
void render_training_curves(const TrainReport& report, const std::filesystem::path& png);

struct RunSummary {
  std::string text;
  std::vector<std::string> warnings;
  std::vector<std::filesystem::path> images;
};

// Scans `run_dir` for training reports, GAN logs and FID records, renders a
// curve PNG per report into `out_dir` and writes summary.txt there.
RunSummary report_run(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);

}  // namespace lesionaid
